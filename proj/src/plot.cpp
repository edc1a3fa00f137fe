#include "insgen/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace insgen {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 480;
constexpr int kMargin = 48;

struct Bounds {
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -std::numeric_limits<double>::infinity();
  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -std::numeric_limits<double>::infinity();

  void grow(double x, double y) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  void pad() {
    if (!std::isfinite(xmin)) {
      xmin = 0;
      xmax = 1;
      ymin = 0;
      ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double dx = 0.05 * (xmax - xmin), dy = 0.05 * (ymax - ymin);
    xmin -= dx;
    xmax += dx;
    ymin -= dy;
    ymax += dy;
  }
  double px(double x) const { return kMargin + (x - xmin) / (xmax - xmin) * (kWidth - 2 * kMargin); }
  double py(double y) const { return kHeight - kMargin - (y - ymin) / (ymax - ymin) * (kHeight - 2 * kMargin); }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::ofstream open_svg(const std::filesystem::path& path, const std::string& title) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">"
      << title << "</text>\n";
  return out;
}

void draw_axes(std::ofstream& out, const Bounds& b) {
  out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kWidth - 2 * kMargin
      << "\" height=\"" << kHeight - 2 * kMargin
      << "\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n";
  out << "<text x=\"" << kMargin << "\" y=\"" << kHeight - kMargin + 16
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(b.xmin) << "</text>\n";
  out << "<text x=\"" << kWidth - kMargin << "\" y=\"" << kHeight - kMargin + 16
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(b.xmax)
      << "</text>\n";
  out << "<text x=\"" << kMargin - 4 << "\" y=\"" << kHeight - kMargin
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(b.ymin)
      << "</text>\n";
  out << "<text x=\"" << kMargin - 4 << "\" y=\"" << kMargin + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(b.ymax)
      << "</text>\n";
}

void draw_legend(std::ofstream& out, const std::vector<PlotSeries>& series) {
  int y = kMargin + 14;
  for (const auto& s : series) {
    out << "<circle cx=\"" << kWidth - kMargin - 100 << "\" cy=\"" << y - 4 << "\" r=\"4\" fill=\""
        << s.color << "\"/>\n";
    out << "<text x=\"" << kWidth - kMargin - 90 << "\" y=\"" << y
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.label << "</text>\n";
    y += 16;
  }
}

}  // namespace

void write_scatter_svg(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
                       const std::string& title) {
  Bounds b;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (std::isfinite(x) && std::isfinite(y)) b.grow(x, y);
    }
  }
  b.pad();
  std::ofstream out = open_svg(path, title);
  draw_axes(out, b);
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      out << "<circle cx=\"" << fmt(b.px(x)) << "\" cy=\"" << fmt(b.py(y))
          << "\" r=\"2\" fill=\"" << s.color << "\" fill-opacity=\"0.6\"/>\n";
    }
  }
  draw_legend(out, series);
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_line_svg(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
                    const std::string& title, bool log_y) {
  auto transform = [log_y](double y) { return log_y ? std::log10(y) : y; };
  Bounds b;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (log_y && y <= 0) continue;
      b.grow(x, transform(y));
    }
  }
  b.pad();
  std::ofstream out = open_svg(path, log_y ? title + " (log scale)" : title);
  draw_axes(out, b);
  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (log_y && y <= 0) continue;
      out << fmt(b.px(x)) << "," << fmt(b.py(transform(y))) << " ";
    }
    out << "\"/>\n";
  }
  draw_legend(out, series);
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace insgen
