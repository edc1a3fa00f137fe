#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace insgen {

struct PlotSeries {
  std::string label;
  std::string color;
  std::vector<std::pair<double, double>> points;
};

// Scatter of all series over shared axes. Textual output with fixed number
// formatting, so files diff cleanly across identical runs.
void write_scatter_svg(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
                       const std::string& title);

// Polyline chart; log_y switches the vertical axis to log10 (non-positive
// values are dropped).
void write_line_svg(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
                    const std::string& title, bool log_y = false);

}  // namespace insgen
