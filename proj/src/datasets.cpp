#include "insgen/datasets.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "insgen/rng.hpp"

namespace insgen {

namespace {

constexpr double kPi = 3.14159265358979323846;

Dataset sample_mixture(const Tensor& centers, double sigma, int count, std::uint64_t seed,
                       const std::string& name) {
  const int k = centers.rows(), dim = centers.cols();
  Dataset ds;
  ds.samples = Tensor::zeros({count, dim});
  ds.mode_labels.resize(count);
  RngStream base(seed, 0x646174);
  for (int i = 0; i < count; ++i) {
    RngStream rng = base.substream(static_cast<std::uint64_t>(i));
    const int mode = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(k));
    ds.mode_labels[i] = mode;
    for (int j = 0; j < dim; ++j) ds.samples.at(i, j) = centers.at(mode, j) + sigma * rng.normal();
  }
  ds.meta.name = name;
  ds.meta.seed = seed;
  ds.meta.centers = centers;
  ds.meta.sigma = sigma;
  return ds;
}

}  // namespace

Dataset make_ring(int modes, double radius, double sigma, int count, std::uint64_t seed) {
  if (modes < 1) throw std::invalid_argument("make_ring: modes must be >= 1");
  if (sigma <= 0.0) throw std::invalid_argument("make_ring: sigma must be positive");
  if (count < 1) throw std::invalid_argument("make_ring: count must be >= 1");
  Tensor centers = Tensor::zeros({modes, 2});
  for (int m = 0; m < modes; ++m) {
    const double theta = 2.0 * kPi * m / modes;
    centers.at(m, 0) = radius * std::cos(theta);
    centers.at(m, 1) = radius * std::sin(theta);
  }
  return sample_mixture(centers, sigma, count, seed, "ring" + std::to_string(modes));
}

Dataset make_grid(int side, double spacing, double sigma, int count, std::uint64_t seed) {
  if (side < 1) throw std::invalid_argument("make_grid: side must be >= 1");
  if (sigma <= 0.0) throw std::invalid_argument("make_grid: sigma must be positive");
  if (count < 1) throw std::invalid_argument("make_grid: count must be >= 1");
  Tensor centers = Tensor::zeros({side * side, 2});
  const double offset = (side - 1) / 2.0;
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      centers.at(r * side + c, 0) = spacing * (c - offset);
      centers.at(r * side + c, 1) = spacing * (r - offset);
    }
  }
  return sample_mixture(centers, sigma, count, seed, "grid" + std::to_string(side));
}

Dataset subsample(const Dataset& ds, int n, std::uint64_t seed, bool mirror) {
  const int m = ds.count();
  if (n < 1 || n > m) {
    throw std::invalid_argument("subsample: n = " + std::to_string(n) + " out of range [1, " +
                                std::to_string(m) + "]");
  }
  // Partial Fisher-Yates: the first n entries of a seeded permutation.
  std::vector<int> idx(m);
  for (int i = 0; i < m; ++i) idx[i] = i;
  RngStream rng(seed, 0x737562);
  for (int i = 0; i < n; ++i) {
    const int j = i + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(m - i));
    std::swap(idx[i], idx[j]);
  }

  const int dim = ds.dim();
  const int total = mirror ? 2 * n : n;
  Dataset out;
  out.samples = Tensor::zeros({total, dim});
  if (!ds.mode_labels.empty()) out.mode_labels.resize(total);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) out.samples.at(i, j) = ds.samples.at(idx[i], j);
    if (!ds.mode_labels.empty()) out.mode_labels[i] = ds.mode_labels[idx[i]];
  }
  if (mirror) {
    for (int i = 0; i < n; ++i) {
      out.samples.at(n + i, 0) = -ds.samples.at(idx[i], 0);
      for (int j = 1; j < dim; ++j) out.samples.at(n + i, j) = ds.samples.at(idx[i], j);
      if (!ds.mode_labels.empty()) out.mode_labels[n + i] = ds.mode_labels[idx[i]];
    }
  }
  out.meta = ds.meta;
  out.meta.name += mirror ? "-sub-mirrored" : "-sub";
  return out;
}

Dataset load_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_table: cannot open " + path.string());

  std::vector<std::vector<double>> rows;
  int expected_cols = -1;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      // Optional "# dim=<d>" header.
      const auto pos = line.find("dim=");
      if (pos != std::string::npos) expected_cols = std::stoi(line.substr(pos + 4));
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      try {
        std::size_t used = 0;
        double v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument("trailing");
        row.push_back(v);
      } catch (const std::exception&) {
        throw std::runtime_error("load_table: row " + std::to_string(line_no) + ", column " +
                                 std::to_string(col) + ": cannot parse '" + cell + "'");
      }
    }
    if (expected_cols < 0) expected_cols = static_cast<int>(row.size());
    if (static_cast<int>(row.size()) != expected_cols) {
      throw std::runtime_error("load_table: row " + std::to_string(line_no) + " has " +
                               std::to_string(row.size()) + " columns, expected " +
                               std::to_string(expected_cols));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("load_table: no samples in " + path.string());

  Dataset ds;
  ds.samples = Tensor::zeros({static_cast<int>(rows.size()), expected_cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < expected_cols; ++j) ds.samples.at(static_cast<int>(i), j) = rows[i][j];
  }
  ds.meta.name = path.filename().string();
  return ds;
}

void save_table(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_table: cannot open " + path.string() + " for writing");
  out << "# dim=" << ds.dim() << "\n";
  char buf[32];
  for (int i = 0; i < ds.count(); ++i) {
    for (int j = 0; j < ds.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.samples.at(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("save_table: write failed for " + path.string());
}

}  // namespace insgen
