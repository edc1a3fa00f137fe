#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "insgen/tensor.hpp"

namespace insgen {

struct DatasetMeta {
  std::string name;
  std::uint64_t seed = 0;
  // Mixture ground truth, present for synthetic generators.
  std::optional<Tensor> centers;  // (K, dim)
  double sigma = 0.0;
};

// Immutable sample collection. mode_labels, when present, give the
// generating mixture component per sample.
struct Dataset {
  Tensor samples;  // (M, dim)
  std::vector<int> mode_labels;
  DatasetMeta meta;

  int count() const { return samples.rows(); }
  int dim() const { return samples.cols(); }
};

// `count` points from `modes` Gaussians with centers equally spaced on a
// circle of the given radius. Sample i depends only on (seed, i), so the
// first k samples of a larger dataset match the k-sample dataset.
Dataset make_ring(int modes, double radius, double sigma, int count, std::uint64_t seed);

// Same contract on a side x side grid centered at the origin.
Dataset make_grid(int side, double spacing, double sigma, int count, std::uint64_t seed);

// n samples drawn without replacement. With mirror, a copy of each kept
// sample with its first coordinate sign-flipped is appended (size 2n).
Dataset subsample(const Dataset& ds, int n, std::uint64_t seed, bool mirror);

// Numeric CSV, one sample per row, optional leading "# dim=<d>" line.
Dataset load_table(const std::filesystem::path& path);
void save_table(const Dataset& ds, const std::filesystem::path& path);

}  // namespace insgen
