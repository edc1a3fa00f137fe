#pragma once

#include <cstdint>
#include <vector>

#include "insgen/tensor.hpp"

namespace insgen {

// Moment-matched Gaussian. Covariance uses the 1/M convention.
struct GaussianFit {
  std::vector<double> mean;  // dim
  std::vector<double> cov;   // dim x dim, row-major, symmetric
  int dim = 0;
  int n = 0;
};

GaussianFit fit_gaussian(const Tensor& samples);

// Principal square root of a symmetric PSD matrix (row-major, dim x dim)
// via symmetric eigendecomposition with eigenvalues clipped at zero.
std::vector<double> matrix_sqrt_psd(const std::vector<double>& matrix, int dim);

// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)); symmetric, >= 0.
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

struct ModeCoverage {
  int covered = 0;        // modes with at least one sample within the radius
  double hq_fraction = 0; // samples within the radius of their nearest center
};

ModeCoverage mode_coverage(const Tensor& samples, const Tensor& centers, double sigma,
                           double hq_radius_mult);

// Mean nearest-neighbor distance of fakes to train minus the same to
// holdout. Strongly negative values indicate memorization of the train set.
double memorization_gap(const Tensor& fakes, const Tensor& train, const Tensor& holdout);

// One metrics row, as persisted to the run CSV.
struct RunRecord {
  std::uint64_t step = 0;
  double l_d = 0, c_r_d = 0, c_f_d = 0, r1 = 0;
  double l_g = 0, c_f_g = 0;
  double mean_real_logit = 0, mean_fake_logit = 0;
  double aug_p = 0;
  double frechet = 0;
  int mode_coverage = 0;
  double hq_fraction = 0;
};

struct LogitPoint {
  std::uint64_t step;
  double mean_real_logit;
  double mean_fake_logit;
};

std::vector<LogitPoint> logit_trace(const std::vector<RunRecord>& records);

}  // namespace insgen
