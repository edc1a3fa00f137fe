#include "insgen/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace insgen {

namespace {

Eigen::MatrixXd to_eigen(const std::vector<double>& m, int dim) {
  Eigen::MatrixXd out(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) out(i, j) = m[static_cast<std::size_t>(i) * dim + j];
  }
  return out;
}

std::vector<double> from_eigen(const Eigen::MatrixXd& m) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()) * m.cols());
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i) * m.cols() + j] = m(i, j);
  }
  return out;
}

Eigen::MatrixXd sqrt_psd_eigen(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s);
  if (solver.info() != Eigen::Success) throw std::runtime_error("matrix_sqrt_psd: eigendecomposition failed");
  Eigen::VectorXd vals = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * vals.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

GaussianFit fit_gaussian(const Tensor& samples) {
  const int m = samples.rows(), dim = samples.cols();
  if (m < 2) throw std::invalid_argument("fit_gaussian: need at least 2 samples, got " + std::to_string(m));
  GaussianFit fit;
  fit.dim = dim;
  fit.n = m;
  fit.mean.assign(dim, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < dim; ++j) fit.mean[j] += samples.at(i, j);
  }
  for (double& v : fit.mean) v /= m;

  fit.cov.assign(static_cast<std::size_t>(dim) * dim, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int a = 0; a < dim; ++a) {
      const double da = samples.at(i, a) - fit.mean[a];
      for (int b = a; b < dim; ++b) {
        fit.cov[static_cast<std::size_t>(a) * dim + b] += da * (samples.at(i, b) - fit.mean[b]);
      }
    }
  }
  for (int a = 0; a < dim; ++a) {
    for (int b = a; b < dim; ++b) {
      const double v = fit.cov[static_cast<std::size_t>(a) * dim + b] / m;
      fit.cov[static_cast<std::size_t>(a) * dim + b] = v;
      fit.cov[static_cast<std::size_t>(b) * dim + a] = v;
    }
  }
  return fit;
}

std::vector<double> matrix_sqrt_psd(const std::vector<double>& matrix, int dim) {
  if (static_cast<int>(matrix.size()) != dim * dim) {
    throw std::invalid_argument("matrix_sqrt_psd: matrix size does not match dim");
  }
  double norm = 0.0, asym = 0.0;
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      const double v = matrix[static_cast<std::size_t>(i) * dim + j];
      norm += v * v;
      const double w = matrix[static_cast<std::size_t>(j) * dim + i];
      asym = std::max(asym, std::abs(v - w));
    }
  }
  if (asym > 1e-8 * (1.0 + std::sqrt(norm))) {
    throw std::invalid_argument("matrix_sqrt_psd: input is not symmetric (max asymmetry " +
                                std::to_string(asym) + ")");
  }
  Eigen::MatrixXd s = to_eigen(matrix, dim);
  s = 0.5 * (s + s.transpose().eval());
  return from_eigen(sqrt_psd_eigen(s));
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  if (a.dim != b.dim) {
    throw std::invalid_argument("frechet_distance: dimension mismatch " + std::to_string(a.dim) +
                                " vs " + std::to_string(b.dim));
  }
  const int dim = a.dim;
  double mean_sq = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double d = a.mean[i] - b.mean[i];
    mean_sq += d * d;
  }
  Eigen::MatrixXd sa = to_eigen(a.cov, dim);
  Eigen::MatrixXd sb = to_eigen(b.cov, dim);
  sa = 0.5 * (sa + sa.transpose().eval());
  sb = 0.5 * (sb + sb.transpose().eval());
  // Tr((Sa Sb)^(1/2)) computed through the symmetric form
  // (Sa^(1/2) Sb Sa^(1/2))^(1/2).
  Eigen::MatrixXd root_a = sqrt_psd_eigen(sa);
  Eigen::MatrixXd inner = root_a * sb * root_a;
  inner = 0.5 * (inner + inner.transpose().eval());
  const double tr_cross = sqrt_psd_eigen(inner).trace();
  const double d2 = mean_sq + sa.trace() + sb.trace() - 2.0 * tr_cross;
  return std::max(0.0, d2);
}

ModeCoverage mode_coverage(const Tensor& samples, const Tensor& centers, double sigma,
                           double hq_radius_mult) {
  if (centers.rows() < 1) throw std::invalid_argument("mode_coverage: centers must be non-empty");
  const int n = samples.rows(), k = centers.rows(), dim = samples.cols();
  const double radius = hq_radius_mult * sigma;
  std::vector<bool> hit(k, false);
  int hq = 0;
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      double d2 = 0.0;
      for (int j = 0; j < dim; ++j) {
        const double d = samples.at(i, j) - centers.at(c, j);
        d2 += d * d;
      }
      if (d2 < best_d2) {
        best_d2 = d2;
        best = c;
      }
    }
    if (std::sqrt(best_d2) <= radius) {
      hit[best] = true;
      ++hq;
    }
  }
  ModeCoverage out;
  for (bool h : hit) out.covered += h ? 1 : 0;
  out.hq_fraction = n > 0 ? static_cast<double>(hq) / n : 0.0;
  return out;
}

namespace {

double mean_nn_distance(const Tensor& from, const Tensor& to) {
  const int n = from.rows(), m = to.rows(), dim = from.cols();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
      double d2 = 0.0;
      for (int k = 0; k < dim; ++k) {
        const double d = from.at(i, k) - to.at(j, k);
        d2 += d * d;
      }
      best = std::min(best, d2);
    }
    acc += std::sqrt(best);
  }
  return acc / n;
}

}  // namespace

double memorization_gap(const Tensor& fakes, const Tensor& train, const Tensor& holdout) {
  if (fakes.rows() < 1 || train.rows() < 1 || holdout.rows() < 1) {
    throw std::invalid_argument("memorization_gap: all sample sets must be non-empty");
  }
  if (fakes.cols() != train.cols() || fakes.cols() != holdout.cols()) {
    throw std::invalid_argument("memorization_gap: dimension mismatch");
  }
  return mean_nn_distance(fakes, train) - mean_nn_distance(fakes, holdout);
}

std::vector<LogitPoint> logit_trace(const std::vector<RunRecord>& records) {
  std::vector<LogitPoint> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.step, r.mean_real_logit, r.mean_fake_logit});
  return out;
}

}  // namespace insgen
