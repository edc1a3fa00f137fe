#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "insgen/datasets.hpp"
#include "insgen/metrics.hpp"
#include "insgen/rng.hpp"
#include "insgen/tensor.hpp"

using namespace insgen;

namespace {

GaussianFit diag_fit(std::vector<double> mean, std::vector<double> var) {
  GaussianFit fit;
  fit.dim = static_cast<int>(mean.size());
  fit.n = 2;
  fit.mean = std::move(mean);
  fit.cov.assign(static_cast<std::size_t>(fit.dim) * fit.dim, 0.0);
  for (int i = 0; i < fit.dim; ++i) fit.cov[static_cast<std::size_t>(i) * fit.dim + i] = var[i];
  return fit;
}

double frobenius(const std::vector<double>& m) {
  double acc = 0.0;
  for (double v : m) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace

TEST_CASE("fit_gaussian on two points") {
  Tensor samples = Tensor::from_data({2, 1}, {-1.0, 1.0});
  GaussianFit fit = fit_gaussian(samples);
  CHECK(fit.mean[0] == 0.0);
  CHECK(fit.cov[0] == doctest::Approx(1.0));  // 1/M normalization
  CHECK_THROWS_AS(fit_gaussian(Tensor::from_data({1, 1}, {5.0})), std::invalid_argument);
}

TEST_CASE("identical points give zero covariance") {
  Tensor samples = Tensor::full({5, 3}, 2.5);
  GaussianFit fit = fit_gaussian(samples);
  for (double v : fit.cov) CHECK(v == 0.0);
  for (double v : fit.mean) CHECK(v == doctest::Approx(2.5));
}

TEST_CASE("large standard-normal sample fits near the identity") {
  RngStream rng(17);
  const int n = 100000;
  Tensor samples = Tensor::zeros({n, 2});
  for (auto& v : samples.data()) v = rng.normal();
  GaussianFit fit = fit_gaussian(samples);
  CHECK(std::abs(fit.cov[0] - 1.0) < 0.03);
  CHECK(std::abs(fit.cov[3] - 1.0) < 0.03);
  CHECK(std::abs(fit.cov[1]) < 0.03);
}

TEST_CASE("frechet distance basics") {
  GaussianFit a = diag_fit({0.0}, {1.0});
  CHECK(frechet_distance(a, a) == doctest::Approx(0.0).epsilon(1e-12));

  GaussianFit b = diag_fit({1.0}, {1.0});
  CHECK(frechet_distance(a, b) == doctest::Approx(1.0).epsilon(1e-9));

  GaussianFit c = diag_fit({0.0}, {4.0});
  CHECK(frechet_distance(a, c) == doctest::Approx(1.0).epsilon(1e-9));  // (1-2)^2

  GaussianFit d2 = diag_fit({0.0, 0.0}, {1.0, 1.0});
  CHECK_THROWS_AS(frechet_distance(a, d2), std::invalid_argument);
}

TEST_CASE("frechet distance is symmetric and matches the diagonal closed form") {
  RngStream rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 1 + static_cast<int>(rng.next_u64() % 4);
    std::vector<double> ma(dim), mb(dim), va(dim), vb(dim);
    for (int i = 0; i < dim; ++i) {
      ma[i] = rng.uniform(-3, 3);
      mb[i] = rng.uniform(-3, 3);
      va[i] = rng.uniform(0.1, 4.0);
      vb[i] = rng.uniform(0.1, 4.0);
    }
    GaussianFit a = diag_fit(ma, va), b = diag_fit(mb, vb);
    double want = 0.0;
    for (int i = 0; i < dim; ++i) {
      want += (ma[i] - mb[i]) * (ma[i] - mb[i]);
      const double ds = std::sqrt(va[i]) - std::sqrt(vb[i]);
      want += ds * ds;
    }
    const double ab = frechet_distance(a, b);
    CHECK(std::abs(ab - want) < 1e-6);
    CHECK(std::abs(ab - frechet_distance(b, a)) < 1e-9);
    CHECK(ab >= 0.0);
  }
}

TEST_CASE("matrix square root basics") {
  std::vector<double> eye = {1, 0, 0, 1};
  CHECK(matrix_sqrt_psd(eye, 2) == eye);

  std::vector<double> diag = {4, 0, 0, 9};
  std::vector<double> root = matrix_sqrt_psd(diag, 2);
  CHECK(root[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(root[3] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(std::abs(root[1]) < 1e-12);

  std::vector<double> asym = {1, 0.5, -0.5, 1};
  CHECK_THROWS_AS(matrix_sqrt_psd(asym, 2), std::invalid_argument);
}

TEST_CASE("matrix square root reconstructs random PSD matrices") {
  RngStream rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 2 + static_cast<int>(rng.next_u64() % 7);  // up to 8x8
    std::vector<double> a(static_cast<std::size_t>(dim) * dim);
    for (auto& v : a) v = rng.uniform(-1, 1);
    // S = A^T A is PSD.
    std::vector<double> s(a.size(), 0.0);
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) {
        double acc = 0.0;
        for (int k = 0; k < dim; ++k) acc += a[static_cast<std::size_t>(k) * dim + i] * a[static_cast<std::size_t>(k) * dim + j];
        s[static_cast<std::size_t>(i) * dim + j] = acc;
      }
    }
    std::vector<double> r = matrix_sqrt_psd(s, dim);
    std::vector<double> rr(s.size(), 0.0);
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) {
        double acc = 0.0;
        for (int k = 0; k < dim; ++k) acc += r[static_cast<std::size_t>(i) * dim + k] * r[static_cast<std::size_t>(k) * dim + j];
        rr[static_cast<std::size_t>(i) * dim + j] = acc;
      }
    }
    std::vector<double> diff(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) diff[i] = rr[i] - s[i];
    CHECK(frobenius(diff) <= 1e-8 * (1.0 + frobenius(s)));
  }
}

TEST_CASE("mode coverage on exact and collapsed samples") {
  Dataset ring = make_ring(8, 2.0, 0.1, 10, 1);
  const Tensor& centers = *ring.meta.centers;

  ModeCoverage exact = mode_coverage(centers, centers, 0.1, 3.0);
  CHECK(exact.covered == 8);
  CHECK(exact.hq_fraction == 1.0);

  Tensor collapsed = Tensor::zeros({20, 2});
  for (int i = 0; i < 20; ++i) {
    collapsed.at(i, 0) = centers.at(0, 0);
    collapsed.at(i, 1) = centers.at(0, 1);
  }
  ModeCoverage one = mode_coverage(collapsed, centers, 0.1, 3.0);
  CHECK(one.covered == 1);
  CHECK(one.hq_fraction == 1.0);
}

TEST_CASE("ring samples cover all modes with high probability") {
  Dataset ds = make_ring(8, 2.0, 0.15, 1000, 77);
  ModeCoverage cov = mode_coverage(ds.samples, *ds.meta.centers, 0.15, 3.0);
  CHECK(cov.covered == 8);
  CHECK(cov.hq_fraction > 0.9);
}

TEST_CASE("mode coverage is permutation invariant") {
  Dataset ds = make_ring(5, 1.5, 0.2, 200, 3);
  const Tensor& centers = *ds.meta.centers;
  Tensor flipped_centers = Tensor::zeros({5, 2});
  for (int i = 0; i < 5; ++i) {
    flipped_centers.at(i, 0) = centers.at(4 - i, 0);
    flipped_centers.at(i, 1) = centers.at(4 - i, 1);
  }
  ModeCoverage a = mode_coverage(ds.samples, centers, 0.2, 3.0);
  ModeCoverage b = mode_coverage(ds.samples, flipped_centers, 0.2, 3.0);
  CHECK(a.covered == b.covered);
  CHECK(a.hq_fraction == b.hq_fraction);
}

TEST_CASE("memorization gap detects copying and clears honest sampling") {
  Dataset train = make_ring(8, 2.0, 0.15, 400, 5);
  Dataset holdout = make_ring(8, 2.0, 0.15, 400, 6);

  // Copying the train set: gap = 0 - positive = negative.
  const double copied = memorization_gap(train.samples, train.samples, holdout.samples);
  CHECK(copied < 0.0);

  // Fresh draws from the same distribution: near zero.
  Dataset fakes = make_ring(8, 2.0, 0.15, 400, 7);
  const double honest = memorization_gap(fakes.samples, train.samples, holdout.samples);
  CHECK(std::abs(honest) < 0.05);
  CHECK(std::abs(honest) < std::abs(copied) / 2.0);
}

TEST_CASE("single fake equidistant to both sets has zero gap") {
  Tensor fake = Tensor::from_data({1, 2}, {0.0, 0.0});
  Tensor train = Tensor::from_data({1, 2}, {1.0, 0.0});
  Tensor holdout = Tensor::from_data({1, 2}, {0.0, 1.0});
  CHECK(memorization_gap(fake, train, holdout) == 0.0);
}

TEST_CASE("logit trace extracts the series") {
  std::vector<RunRecord> records;
  for (int i = 0; i < 5; ++i) {
    RunRecord r;
    r.step = static_cast<std::uint64_t>(i * 100);
    r.mean_real_logit = 0.5;
    r.mean_fake_logit = -0.5;
    records.push_back(r);
  }
  auto trace = logit_trace(records);
  REQUIRE(trace.size() == 5);
  for (const auto& p : trace) {
    CHECK(p.mean_real_logit == 0.5);
    CHECK(p.mean_fake_logit == -0.5);
  }
  CHECK(trace[3].step == 300);

  // Separation statistic on a hand-built fixture.
  std::vector<RunRecord> fixture;
  const double reals[3] = {1.0, 2.0, 3.0};
  const double fakes[3] = {0.0, -1.0, 1.0};
  for (int i = 0; i < 3; ++i) {
    RunRecord r;
    r.step = static_cast<std::uint64_t>(i);
    r.mean_real_logit = reals[i];
    r.mean_fake_logit = fakes[i];
    fixture.push_back(r);
  }
  double separation = 0.0;
  for (const auto& p : logit_trace(fixture)) separation += p.mean_real_logit - p.mean_fake_logit;
  separation /= 3.0;
  CHECK(separation == doctest::Approx(2.0));  // hand value: mean of {1,3,2}
}
