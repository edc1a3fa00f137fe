#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "insgen/rng.hpp"
#include "insgen/tensor.hpp"

using namespace insgen;

namespace {

Tensor random_tensor(std::vector<int> shape, RngStream& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul with identity is a no-op") {
  RngStream rng(1);
  Tensor a = random_tensor({3, 5}, rng);
  Graph g;
  Tensor out = g.matmul(Tensor::identity(3), a);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(out.data()[i] == doctest::Approx(a.data()[i]).epsilon(1e-15));
}

TEST_CASE("leaky-relu definition") {
  Graph g;
  Tensor out = g.leaky_relu(Tensor::row({-1.0, 0.0, 2.0}), 0.2);
  CHECK(out.data()[0] == doctest::Approx(-0.2));
  CHECK(out.data()[1] == 0.0);
  CHECK(out.data()[2] == 2.0);
}

TEST_CASE("l2-normalize on a 3-4-5 row") {
  Graph g;
  Tensor out = g.l2_normalize_rows(Tensor::row({3.0, 4.0}));
  CHECK(out.data()[0] == doctest::Approx(0.6));
  CHECK(out.data()[1] == doctest::Approx(0.8));
}

TEST_CASE("l2-normalize rows have unit norm; zero row stays zero") {
  RngStream rng(3);
  Tensor x = random_tensor({4, 6}, rng);
  for (int j = 0; j < 6; ++j) x.at(2, j) = 0.0;
  Graph g;
  Tensor out = g.l2_normalize_rows(x);
  for (int i = 0; i < 4; ++i) {
    double nsq = 0.0;
    for (int j = 0; j < 6; ++j) nsq += out.at(i, j) * out.at(i, j);
    if (i == 2) {
      CHECK(nsq == 0.0);
    } else {
      CHECK(std::abs(std::sqrt(nsq) - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("zero row passes zero gradient through l2-normalize") {
  Tensor x = Tensor::zeros({1, 3}, true);
  Graph g;
  Tensor loss = g.sum(g.l2_normalize_rows(x));
  g.backward(loss);
  for (double v : x.grad()) CHECK(v == 0.0);
}

TEST_CASE("backward of sum of squares") {
  Tensor x = Tensor::row({1.0, 2.0}, true);
  Graph g;
  Tensor loss = g.sum(g.mul(x, x));
  g.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward of mean") {
  Tensor x = Tensor::row({1.0, 2.0, 3.0, 4.0}, true);
  Graph g;
  g.backward(g.mean(x));
  for (double v : x.grad()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("log-sum-exp gradient is the softmax") {
  Tensor x = Tensor::row({0.0, 0.0}, true);
  Graph g;
  g.backward(g.sum(g.logsumexp_rows(x)));
  CHECK(x.grad()[0] == doctest::Approx(0.5));
  CHECK(x.grad()[1] == doctest::Approx(0.5));
}

TEST_CASE("repeated backward accumulates additively") {
  Tensor x = Tensor::row({1.5, -0.5}, true);
  Graph g;
  Tensor loss = g.sum(g.mul(x, x));
  g.backward(loss);
  std::vector<double> once = x.grad();
  g.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(2.0 * once[i]));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x = Tensor::row({1.0, 2.0}, true);
  Graph g;
  Tensor y = g.mul(x, x);
  CHECK_THROWS_AS(g.backward(y), std::invalid_argument);
}

TEST_CASE("shape mismatch diagnostics name the op and both shapes") {
  Graph g;
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  try {
    g.matmul(a, b);
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(4,5)") != std::string::npos);
  }
  CHECK_THROWS_AS(g.add(a, b), std::invalid_argument);
}

TEST_CASE("strict mode rejects non-finite inputs") {
  Graph g;
  g.set_strict(true);
  Tensor a = Tensor::row({1.0, std::nan("")});
  CHECK_THROWS_AS(g.softplus(a), std::domain_error);
  g.set_strict(false);
  CHECK_NOTHROW(g.softplus(a));
}

TEST_CASE("scalar broadcasting in add/sub/mul") {
  Graph g;
  Tensor a = Tensor::row({1.0, 2.0, 3.0}, true);
  Tensor c = Tensor::scalar(2.0);
  c.set_requires_grad(true);
  Tensor s = g.add(a, c);
  CHECK(s.data()[2] == doctest::Approx(5.0));
  Tensor m = g.mul(c, a);
  CHECK(m.data()[0] == doctest::Approx(2.0));
  Tensor d = g.sub(a, c);
  CHECK(d.data()[1] == doctest::Approx(0.0));
  g.backward(g.sum(m));
  CHECK(c.grad()[0] == doctest::Approx(1.0 + 2.0 + 3.0));
}

TEST_CASE("gather-rows selects and scatters gradient with repeats") {
  Tensor x = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  Graph g;
  Tensor out = g.gather_rows(x, {2, 0, 2});
  CHECK(out.rows() == 3);
  CHECK(out.at(0, 0) == 5.0);
  CHECK(out.at(1, 1) == 2.0);
  g.backward(g.sum(out));
  CHECK(x.grad()[0] == doctest::Approx(1.0));  // row 0 used once
  CHECK(x.grad()[2] == doctest::Approx(0.0));  // row 1 unused
  CHECK(x.grad()[4] == doctest::Approx(2.0));  // row 2 used twice
  CHECK_THROWS_AS(g.gather_rows(x, {7}), std::out_of_range);
}

TEST_CASE("concat rows and cols round values through") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  Tensor b = Tensor::from_data({1, 2}, {5, 6});
  Graph g;
  Tensor v = g.concat_rows(a, b);
  CHECK(v.rows() == 3);
  CHECK(v.at(2, 1) == 6.0);
  Tensor c = Tensor::from_data({2, 1}, {9, 8});
  Tensor h = g.concat_cols(a, c);
  CHECK(h.cols() == 3);
  CHECK(h.at(0, 2) == 9.0);
  CHECK(h.at(1, 0) == 3.0);
}

TEST_CASE("transpose forward and gradient") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Graph g;
  Tensor t = g.transpose(a);
  CHECK(t.rows() == 3);
  CHECK(t.at(2, 1) == 6.0);
  Tensor w = Tensor::from_data({3, 2}, {1, 0, 0, 1, 1, 1});
  g.backward(g.sum(g.mul(t, w)));
  CHECK(a.grad()[0] == doctest::Approx(1.0));
  CHECK(a.grad()[2] == doctest::Approx(1.0));
}

TEST_CASE("grad_check: sum of squares is exact to first order") {
  auto f = [](Graph& g, const Tensor& x) { return g.sum(g.mul(x, x)); };
  double err = grad_check(f, Tensor::row({1.0, 2.0, 3.0}), 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check: softplus derivative at zero is one half") {
  Tensor x = Tensor::scalar(0.0);
  x.set_requires_grad(true);
  Graph g;
  g.backward(g.sum(g.softplus(x)));
  CHECK(x.grad()[0] == doctest::Approx(0.5));
  auto f = [](Graph& gg, const Tensor& p) { return gg.sum(gg.softplus(p)); };
  CHECK(grad_check(f, Tensor::scalar(0.0), 1e-5) < 1e-4);
}

// Every differentiable op kind, checked against central differences at
// random points.
TEST_CASE("grad_check passes for all op kinds at random points") {
  RngStream rng(2024);
  const double kStep = 1e-5;
  const double kTol = 1e-4;

  struct Case {
    const char* name;
    GraphBuilder f;
    std::vector<int> shape;
    double lo, hi;
  };

  Tensor mm_const = random_tensor({4, 3}, rng);
  Tensor ew_const = random_tensor({3, 4}, rng);
  Tensor dot_const = random_tensor({3, 4}, rng);
  Tensor cat_const = random_tensor({2, 4}, rng);
  Tensor catc_const = random_tensor({3, 2}, rng);
  std::vector<double> aff_mats, aff_offs;
  for (int i = 0; i < 3 * 3 * 3; ++i) aff_mats.push_back(rng.uniform(-1, 1));
  for (int i = 0; i < 3 * 3; ++i) aff_offs.push_back(rng.uniform(-1, 1));

  std::vector<Case> cases = {
      {"matmul", [&](Graph& g, const Tensor& x) { return g.sum(g.matmul(x, mm_const)); }, {2, 4}, -2, 2},
      {"add", [&](Graph& g, const Tensor& x) { return g.sum(g.mul(g.add(x, ew_const), ew_const)); }, {3, 4}, -2, 2},
      {"sub", [&](Graph& g, const Tensor& x) { return g.sum(g.mul(g.sub(ew_const, x), ew_const)); }, {3, 4}, -2, 2},
      {"mul", [&](Graph& g, const Tensor& x) { return g.sum(g.mul(x, ew_const)); }, {3, 4}, -2, 2},
      {"scale", [&](Graph& g, const Tensor& x) { return g.sum(g.scale(x, -1.7)); }, {3, 4}, -2, 2},
      {"leaky-relu", [&](Graph& g, const Tensor& x) { return g.sum(g.mul(g.leaky_relu(x, 0.2), ew_const)); }, {3, 4}, -2, 2},
      {"softplus", [&](Graph& g, const Tensor& x) { return g.sum(g.mul(g.softplus(x), ew_const)); }, {3, 4}, -2, 2},
      {"exp", [&](Graph& g, const Tensor& x) { return g.sum(g.mul(g.exp(x), ew_const)); }, {3, 4}, -1, 1},
      {"log", [&](Graph& g, const Tensor& x) { return g.sum(g.mul(g.log(x), ew_const)); }, {3, 4}, 0.5, 2.0},
      {"sum", [&](Graph& g, const Tensor& x) { return g.sum(x); }, {3, 4}, -2, 2},
      {"mean", [&](Graph& g, const Tensor& x) { return g.mean(x); }, {3, 4}, -2, 2},
      {"l2-normalize", [&](Graph& g, const Tensor& x) { return g.sum(g.mul(g.l2_normalize_rows(x), ew_const)); }, {3, 4}, 0.3, 2.0},
      {"dot-product", [&](Graph& g, const Tensor& x) { return g.sum(g.square(g.rows_dot(x, dot_const))); }, {3, 4}, -2, 2},
      {"log-sum-exp", [&](Graph& g, const Tensor& x) { return g.sum(g.logsumexp_rows(x)); }, {3, 4}, -2, 2},
      {"square", [&](Graph& g, const Tensor& x) { return g.sum(g.square(x)); }, {3, 4}, -2, 2},
      {"gather-rows", [&](Graph& g, const Tensor& x) { return g.sum(g.square(g.gather_rows(x, {1, 0, 1}))); }, {3, 4}, -2, 2},
      {"concat-rows", [&](Graph& g, const Tensor& x) { return g.sum(g.square(g.concat_rows(x, cat_const))); }, {3, 4}, -2, 2},
      {"concat-cols", [&](Graph& g, const Tensor& x) { return g.sum(g.square(g.concat_cols(x, catc_const))); }, {3, 4}, -2, 2},
      {"transpose", [&](Graph& g, const Tensor& x) { return g.sum(g.matmul(g.transpose(x), mm_const.detach())); }, {4, 3}, -2, 2},
      {"row-affine", [&](Graph& g, const Tensor& x) { return g.sum(g.square(g.row_affine(x, aff_mats, aff_offs))); }, {3, 3}, -2, 2},
  };

  for (const auto& c : cases) {
    CAPTURE(c.name);
    for (int trial = 0; trial < 10; ++trial) {
      Tensor point = random_tensor(c.shape, rng, c.lo, c.hi);
      double err = grad_check(c.f, point, kStep);
      CHECK_MESSAGE(err < kTol, c.name << " trial " << trial << " err=" << err);
    }
  }
}

TEST_CASE("pure evaluations record no nodes") {
  Graph g;
  Tensor a = Tensor::row({1.0, 2.0});
  Tensor b = Tensor::row({3.0, 4.0});
  g.add(a, b);
  g.matmul(Tensor::identity(2), Tensor::zeros({2, 2}));
  CHECK(g.node_count() == 0);
  Tensor c = Tensor::row({1.0, 1.0}, true);
  g.add(a, c);
  CHECK(g.node_count() == 1);
}

TEST_CASE("detach breaks gradient linkage") {
  Tensor x = Tensor::row({2.0, 3.0}, true);
  Graph g;
  Tensor y = g.mul(x, x).detach();
  CHECK_FALSE(y.requires_grad());
  Tensor z = g.sum(g.mul(y, y));
  g.backward(z);
  CHECK_FALSE(x.has_grad());
}
