#include "insgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace insgen {

namespace {

std::size_t numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

void validate_shape(const std::vector<int>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must not be empty");
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
  }
}

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

// ==================== Tensor ====================

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  validate_shape(shape);
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->data.assign(numel(shape), 0.0);
  t.impl_->shape = std::move(shape);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  validate_shape(shape);
  if (numel(shape) != data.size()) {
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(data);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value) { return from_data({1, 1}, {value}); }

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  int n = static_cast<int>(values.size());
  return from_data({1, n}, std::move(values), requires_grad);
}

Tensor Tensor::column(std::vector<double> values, bool requires_grad) {
  int n = static_cast<int>(values.size());
  return from_data({n, 1}, std::move(values), requires_grad);
}

Tensor Tensor::identity(int n) {
  Tensor t = zeros({n, n});
  for (int i = 0; i < n; ++i) t.impl_->data[static_cast<std::size_t>(i) * n + i] = 1.0;
  return t;
}

const std::vector<int>& Tensor::shape() const {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::size() const { return impl_ ? impl_->data.size() : 0; }

int Tensor::rows() const {
  const auto& s = shape();
  return s.size() >= 2 ? s[0] : 1;
}

int Tensor::cols() const {
  const auto& s = shape();
  return s.size() >= 2 ? s[1] : s[0];
}

std::vector<double>& Tensor::data() {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return impl_->data;
}

const std::vector<double>& Tensor::data() const {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return impl_->data;
}

double Tensor::value() const {
  if (!is_scalar()) throw std::invalid_argument("value() requires a scalar tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(int r, int c) const { return data()[static_cast<std::size_t>(r) * cols() + c]; }
double& Tensor::at(int r, int c) { return data()[static_cast<std::size_t>(r) * cols() + c]; }

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  impl_->requires_grad = value;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad.has_value(); }

std::vector<double>& Tensor::grad() {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  if (!impl_->grad) impl_->grad.emplace(impl_->data.size(), 0.0);
  return *impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient; run backward first");
  return *impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_ && impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), 0.0);
}

Tensor Tensor::clone(bool requires_grad) const {
  if (!impl_) return Tensor();
  return from_data(impl_->shape, impl_->data, requires_grad);
}

bool Tensor::all_finite() const {
  if (!impl_) return true;
  for (double v : impl_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ==================== Graph: forward ops ====================

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "elementwise-mul";
    case OpKind::Scale: return "scalar-mul";
    case OpKind::LeakyRelu: return "leaky-relu";
    case OpKind::Softplus: return "softplus";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::L2NormalizeRows: return "l2-normalize";
    case OpKind::RowsDot: return "dot-product";
    case OpKind::LogSumExpRows: return "log-sum-exp";
    case OpKind::Square: return "square";
    case OpKind::GatherRows: return "gather-rows";
    case OpKind::ConcatRows: return "concat-rows";
    case OpKind::ConcatCols: return "concat-cols";
    case OpKind::Transpose: return "transpose";
    case OpKind::RowAffine: return "row-affine";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_error(OpKind kind, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op_kind_name(kind)) + ": shape mismatch " +
                              shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank2(OpKind kind, const Tensor& t) {
  if (t.shape().size() != 2) {
    throw std::invalid_argument(std::string(op_kind_name(kind)) + ": expected a rank-2 tensor, got " +
                                shape_str(t.shape()));
  }
}

}  // namespace

void Graph::check_finite(OpKind kind, const Tensor& t) const {
  if (!strict_) return;
  const auto& d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) {
      throw std::domain_error(std::string(op_kind_name(kind)) + ": non-finite input at index " +
                              std::to_string(i));
    }
  }
}

Tensor Graph::finish(Node node) {
  bool track = false;
  for (const Tensor& in : node.inputs) track = track || in.requires_grad();
  node.output.set_requires_grad(track);
  Tensor out = node.output;
  if (track) nodes_.push_back(std::move(node));
  return out;
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  require_rank2(OpKind::MatMul, a);
  require_rank2(OpKind::MatMul, b);
  if (a.cols() != b.rows()) shape_error(OpKind::MatMul, a, b);
  check_finite(OpKind::MatMul, a);
  check_finite(OpKind::MatMul, b);
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (int i = 0; i < m; ++i) {
    for (int l = 0; l < k; ++l) {
      const double av = pa[static_cast<std::size_t>(i) * k + l];
      if (av == 0.0) continue;
      const double* brow = pb + static_cast<std::size_t>(l) * n;
      double* orow = po + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return finish({OpKind::MatMul, {a, b}, out});
}

namespace {

enum class EwKind { Add, Sub, Mul };

double ew_apply(EwKind k, double x, double y) {
  switch (k) {
    case EwKind::Add: return x + y;
    case EwKind::Sub: return x - y;
    case EwKind::Mul: return x * y;
  }
  return 0.0;
}

}  // namespace

// Shared forward for add/sub/mul with scalar-with-tensor broadcasting only.
static Tensor elementwise_forward(OpKind op, EwKind k, const Tensor& a, const Tensor& b) {
  Tensor out;
  if (a.shape() == b.shape()) {
    out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = ew_apply(k, a.data()[i], b.data()[i]);
  } else if (b.is_scalar()) {
    out = Tensor::zeros(a.shape());
    const double bv = b.data()[0];
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = ew_apply(k, a.data()[i], bv);
  } else if (a.is_scalar()) {
    out = Tensor::zeros(b.shape());
    const double av = a.data()[0];
    for (std::size_t i = 0; i < b.size(); ++i) out.data()[i] = ew_apply(k, av, b.data()[i]);
  } else {
    shape_error(op, a, b);
  }
  return out;
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  check_finite(OpKind::Add, a);
  check_finite(OpKind::Add, b);
  return finish({OpKind::Add, {a, b}, elementwise_forward(OpKind::Add, EwKind::Add, a, b)});
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
  check_finite(OpKind::Sub, a);
  check_finite(OpKind::Sub, b);
  return finish({OpKind::Sub, {a, b}, elementwise_forward(OpKind::Sub, EwKind::Sub, a, b)});
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
  check_finite(OpKind::Mul, a);
  check_finite(OpKind::Mul, b);
  return finish({OpKind::Mul, {a, b}, elementwise_forward(OpKind::Mul, EwKind::Mul, a, b)});
}

Tensor Graph::scale(const Tensor& a, double factor) {
  check_finite(OpKind::Scale, a);
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = factor * a.data()[i];
  Node node{OpKind::Scale, {a}, out};
  node.param = factor;
  return finish(std::move(node));
}

Tensor Graph::leaky_relu(const Tensor& a, double slope) {
  check_finite(OpKind::LeakyRelu, a);
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    out.data()[i] = x > 0 ? x : slope * x;
  }
  Node node{OpKind::LeakyRelu, {a}, out};
  node.param = slope;
  return finish(std::move(node));
}

Tensor Graph::softplus(const Tensor& a) {
  check_finite(OpKind::Softplus, a);
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = stable_softplus(a.data()[i]);
  return finish({OpKind::Softplus, {a}, out});
}

Tensor Graph::exp(const Tensor& a) {
  check_finite(OpKind::Exp, a);
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = std::exp(a.data()[i]);
  return finish({OpKind::Exp, {a}, out});
}

Tensor Graph::log(const Tensor& a) {
  check_finite(OpKind::Log, a);
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = std::log(a.data()[i]);
  return finish({OpKind::Log, {a}, out});
}

Tensor Graph::sum(const Tensor& a) {
  check_finite(OpKind::Sum, a);
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return finish({OpKind::Sum, {a}, Tensor::scalar(acc)});
}

Tensor Graph::mean(const Tensor& a) {
  check_finite(OpKind::Mean, a);
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return finish({OpKind::Mean, {a}, Tensor::scalar(acc / static_cast<double>(a.size()))});
}

Tensor Graph::l2_normalize_rows(const Tensor& a) {
  require_rank2(OpKind::L2NormalizeRows, a);
  check_finite(OpKind::L2NormalizeRows, a);
  const int r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros({r, c});
  for (int i = 0; i < r; ++i) {
    double nsq = 0.0;
    for (int j = 0; j < c; ++j) nsq += a.at(i, j) * a.at(i, j);
    const double norm = std::sqrt(nsq);
    if (norm > 0.0) {
      for (int j = 0; j < c; ++j) out.at(i, j) = a.at(i, j) / norm;
    }
  }
  return finish({OpKind::L2NormalizeRows, {a}, out});
}

Tensor Graph::rows_dot(const Tensor& a, const Tensor& b) {
  require_rank2(OpKind::RowsDot, a);
  require_rank2(OpKind::RowsDot, b);
  if (a.shape() != b.shape()) shape_error(OpKind::RowsDot, a, b);
  check_finite(OpKind::RowsDot, a);
  check_finite(OpKind::RowsDot, b);
  const int r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros({r, 1});
  for (int i = 0; i < r; ++i) {
    double acc = 0.0;
    for (int j = 0; j < c; ++j) acc += a.at(i, j) * b.at(i, j);
    out.at(i, 0) = acc;
  }
  return finish({OpKind::RowsDot, {a, b}, out});
}

Tensor Graph::logsumexp_rows(const Tensor& a) {
  require_rank2(OpKind::LogSumExpRows, a);
  check_finite(OpKind::LogSumExpRows, a);
  const int r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros({r, 1});
  for (int i = 0; i < r; ++i) {
    double m = a.at(i, 0);
    for (int j = 1; j < c; ++j) m = std::max(m, a.at(i, j));
    double acc = 0.0;
    for (int j = 0; j < c; ++j) acc += std::exp(a.at(i, j) - m);
    out.at(i, 0) = m + std::log(acc);
  }
  return finish({OpKind::LogSumExpRows, {a}, out});
}

Tensor Graph::square(const Tensor& a) {
  check_finite(OpKind::Square, a);
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * a.data()[i];
  return finish({OpKind::Square, {a}, out});
}

Tensor Graph::gather_rows(const Tensor& a, const std::vector<int>& indices) {
  require_rank2(OpKind::GatherRows, a);
  check_finite(OpKind::GatherRows, a);
  if (indices.empty()) throw std::invalid_argument("gather-rows: empty index list");
  const int r = a.rows(), c = a.cols();
  for (int idx : indices) {
    if (idx < 0 || idx >= r) {
      throw std::out_of_range("gather-rows: index " + std::to_string(idx) + " out of range for " +
                              shape_str(a.shape()));
    }
  }
  Tensor out = Tensor::zeros({static_cast<int>(indices.size()), c});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    for (int j = 0; j < c; ++j) out.at(static_cast<int>(i), j) = a.at(indices[i], j);
  }
  Node node{OpKind::GatherRows, {a}, out};
  node.indices = indices;
  return finish(std::move(node));
}

Tensor Graph::concat_rows(const Tensor& a, const Tensor& b) {
  require_rank2(OpKind::ConcatRows, a);
  require_rank2(OpKind::ConcatRows, b);
  if (a.cols() != b.cols()) shape_error(OpKind::ConcatRows, a, b);
  check_finite(OpKind::ConcatRows, a);
  check_finite(OpKind::ConcatRows, b);
  const int c = a.cols();
  Tensor out = Tensor::zeros({a.rows() + b.rows(), c});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + a.data().size());
  return finish({OpKind::ConcatRows, {a, b}, out});
}

Tensor Graph::concat_cols(const Tensor& a, const Tensor& b) {
  require_rank2(OpKind::ConcatCols, a);
  require_rank2(OpKind::ConcatCols, b);
  if (a.rows() != b.rows()) shape_error(OpKind::ConcatCols, a, b);
  check_finite(OpKind::ConcatCols, a);
  check_finite(OpKind::ConcatCols, b);
  const int r = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor out = Tensor::zeros({r, ca + cb});
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < ca; ++j) out.at(i, j) = a.at(i, j);
    for (int j = 0; j < cb; ++j) out.at(i, ca + j) = b.at(i, j);
  }
  return finish({OpKind::ConcatCols, {a, b}, out});
}

Tensor Graph::transpose(const Tensor& a) {
  require_rank2(OpKind::Transpose, a);
  check_finite(OpKind::Transpose, a);
  const int r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros({c, r});
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  }
  return finish({OpKind::Transpose, {a}, out});
}

Tensor Graph::row_affine(const Tensor& x, const std::vector<double>& mats,
                         const std::vector<double>& offsets) {
  require_rank2(OpKind::RowAffine, x);
  check_finite(OpKind::RowAffine, x);
  const int b = x.rows(), d = x.cols();
  const std::size_t dd = static_cast<std::size_t>(d) * d;
  if (mats.size() != dd * b || offsets.size() != static_cast<std::size_t>(b) * d) {
    throw std::invalid_argument("row-affine: coefficient sizes do not match batch " + shape_str(x.shape()));
  }
  Tensor out = Tensor::zeros({b, d});
  for (int i = 0; i < b; ++i) {
    const double* A = mats.data() + i * dd;
    const double* bias = offsets.data() + static_cast<std::size_t>(i) * d;
    for (int r = 0; r < d; ++r) {
      double acc = bias[r];
      for (int c = 0; c < d; ++c) acc += A[static_cast<std::size_t>(r) * d + c] * x.at(i, c);
      out.at(i, r) = acc;
    }
  }
  Node node{OpKind::RowAffine, {x}, out};
  node.aux = mats;
  node.aux2 = offsets;
  return finish(std::move(node));
}

// ==================== Graph: backward ====================

namespace {

// Accumulation helper: adds into the grad buffer only for tracked tensors.
struct GradRef {
  Tensor t;
  bool active;
  std::vector<double>* g;
  explicit GradRef(Tensor tensor) : t(std::move(tensor)), active(t.requires_grad()) {
    g = active ? &t.grad() : nullptr;
  }
  void add(std::size_t i, double v) {
    if (active) (*g)[i] += v;
  }
};

}  // namespace

void Graph::backward_node(const Node& node) {
  if (!node.output.has_grad()) return;
  const Tensor& out_const = node.output;
  const std::vector<double>& go = out_const.grad();

  switch (node.kind) {
    case OpKind::MatMul: {
      Tensor a = node.inputs[0];
      Tensor b = node.inputs[1];
      const int m = a.rows(), k = a.cols(), n = b.cols();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        // dA = G B^T
        for (int i = 0; i < m; ++i) {
          for (int l = 0; l < k; ++l) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += go[static_cast<std::size_t>(i) * n + j] * b.at(l, j);
            ga[static_cast<std::size_t>(i) * k + l] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        // dB = A^T G
        for (int l = 0; l < k; ++l) {
          for (int i = 0; i < m; ++i) {
            const double av = a.at(i, l);
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) {
              gb[static_cast<std::size_t>(l) * n + j] += av * go[static_cast<std::size_t>(i) * n + j];
            }
          }
        }
      }
      break;
    }
    case OpKind::Add:
    case OpKind::Sub: {
      const double sign = node.kind == OpKind::Sub ? -1.0 : 1.0;
      GradRef a(node.inputs[0]), b(node.inputs[1]);
      const bool a_scalar = node.inputs[0].is_scalar() && !node.inputs[1].is_scalar();
      const bool b_scalar = node.inputs[1].is_scalar() && !node.inputs[0].is_scalar();
      for (std::size_t i = 0; i < go.size(); ++i) {
        a.add(a_scalar ? 0 : i, go[i]);
        b.add(b_scalar ? 0 : i, sign * go[i]);
      }
      break;
    }
    case OpKind::Mul: {
      const Tensor& ta = node.inputs[0];
      const Tensor& tb = node.inputs[1];
      GradRef a(ta), b(tb);
      const bool a_scalar = ta.is_scalar() && !tb.is_scalar();
      const bool b_scalar = tb.is_scalar() && !ta.is_scalar();
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double av = ta.data()[a_scalar ? 0 : i];
        const double bv = tb.data()[b_scalar ? 0 : i];
        a.add(a_scalar ? 0 : i, go[i] * bv);
        b.add(b_scalar ? 0 : i, go[i] * av);
      }
      break;
    }
    case OpKind::Scale: {
      GradRef a(node.inputs[0]);
      for (std::size_t i = 0; i < go.size(); ++i) a.add(i, node.param * go[i]);
      break;
    }
    case OpKind::LeakyRelu: {
      GradRef a(node.inputs[0]);
      const auto& x = node.inputs[0].data();
      for (std::size_t i = 0; i < go.size(); ++i) a.add(i, go[i] * (x[i] > 0 ? 1.0 : node.param));
      break;
    }
    case OpKind::Softplus: {
      GradRef a(node.inputs[0]);
      const auto& x = node.inputs[0].data();
      for (std::size_t i = 0; i < go.size(); ++i) a.add(i, go[i] * sigmoid(x[i]));
      break;
    }
    case OpKind::Exp: {
      GradRef a(node.inputs[0]);
      const auto& y = node.output.data();
      for (std::size_t i = 0; i < go.size(); ++i) a.add(i, go[i] * y[i]);
      break;
    }
    case OpKind::Log: {
      GradRef a(node.inputs[0]);
      const auto& x = node.inputs[0].data();
      for (std::size_t i = 0; i < go.size(); ++i) a.add(i, go[i] / x[i]);
      break;
    }
    case OpKind::Sum: {
      GradRef a(node.inputs[0]);
      for (std::size_t i = 0; i < node.inputs[0].size(); ++i) a.add(i, go[0]);
      break;
    }
    case OpKind::Mean: {
      GradRef a(node.inputs[0]);
      const double scale = 1.0 / static_cast<double>(node.inputs[0].size());
      for (std::size_t i = 0; i < node.inputs[0].size(); ++i) a.add(i, go[0] * scale);
      break;
    }
    case OpKind::L2NormalizeRows: {
      Tensor x = node.inputs[0];
      if (!x.requires_grad()) break;
      auto& gx = x.grad();
      const int r = x.rows(), c = x.cols();
      const auto& y = node.output.data();
      for (int i = 0; i < r; ++i) {
        double nsq = 0.0;
        for (int j = 0; j < c; ++j) nsq += x.at(i, j) * x.at(i, j);
        const double norm = std::sqrt(nsq);
        if (norm == 0.0) continue;  // zero row: zero gradient
        double gy_dot_y = 0.0;
        for (int j = 0; j < c; ++j) gy_dot_y += go[static_cast<std::size_t>(i) * c + j] * y[static_cast<std::size_t>(i) * c + j];
        for (int j = 0; j < c; ++j) {
          const std::size_t k = static_cast<std::size_t>(i) * c + j;
          gx[k] += (go[k] - gy_dot_y * y[k]) / norm;
        }
      }
      break;
    }
    case OpKind::RowsDot: {
      const Tensor& ta = node.inputs[0];
      const Tensor& tb = node.inputs[1];
      GradRef a(ta), b(tb);
      const int r = ta.rows(), c = ta.cols();
      for (int i = 0; i < r; ++i) {
        const double g = go[static_cast<std::size_t>(i)];
        for (int j = 0; j < c; ++j) {
          const std::size_t k = static_cast<std::size_t>(i) * c + j;
          a.add(k, g * tb.data()[k]);
          b.add(k, g * ta.data()[k]);
        }
      }
      break;
    }
    case OpKind::LogSumExpRows: {
      Tensor x = node.inputs[0];
      if (!x.requires_grad()) break;
      auto& gx = x.grad();
      const int r = x.rows(), c = x.cols();
      const auto& y = node.output.data();
      for (int i = 0; i < r; ++i) {
        const double g = go[static_cast<std::size_t>(i)];
        for (int j = 0; j < c; ++j) {
          const std::size_t k = static_cast<std::size_t>(i) * c + j;
          gx[k] += g * std::exp(x.data()[k] - y[static_cast<std::size_t>(i)]);
        }
      }
      break;
    }
    case OpKind::Square: {
      GradRef a(node.inputs[0]);
      const auto& x = node.inputs[0].data();
      for (std::size_t i = 0; i < go.size(); ++i) a.add(i, 2.0 * x[i] * go[i]);
      break;
    }
    case OpKind::GatherRows: {
      Tensor x = node.inputs[0];
      if (!x.requires_grad()) break;
      auto& gx = x.grad();
      const int c = x.cols();
      for (std::size_t i = 0; i < node.indices.size(); ++i) {
        for (int j = 0; j < c; ++j) {
          gx[static_cast<std::size_t>(node.indices[i]) * c + j] += go[i * c + j];
        }
      }
      break;
    }
    case OpKind::ConcatRows: {
      GradRef a(node.inputs[0]), b(node.inputs[1]);
      const std::size_t na = node.inputs[0].size();
      for (std::size_t i = 0; i < na; ++i) a.add(i, go[i]);
      for (std::size_t i = 0; i < node.inputs[1].size(); ++i) b.add(i, go[na + i]);
      break;
    }
    case OpKind::ConcatCols: {
      GradRef a(node.inputs[0]), b(node.inputs[1]);
      const int r = node.inputs[0].rows();
      const int ca = node.inputs[0].cols(), cb = node.inputs[1].cols();
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < ca; ++j) a.add(static_cast<std::size_t>(i) * ca + j, go[static_cast<std::size_t>(i) * (ca + cb) + j]);
        for (int j = 0; j < cb; ++j) b.add(static_cast<std::size_t>(i) * cb + j, go[static_cast<std::size_t>(i) * (ca + cb) + ca + j]);
      }
      break;
    }
    case OpKind::Transpose: {
      Tensor x = node.inputs[0];
      if (!x.requires_grad()) break;
      auto& gx = x.grad();
      const int r = x.rows(), c = x.cols();
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) gx[static_cast<std::size_t>(i) * c + j] += go[static_cast<std::size_t>(j) * r + i];
      }
      break;
    }
    case OpKind::RowAffine: {
      Tensor x = node.inputs[0];
      if (!x.requires_grad()) break;
      auto& gx = x.grad();
      const int b = x.rows(), d = x.cols();
      const std::size_t dd = static_cast<std::size_t>(d) * d;
      for (int i = 0; i < b; ++i) {
        const double* A = node.aux.data() + i * dd;
        for (int c = 0; c < d; ++c) {
          double acc = 0.0;
          for (int r = 0; r < d; ++r) acc += A[static_cast<std::size_t>(r) * d + c] * go[static_cast<std::size_t>(i) * d + r];
          gx[static_cast<std::size_t>(i) * d + c] += acc;
        }
      }
      break;
    }
  }
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || !loss.is_scalar()) {
    throw std::invalid_argument("backward requires a scalar loss, got " +
                                (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  // Each pass propagates through fresh intermediate gradients; only leaf
  // tensors accumulate across passes.
  for (auto& node : nodes_) node.output.zero_grad();
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) backward_node(*it);
}

// ==================== Gradient checking ====================

double grad_check(const GraphBuilder& f, const Tensor& point, double step) {
  if (step <= 0) throw std::invalid_argument("grad_check: step must be positive");

  Tensor x = point.clone(true);
  Graph g;
  Tensor loss = f(g, x);
  if (!loss.is_scalar()) throw std::invalid_argument("grad_check: builder must produce a scalar loss");
  g.backward(loss);
  std::vector<double> analytic(point.size(), 0.0);
  if (x.has_grad()) analytic = x.grad();

  double max_err = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    double fp, fm;
    {
      Tensor xp = point.clone(false);
      xp.data()[i] += step;
      Graph gp;
      fp = f(gp, xp).value();
    }
    {
      Tensor xm = point.clone(false);
      xm.data()[i] -= step;
      Graph gm;
      fm = f(gm, xm).value();
    }
    if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(analytic[i])) {
      throw std::domain_error("grad_check: non-finite value at coordinate " + std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) /
                       std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace insgen
