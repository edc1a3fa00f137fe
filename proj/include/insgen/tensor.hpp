#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace insgen {

// Dense tensor of 64-bit floats with optional gradient storage. Value type
// with shared contents: copying a Tensor aliases the same data and grad,
// clone() makes them independent.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value);
  // (1, n) and (n, 1) matrices from a flat list.
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor column(std::vector<double> values, bool requires_grad = false);
  static Tensor identity(int n);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const;
  std::size_t size() const;
  bool is_scalar() const { return defined() && size() == 1; }
  // Row/column extents for rank-2 tensors; rank-1 is treated as a single row.
  int rows() const;
  int cols() const;

  std::vector<double>& data();
  const std::vector<double>& data() const;
  double value() const;  // scalar extraction
  double at(int r, int c) const;
  double& at(int r, int c);

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::vector<double>& grad();  // allocates zeros on first use
  const std::vector<double>& grad() const;
  void zero_grad();

  // Deep copy of data; grad is not copied.
  Tensor clone(bool requires_grad = false) const;
  // Same values, no gradient linkage.
  Tensor detach() const { return clone(false); }

  bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }
  bool all_finite() const;

 private:
  struct Impl {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::optional<std::vector<double>> grad;
  };
  std::shared_ptr<Impl> impl_;
};

std::string shape_str(const std::vector<int>& shape);

enum class OpKind {
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  LeakyRelu,
  Softplus,
  Exp,
  Log,
  Sum,
  Mean,
  L2NormalizeRows,
  RowsDot,
  LogSumExpRows,
  Square,
  GatherRows,
  ConcatRows,
  ConcatCols,
  Transpose,
  RowAffine,
};

const char* op_kind_name(OpKind kind);

// Recording tape for reverse-mode differentiation. Nodes are appended in
// evaluation order and backward() replays them strictly in reverse. A node is
// recorded only when some input requires grad; pure evaluations leave no
// trace. Instances are independent; use one per thread.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool strict() const { return strict_; }
  // In strict mode any op with a non-finite input is rejected.
  void set_strict(bool value) { strict_ = value; }
  std::size_t node_count() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // (m,k) x (k,n) -> (m,n)
  Tensor matmul(const Tensor& a, const Tensor& b);
  // Elementwise; shapes must match exactly unless one operand is scalar.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  // Multiply by a compile-time-known constant.
  Tensor scale(const Tensor& a, double factor);
  Tensor leaky_relu(const Tensor& a, double slope);
  Tensor softplus(const Tensor& a);
  Tensor exp(const Tensor& a);
  Tensor log(const Tensor& a);
  Tensor sum(const Tensor& a);   // -> (1,1)
  Tensor mean(const Tensor& a);  // -> (1,1)
  // Rows scaled to unit Euclidean norm; a zero row stays zero and passes
  // zero gradient.
  Tensor l2_normalize_rows(const Tensor& a);
  // Per-row dot product: (B,d) x (B,d) -> (B,1)
  Tensor rows_dot(const Tensor& a, const Tensor& b);
  // Stable log-sum-exp over each row: (B,N) -> (B,1)
  Tensor logsumexp_rows(const Tensor& a);
  Tensor square(const Tensor& a);
  // Select rows by index: (M,d) -> (len(idx), d). Repeats allowed.
  Tensor gather_rows(const Tensor& a, const std::vector<int>& indices);
  // Stack vertically: (A,d) + (B,d) -> (A+B,d)
  Tensor concat_rows(const Tensor& a, const Tensor& b);
  // Stack horizontally: (B,p) + (B,q) -> (B,p+q)
  Tensor concat_cols(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);
  // Per-row affine map with constant coefficients: out_i = A_i x_i + b_i,
  // where mats holds B row-major d x d matrices and offsets B rows of d.
  // Gradient flows only through x.
  Tensor row_affine(const Tensor& x, const std::vector<double>& mats,
                    const std::vector<double>& offsets);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  // requires-grad tensor the loss depends on. Gradients add across calls;
  // use zero_grad between optimization steps.
  void backward(const Tensor& loss);

 private:
  struct Node {
    OpKind kind;
    std::vector<Tensor> inputs;
    Tensor output;
    double param = 0.0;             // slope / scale factor
    std::vector<int> indices;       // gather
    std::vector<double> aux;        // row_affine mats
    std::vector<double> aux2;       // row_affine offsets
  };

  Tensor finish(Node node);
  void check_finite(OpKind kind, const Tensor& t) const;
  void backward_node(const Node& node);

  std::vector<Node> nodes_;
  bool strict_ = false;
};

// Builds a scalar loss from `point` on the given graph.
using GraphBuilder = std::function<Tensor(Graph&, const Tensor&)>;

// Compares the backward gradient of f at `point` against central finite
// differences. Returns the max over coordinates of
// |analytic - numeric| / max(1, |analytic|, |numeric|).
double grad_check(const GraphBuilder& f, const Tensor& point, double step);

}  // namespace insgen
