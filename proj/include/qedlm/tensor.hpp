#pragma once

// Dense 64-bit tensors with a reverse-mode tape.
//
// A Tensor is a cheap handle onto a shared node. Every op that sees an input
// with requires_grad records its inputs and a backward closure on the output
// node; backward() on a scalar replays those closures in reverse topological
// order. Gradients accumulate until zero_grad().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace qedlm {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor;

// Receives the output value and gradient; accumulates into the inputs'
// gradient buffers (see grad_buffer()).
using BackwardFn = std::function<void(std::span<const double> out_value,
                                      std::span<const double> out_grad,
                                      const std::vector<Tensor>& inputs)>;

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  // A leaf with requires_grad set.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t rank() const { return shape().size(); }
  // 2-d accessors; a rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  // Direct write access, used by optimizers and samplers on leaves.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;
  // Gradient copy; all zeros when nothing has been accumulated.
  std::vector<double> grad() const;
  // View on the raw gradient buffer; empty before the first accumulation.
  std::span<const double> grad_view() const;
  void zero_grad();

  void backward() const;

  // Copy of the values with no tape participation.
  Tensor detach() const;
  bool same(const Tensor& other) const { return node_ == other.node_; }
  const char* op_name() const;

  // Builds an op output. Records the tape entry when grad mode is on and any
  // input requires grad.
  static Tensor make_op(const char* op, Shape shape, std::vector<double> values,
                        std::vector<Tensor> inputs, BackwardFn backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend std::span<double> grad_buffer(const Tensor& t);
  std::shared_ptr<detail::Node> node_;
};

// Gradient accumulation target for an input inside a BackwardFn. Empty when
// the input does not require grad.
std::span<double> grad_buffer(const Tensor& t);

// Thread-local switch that disables tape recording.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// ---- op catalog -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
// x (n x d) plus a bias row (numel d) added to every row.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
// 2-d concatenation along axis 0 (rows) or 1 (columns).
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// 2-d slice [begin, end) along axis.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor softmax(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor gelu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids);
Tensor squared_l2(const Tensor& a);
// Mean over rows of -log softmax(logits)[target].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);
// out[i][v] = -||x_i - e_v||^2 for x (n x d), e (V x d).
Tensor neg_sq_dist(const Tensor& x, const Tensor& e);

// Max over elements of |autodiff - central difference| / (|autodiff| + 1e-8).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double step);

// ---- node ------------------------------------------------------------------

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<Tensor> inputs;
  BackwardFn backward;
};
}  // namespace detail

}  // namespace qedlm
