#include "qedlm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "qedlm/errors.hpp"

namespace qedlm {

namespace {

thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor: shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return n;
}

[[noreturn]] void dim_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                       shape_str(b));
}

[[noreturn]] void dim_error(const char* op, const Shape& a) {
  throw DimensionError(std::string(op) + ": unsupported shape " + shape_str(a));
}

void require_2d(const char* op, const Tensor& t) {
  if (t.rank() != 2) dim_error(op, t.shape());
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
  const auto n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  return Tensor(new_node(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return Tensor(new_node({1}, {value})); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t(new_node(std::move(shape), std::move(values)));
  t.node_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }

std::size_t Tensor::rows() const {
  const auto& s = node_->shape;
  if (s.size() == 1) return 1;
  if (s.size() == 2) return s[0];
  dim_error("rows", s);
}

std::size_t Tensor::cols() const {
  const auto& s = node_->shape;
  if (s.size() == 1) return s[0];
  if (s.size() == 2) return s[1];
  dim_error("cols", s);
}

std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw ContractError("set_requires_grad: only leaves can change grad participation");
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
  return *this;
}

bool Tensor::is_leaf() const { return !node_->backward; }

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

std::span<const double> Tensor::grad_view() const { return node_->grad; }

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return Tensor(new_node(node_->shape, node_->value)); }

const char* Tensor::op_name() const { return node_->op; }

Tensor Tensor::make_op(const char* op, Shape shape, std::vector<double> values,
                       std::vector<Tensor> inputs, BackwardFn backward) {
  Tensor out(new_node(std::move(shape), std::move(values)));
  out.node_->op = op;
  if (!t_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->inputs = std::move(inputs);
  out.node_->backward = std::move(backward);
  return out;
}

std::span<double> grad_buffer(const Tensor& t) {
  auto& n = *t.node_;
  if (!n.requires_grad) return {};
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(shape()));
  }
  if (node_->consumed) throw DoubleBackwardError("backward: graph already consumed by an earlier backward");
  if (!node_->requires_grad) {
    node_->consumed = true;
    return;
  }

  // Iterative post-order DFS gives a topological order of the tape.
  // The order holds ownership: releasing a node's inputs below may drop the
  // last reference to a node that has not been replayed yet.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack{{node_, 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      std::shared_ptr<detail::Node> child = n->inputs[next++].node_;
      if (!child->requires_grad || seen.count(child.get())) continue;
      if (child->consumed) {
        throw DoubleBackwardError(std::string("backward: intermediate '") + child->op +
                                  "' belongs to an already consumed graph");
      }
      seen.insert(child.get());
      stack.emplace_back(std::move(child), 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  grad_buffer(*this)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = it->get();
    if (!n->backward) continue;
    if (!n->grad.empty()) n->backward(n->value, n->grad, n->inputs);
    // Release the tape entry; leaves keep their gradients.
    n->backward = nullptr;
    n->inputs.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->consumed = true;
  }
  node_->consumed = true;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_mode_enabled() { return t_grad_enabled; }

// ---- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) dim_error("add", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::make_op("add", a.shape(), std::move(out), {a, b},
                         [](auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           for (const auto& t : in) {
                             auto gb = grad_buffer(t);
                             for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i];
                           }
                         });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) dim_error("sub", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return Tensor::make_op("sub", a.shape(), std::move(out), {a, b},
                         [](auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           auto ga = grad_buffer(in[0]);
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                           auto gb = grad_buffer(in[1]);
                           for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                         });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) dim_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor::make_op("mul", a.shape(), std::move(out), {a, b},
                         [](auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           auto av = in[0].values(), bv = in[1].values();
                           auto ga = grad_buffer(in[0]);
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
                           auto gb = grad_buffer(in[1]);
                           for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
                         });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= c;
  return Tensor::make_op("scale", a.shape(), std::move(out), {a},
                         [c](auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           auto ga = grad_buffer(in[0]);
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * g[i];
                         });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v += c;
  return Tensor::make_op("add_scalar", a.shape(), std::move(out), {a},
                         [](auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           auto ga = grad_buffer(in[0]);
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                         });
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  require_2d("add_rowwise", x);
  const std::size_t n = x.rows(), d = x.cols();
  if (bias.numel() != d) dim_error("add_rowwise", x.shape(), bias.shape());
  std::vector<double> out(x.values().begin(), x.values().end());
  auto bv = bias.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += bv[j];
  return Tensor::make_op("add_rowwise", x.shape(), std::move(out), {x, bias},
                         [n, d](auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           auto gx = grad_buffer(in[0]);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                           auto gb = grad_buffer(in[1]);
                           if (!gb.empty())
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
                         });
}

// ---- shape / linear algebra ---------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) dim_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  return Tensor::make_op(
      "matmul", {m, n}, std::move(out), {a, b},
      [m, k, n](auto, std::span<const double> g, const std::vector<Tensor>& in) {
        auto av = in[0].values(), bv = in[1].values();
        auto ga = grad_buffer(in[0]);
        if (!ga.empty()) {  // dA = G B^T, via B^T rows so the inner loop is an axpy
          std::vector<double> bt(n * k);
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = bv[p * n + j];
          for (std::size_t i = 0; i < m; ++i) {
            double* garow = &ga[i * k];
            for (std::size_t j = 0; j < n; ++j) {
              const double gij = g[i * n + j];
              const double* btrow = &bt[j * k];
              for (std::size_t p = 0; p < k; ++p) garow[p] += gij * btrow[p];
            }
          }
        }
        auto gb = grad_buffer(in[1]);
        if (!gb.empty())  // dB = A^T G
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = av[i * k + p];
              const double* grow = &g[i * n];
              double* gbrow = &gb[p * n];
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
            }
      });
}

Tensor transpose(const Tensor& a) {
  require_2d("transpose", a);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return Tensor::make_op("transpose", {c, r}, std::move(out), {a},
                         [r, c](auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           auto ga = grad_buffer(in[0]);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
                         });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) dim_error("reshape", a.shape(), shape);
  std::vector<double> out(a.values().begin(), a.values().end());
  return Tensor::make_op("reshape", std::move(shape), std::move(out), {a},
                         [](auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           auto ga = grad_buffer(in[0]);
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                         });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  if (axis > 1) throw DimensionError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_2d("concat", p);
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if ((axis == 0 ? p.cols() : p.rows()) != fixed) dim_error("concat", parts[0].shape(), p.shape());
    total += axis == 0 ? p.rows() : p.cols();
  }
  const Shape shape = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
  std::vector<double> out(total * fixed);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto pv = p.values();
    if (axis == 0) {
      std::copy(pv.begin(), pv.end(), out.begin() + static_cast<std::ptrdiff_t>(offset * fixed));
      offset += p.rows();
    } else {
      const std::size_t w = p.cols();
      for (std::size_t i = 0; i < fixed; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * total + offset + j] = pv[i * w + j];
      offset += w;
    }
  }
  return Tensor::make_op(
      "concat", shape, std::move(out), parts,
      [axis, fixed, total](auto, std::span<const double> g, const std::vector<Tensor>& in) {
        std::size_t offset = 0;
        for (const auto& p : in) {
          auto gp = grad_buffer(p);
          if (axis == 0) {
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset * fixed + i];
            offset += p.rows();
          } else {
            const std::size_t w = p.cols();
            if (!gp.empty())
              for (std::size_t i = 0; i < fixed; ++i)
                for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + offset + j];
            offset += w;
          }
        }
      });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  require_2d("slice", a);
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t extent = axis == 0 ? r : c;
  if (axis > 1 || begin >= end || end > extent) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " of shape " + shape_str(a.shape()));
  }
  const std::size_t w = end - begin;
  const Shape shape = axis == 0 ? Shape{w, c} : Shape{r, w};
  std::vector<double> out(shape_numel(shape));
  auto av = a.values();
  if (axis == 0) {
    std::copy(av.begin() + static_cast<std::ptrdiff_t>(begin * c),
              av.begin() + static_cast<std::ptrdiff_t>(end * c), out.begin());
  } else {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * w + j] = av[i * c + begin + j];
  }
  return Tensor::make_op("slice", shape, std::move(out), {a},
                         [axis, begin, c, r, w](auto, std::span<const double> g,
                                                const std::vector<Tensor>& in) {
                           auto ga = grad_buffer(in[0]);
                           if (axis == 0) {
                             for (std::size_t i = 0; i < g.size(); ++i) ga[begin * c + i] += g[i];
                           } else {
                             for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < w; ++j) ga[i * c + begin + j] += g[i * w + j];
                           }
                         });
}

// ---- reductions ---------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return Tensor::make_op("sum", {1}, {s}, {a},
                         [](auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           auto ga = grad_buffer(in[0]);
                           for (auto& v : ga) v += g[0];
                         });
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  const double inv = 1.0 / static_cast<double>(a.numel());
  return Tensor::make_op("mean", {1}, {s * inv}, {a},
                         [inv](auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           auto ga = grad_buffer(in[0]);
                           for (auto& v : ga) v += g[0] * inv;
                         });
}

Tensor squared_l2(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return Tensor::make_op("squared_l2", {1}, {s}, {a},
                         [](auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           auto av = in[0].values();
                           auto ga = grad_buffer(in[0]);
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * av[i] * g[0];
                         });
}

// ---- nonlinearities -------------------------------------------------------------

Tensor softmax(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = &av[i * c];
    double* y = &out[i * c];
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  return Tensor::make_op("softmax", a.shape(), std::move(out), {a},
                         [r, c](std::span<const double> y, std::span<const double> g,
                                const std::vector<Tensor>& in) {
                           auto ga = grad_buffer(in[0]);
                           for (std::size_t i = 0; i < r; ++i) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
                             for (std::size_t j = 0; j < c; ++j)
                               ga[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
                           }
                         });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.numel() != c || bias.numel() != c) dim_error("layer_norm", x.shape(), gain.shape());
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(r);
  auto xv = x.values(), gv = gain.values(), bv = bias.values();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = &xv[i * c];
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (row[j] - mu) * inv_std[i];
      out[i * c + j] = gv[j] * xhat[i * c + j] + bv[j];
    }
  }
  return Tensor::make_op(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          auto, std::span<const double> g, const std::vector<Tensor>& in) {
        auto gv = in[1].values();
        auto gx = grad_buffer(in[0]);
        auto gg = grad_buffer(in[1]);
        auto gb = grad_buffer(in[2]);
        for (std::size_t i = 0; i < r; ++i) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double dxh = g[i * c + j] * gv[j];
            m1 += dxh;
            m2 += dxh * xhat[i * c + j];
            if (!gg.empty()) gg[j] += g[i * c + j] * xhat[i * c + j];
            if (!gb.empty()) gb[j] += g[i * c + j];
          }
          m1 /= static_cast<double>(c);
          m2 /= static_cast<double>(c);
          if (!gx.empty())
            for (std::size_t j = 0; j < c; ++j) {
              const double dxh = g[i * c + j] * gv[j];
              gx[i * c + j] += inv_std[i] * (dxh - m1 - xhat[i * c + j] * m2);
            }
        }
      });
}

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] / std::numbers::sqrt2));
  return Tensor::make_op("gelu", a.shape(), std::move(out), {a},
                         [](auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           auto av = in[0].values();
                           auto ga = grad_buffer(in[0]);
                           const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
                           for (std::size_t i = 0; i < ga.size(); ++i) {
                             const double x = av[i];
                             const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
                             const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
                             ga[i] += g[i] * (cdf + x * pdf);
                           }
                         });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  return Tensor::make_op("relu", a.shape(), std::move(out), {a},
                         [](auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           auto av = in[0].values();
                           auto ga = grad_buffer(in[0]);
                           for (std::size_t i = 0; i < ga.size(); ++i)
                             if (av[i] > 0.0) ga[i] += g[i];
                         });
}

// ---- lookups and losses ---------------------------------------------------------

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
  require_2d("embedding_lookup", table);
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) {
      throw IndexError("embedding_lookup: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(v) + " rows");
    }
    std::copy_n(&tv[ids[i] * d], d, &out[i * d]);
  }
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return Tensor::make_op("embedding_lookup", {ids.size(), d}, std::move(out), {table},
                         [d, idv = std::move(idv)](auto, std::span<const double> g,
                                                   const std::vector<Tensor>& in) {
                           auto gt = grad_buffer(in[0]);
                           for (std::size_t i = 0; i < idv.size(); ++i)
                             for (std::size_t j = 0; j < d; ++j) gt[idv[i] * d + j] += g[i * d + j];
                         });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  const std::size_t r = logits.rows(), c = logits.cols();
  if (targets.size() != r) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
  }
  auto lv = logits.values();
  std::vector<double> probs(r * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] >= c) throw IndexError("cross_entropy: target " + std::to_string(targets[i]) + " out of range");
    const double* x = &lv[i * c];
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (probs[i * c + j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
    loss += std::log(z) + mx - x[targets[i]];
  }
  const double inv = 1.0 / static_cast<double>(r);
  std::vector<std::size_t> tv(targets.begin(), targets.end());
  return Tensor::make_op("cross_entropy", {1}, {loss * inv}, {logits},
                         [r, c, inv, probs = std::move(probs), tv = std::move(tv)](
                             auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           auto gl = grad_buffer(in[0]);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j) {
                               const double onehot = (j == tv[i]) ? 1.0 : 0.0;
                               gl[i * c + j] += g[0] * inv * (probs[i * c + j] - onehot);
                             }
                         });
}

Tensor neg_sq_dist(const Tensor& x, const Tensor& e) {
  const std::size_t n = x.rows(), d = x.cols(), v = e.rows();
  if (e.cols() != d) dim_error("neg_sq_dist", x.shape(), e.shape());
  std::vector<double> out(n * v);
  auto xv = x.values(), ev = e.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t w = 0; w < v; ++w) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = xv[i * d + k] - ev[w * d + k];
        s += diff * diff;
      }
      out[i * v + w] = -s;
    }
  return Tensor::make_op("neg_sq_dist", {n, v}, std::move(out), {x, e},
                         [n, d, v](auto, std::span<const double> g, const std::vector<Tensor>& in) {
                           auto xv = in[0].values(), ev = in[1].values();
                           auto gx = grad_buffer(in[0]);
                           auto ge = grad_buffer(in[1]);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t w = 0; w < v; ++w) {
                               const double gi = g[i * v + w];
                               if (gi == 0.0) continue;
                               for (std::size_t k = 0; k < d; ++k) {
                                 const double diff = xv[i * d + k] - ev[w * d + k];
                                 if (!gx.empty()) gx[i * d + k] -= 2.0 * gi * diff;
                                 if (!ge.empty()) ge[w * d + k] += 2.0 * gi * diff;
                               }
                             }
                         });
}

// ---- finite differences -----------------------------------------------------------

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double step) {
  Tensor leaf = Tensor::parameter(x.shape(), std::vector<double>(x.values().begin(), x.values().end()));
  f(leaf).backward();
  const auto analytic = leaf.grad();

  std::vector<double> base(x.values().begin(), x.values().end());
  double worst = 0.0;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto plus = base, minus = base;
    plus[i] += step;
    minus[i] -= step;
    const double fp = f(Tensor::from(x.shape(), std::move(plus))).item();
    const double fm = f(Tensor::from(x.shape(), std::move(minus))).item();
    const double numeric = (fp - fm) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8));
  }
  return worst;
}

}  // namespace qedlm
