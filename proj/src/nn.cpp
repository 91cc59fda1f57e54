#include "qedlm/nn.hpp"

#include <cmath>

#include "qedlm/errors.hpp"

namespace qedlm {

std::size_t count_elements(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

std::size_t count_trainable(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params)
    if (p.tensor.requires_grad()) n += p.tensor.numel();
  return n;
}

Tensor init_normal(Shape shape, Rng& rng, double stddev) {
  auto t = normal_tensor(shape, rng, stddev);
  return Tensor::parameter(std::move(shape), std::vector<double>(t.values().begin(), t.values().end()));
}

Tensor init_weight(Shape shape, Rng& rng) {
  const double fan_in = static_cast<double>(shape.at(0));
  return init_normal(std::move(shape), rng, 1.0 / std::sqrt(fan_in));
}

Tensor init_zeros(Shape shape) {
  const auto n = shape_numel(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor init_ones(Shape shape) {
  const auto n = shape_numel(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(n, 1.0));
}

Tensor Dropout::apply(const Tensor& x) const {
  if (!active()) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(x.numel());
  const double inv = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = keep(*rng) ? inv : 0.0;
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_rowwise(matmul(x, w), b); }

Mlp Mlp::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  Mlp m;
  m.w1 = init_weight({in, hidden}, rng);
  m.b1 = init_zeros({hidden});
  m.w2 = init_weight({hidden, out}, rng);
  m.b2 = init_zeros({out});
  return m;
}

Tensor Mlp::forward(const Tensor& x) const { return linear(gelu(linear(x, w1, b1)), w2, b2); }

void Mlp::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w1", w1});
  out.push_back({prefix + ".b1", b1});
  out.push_back({prefix + ".w2", w2});
  out.push_back({prefix + ".b2", b2});
}

LoraAdapter LoraAdapter::init(std::size_t d, std::size_t r, double alpha, Rng& rng) {
  if (r < 1 || r > d) {
    throw ConfigError("lora: rank " + std::to_string(r) + " must lie in [1, " + std::to_string(d) + "]");
  }
  LoraAdapter a;
  a.down = init_weight({d, r}, rng);
  a.up = init_zeros({r, d});
  a.s = alpha / static_cast<double>(r);
  return a;
}

Tensor LoraAdapter::delta(const Tensor& h) const { return scale(matmul(relu(matmul(h, down)), up), s); }

TransformerBlock TransformerBlock::init(std::size_t d, std::size_t heads, std::size_t d_ff, Rng& rng) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("transformer: d=" + std::to_string(d) + " not divisible by heads=" + std::to_string(heads));
  }
  TransformerBlock b;
  b.heads = heads;
  b.ln1_g = init_ones({d});
  b.ln1_b = init_zeros({d});
  b.wq = init_weight({d, d}, rng);
  b.wk = init_weight({d, d}, rng);
  b.wv = init_weight({d, d}, rng);
  b.wo = init_weight({d, d}, rng);
  b.ln2_g = init_ones({d});
  b.ln2_b = init_zeros({d});
  b.ffn = Mlp::init(d, d_ff, d, rng);
  return b;
}

Tensor TransformerBlock::forward(const Tensor& x, bool causal, const Dropout& drop) const {
  const std::size_t n = x.rows(), d = x.cols(), dh = d / heads;
  const Tensor h = layer_norm(x, ln1_g, ln1_b);
  const Tensor q = matmul(h, wq);
  Tensor k = matmul(h, wk);
  Tensor v = matmul(h, wv);
  if (lora_k) k = add(k, lora_k->delta(h));
  if (lora_v) v = add(v, lora_v->delta(h));

  Tensor mask;
  if (causal) {
    std::vector<double> m(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = -1e9;
    mask = Tensor::from({n, n}, std::move(m));
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const Tensor qh = slice(q, 1, hd * dh, (hd + 1) * dh);
    const Tensor kh = slice(k, 1, hd * dh, (hd + 1) * dh);
    const Tensor vh = slice(v, 1, hd * dh, (hd + 1) * dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (causal) scores = add(scores, mask);
    outs.push_back(matmul(softmax(scores), vh));
  }
  const Tensor attn = heads == 1 ? outs[0] : concat(outs, 1);
  const Tensor x1 = add(x, drop.apply(matmul(attn, wo)));
  return add(x1, drop.apply(ffn.forward(layer_norm(x1, ln2_g, ln2_b))));
}

void TransformerBlock::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".ln1_g", ln1_g});
  out.push_back({prefix + ".ln1_b", ln1_b});
  out.push_back({prefix + ".wq", wq});
  out.push_back({prefix + ".wk", wk});
  out.push_back({prefix + ".wv", wv});
  out.push_back({prefix + ".wo", wo});
  out.push_back({prefix + ".ln2_g", ln2_g});
  out.push_back({prefix + ".ln2_b", ln2_b});
  ffn.collect(prefix + ".ffn", out);
  if (lora_k) {
    out.push_back({prefix + ".lora_k.down", lora_k->down});
    out.push_back({prefix + ".lora_k.up", lora_k->up});
  }
  if (lora_v) {
    out.push_back({prefix + ".lora_v.down", lora_v->down});
    out.push_back({prefix + ".lora_v.up", lora_v->up});
  }
}

void TransformerBlock::freeze_base() {
  for (Tensor* t : {&ln1_g, &ln1_b, &wq, &wk, &wv, &wo, &ln2_g, &ln2_b, &ffn.w1, &ffn.b1, &ffn.w2, &ffn.b2})
    t->set_requires_grad(false);
}

std::vector<double> sinusoid(double position, std::size_t d) {
  std::vector<double> out(d, 0.0);
  const std::size_t half = d / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(position * freq);
    out[half + i] = std::cos(position * freq);
  }
  return out;
}

}  // namespace qedlm
