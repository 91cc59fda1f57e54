#pragma once
// Building blocks shared by the denoiser and the teacher LM.

#include <optional>
#include <string>
#include <vector>

#include "qedlm/random.hpp"
#include "qedlm/tensor.hpp"

namespace qedlm {

struct NamedParam {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

std::size_t count_elements(const ParamList& params);
std::size_t count_trainable(const ParamList& params);

// Leaf with N(0, 1/fan_in) entries, fan_in = shape[0].
Tensor init_weight(Shape shape, Rng& rng);
Tensor init_normal(Shape shape, Rng& rng, double stddev);
Tensor init_zeros(Shape shape);
Tensor init_ones(Shape shape);

// Inverted dropout with an explicit stream; inactive when rng is null or
// rate is 0.
struct Dropout {
  Rng* rng = nullptr;
  double rate = 0.0;
  Tensor apply(const Tensor& x) const;
  bool active() const { return rng != nullptr && rate > 0.0; }
};

// x W + b
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// d -> hidden -> out with GELU in between.
struct Mlp {
  Tensor w1, b1, w2, b2;
  static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// H_o + s * relu(H W_down) W_up; W_up starts at zero.
struct LoraAdapter {
  Tensor down, up;
  double s = 2.0;
  static LoraAdapter init(std::size_t d, std::size_t r, double alpha, Rng& rng);
  Tensor delta(const Tensor& h) const;
  std::size_t rank() const { return down.cols(); }
};

// Pre-LN transformer block: x + Attn(LN(x)), then x + FFN(LN(x)).
struct TransformerBlock {
  std::size_t heads = 2;
  Tensor ln1_g, ln1_b, wq, wk, wv, wo;
  Tensor ln2_g, ln2_b;
  Mlp ffn;
  std::optional<LoraAdapter> lora_k, lora_v;

  static TransformerBlock init(std::size_t d, std::size_t heads, std::size_t d_ff, Rng& rng);
  Tensor forward(const Tensor& x, bool causal, const Dropout& drop) const;
  void collect(const std::string& prefix, ParamList& out) const;
  void freeze_base();
};

// Sinusoidal features of a scalar position, dimension d.
std::vector<double> sinusoid(double position, std::size_t d);

}  // namespace qedlm
