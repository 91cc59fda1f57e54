#pragma once

#include <string_view>
#include <vector>

#include "qedlm/nn.hpp"

namespace qedlm {

struct DenoiserConfig {
  int d = 16;
  int L = 2;
  int heads = 2;
  int d_ff = 64;
  int n = 16;
  int T = 200;
  void validate() const;
};

// f(x_t, t) -> predicted x0. Input and output go through d -> d_ff -> d
// MLPs; the time embedding is a sinusoid of 1000 t / T fed through an MLP
// and added to every position.
class DenoiserModel {
 public:
  static DenoiserModel init(const DenoiserConfig& cfg, Rng& rng);

  const DenoiserConfig& config() const { return cfg_; }
  Tensor predict(const Tensor& x_t, int t, const Dropout& drop = {}) const;

  // Adds adapters to every block's W_k and W_v and freezes everything else.
  void apply_lora(int r, double alpha, Rng& rng);
  bool has_lora() const;
  int lora_rank() const;
  double lora_alpha() const;

  // Fixed order; names are stable across runs and used by checkpoints.
  ParamList parameters() const;
  ParamList trainable() const;
  // Tensors of the base attention projections W_q, W_k, W_v, W_o.
  ParamList attention_projections() const;
  ParamList adapters() const;

 private:
  DenoiserConfig cfg_;
  Mlp in_proj_, out_proj_, time_mlp_;
  Tensor pos_;
  std::vector<TransformerBlock> blocks_;
  Tensor lnf_g_, lnf_b_;
  double lora_alpha_ = 0.0;
};

enum class FtMode { full_ft, full_ft_quant, lora_ft, lora_ft_quant };
std::string_view to_string(FtMode mode);
FtMode parse_ft_mode(std::string_view name);

struct ParamCount {
  // Tunable-parameter formula (T1..T4): attention term + embedding term.
  double formula = 0;
  double formula_attention = 0;
  double formula_embedding = 0;
  // Enumerated requires_grad elements for the same setting.
  std::size_t literal = 0;             // denoiser + embedding
  std::size_t literal_denoiser = 0;    // transformer side only
  std::size_t literal_attention = 0;   // W_q..W_o, or the adapters in lora modes
};

// quant_alpha / quant_beta are the integer / fractional bit counts of the
// Qαi.βf naming; their sum divides the embedding term in quant modes.
ParamCount count_params(const DenoiserConfig& cfg, FtMode mode, int quant_alpha, int quant_beta,
                        std::size_t h, int r);

}  // namespace qedlm
