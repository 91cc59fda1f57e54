#include "qedlm/denoiser.hpp"

#include <string>

#include "qedlm/errors.hpp"

namespace qedlm {

void DenoiserConfig::validate() const {
  if (d <= 0 || L <= 0 || heads <= 0 || d_ff <= 0 || n <= 0 || T <= 0) {
    throw ConfigError("denoiser: all dimensions must be positive");
  }
  if (d % heads != 0) {
    throw ConfigError("denoiser: d=" + std::to_string(d) + " not divisible by heads=" + std::to_string(heads));
  }
}

DenoiserModel DenoiserModel::init(const DenoiserConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.d), ff = static_cast<std::size_t>(cfg.d_ff);
  DenoiserModel m;
  m.cfg_ = cfg;
  m.in_proj_ = Mlp::init(d, ff, d, rng);
  m.time_mlp_ = Mlp::init(d, ff, d, rng);
  m.pos_ = init_normal({static_cast<std::size_t>(cfg.n), d}, rng, 0.1);
  for (int l = 0; l < cfg.L; ++l)
    m.blocks_.push_back(TransformerBlock::init(d, static_cast<std::size_t>(cfg.heads), ff, rng));
  m.lnf_g_ = init_ones({d});
  m.lnf_b_ = init_zeros({d});
  m.out_proj_ = Mlp::init(d, ff, d, rng);
  return m;
}

Tensor DenoiserModel::predict(const Tensor& x_t, int t, const Dropout& drop) const {
  if (x_t.rank() != 2 || x_t.rows() != static_cast<std::size_t>(cfg_.n) ||
      x_t.cols() != static_cast<std::size_t>(cfg_.d)) {
    throw DimensionError("denoise_predict: expected " + shape_str({std::size_t(cfg_.n), std::size_t(cfg_.d)}) +
                         ", got " + shape_str(x_t.shape()));
  }
  if (t < 1 || t > cfg_.T) {
    throw IndexError("denoise_predict: step " + std::to_string(t) + " outside [1, " + std::to_string(cfg_.T) + "]");
  }
  const auto d = static_cast<std::size_t>(cfg_.d);
  const Tensor feat = Tensor::from({1, d}, sinusoid(1000.0 * t / cfg_.T, d));
  const Tensor temb = time_mlp_.forward(feat);

  Tensor h = add_rowwise(add(in_proj_.forward(x_t), pos_), temb);
  h = drop.apply(h);
  for (const auto& b : blocks_) h = b.forward(h, false, drop);
  return out_proj_.forward(layer_norm(h, lnf_g_, lnf_b_));
}

void DenoiserModel::apply_lora(int r, double alpha, Rng& rng) {
  if (r < 1 || r > cfg_.d) {
    throw ConfigError("apply_lora: rank " + std::to_string(r) + " must lie in [1, d=" + std::to_string(cfg_.d) + "]");
  }
  for (auto p : parameters()) p.tensor.set_requires_grad(false);
  const auto d = static_cast<std::size_t>(cfg_.d);
  for (auto& b : blocks_) {
    b.lora_k = LoraAdapter::init(d, static_cast<std::size_t>(r), alpha, rng);
    b.lora_v = LoraAdapter::init(d, static_cast<std::size_t>(r), alpha, rng);
  }
  lora_alpha_ = alpha;
}

bool DenoiserModel::has_lora() const { return !blocks_.empty() && blocks_.front().lora_k.has_value(); }

int DenoiserModel::lora_rank() const {
  return has_lora() ? static_cast<int>(blocks_.front().lora_k->rank()) : 0;
}

double DenoiserModel::lora_alpha() const { return lora_alpha_; }

ParamList DenoiserModel::parameters() const {
  ParamList out;
  in_proj_.collect("in", out);
  time_mlp_.collect("time", out);
  out.push_back({"pos", pos_});
  for (std::size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect("block" + std::to_string(l), out);
  out.push_back({"lnf_g", lnf_g_});
  out.push_back({"lnf_b", lnf_b_});
  out_proj_.collect("out", out);
  return out;
}

ParamList DenoiserModel::trainable() const {
  ParamList out;
  for (auto& p : parameters())
    if (p.tensor.requires_grad()) out.push_back(p);
  return out;
}

ParamList DenoiserModel::attention_projections() const {
  ParamList out;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto pre = "block" + std::to_string(l);
    out.push_back({pre + ".wq", blocks_[l].wq});
    out.push_back({pre + ".wk", blocks_[l].wk});
    out.push_back({pre + ".wv", blocks_[l].wv});
    out.push_back({pre + ".wo", blocks_[l].wo});
  }
  return out;
}

ParamList DenoiserModel::adapters() const {
  ParamList out;
  for (auto& p : parameters())
    if (p.name.find(".lora_") != std::string::npos) out.push_back(p);
  return out;
}

std::string_view to_string(FtMode mode) {
  switch (mode) {
    case FtMode::full_ft: return "full_ft";
    case FtMode::full_ft_quant: return "full_ft_quant";
    case FtMode::lora_ft: return "lora_ft";
    case FtMode::lora_ft_quant: return "lora_ft_quant";
  }
  return "full_ft";
}

FtMode parse_ft_mode(std::string_view name) {
  if (name == "full_ft") return FtMode::full_ft;
  if (name == "full_ft_quant") return FtMode::full_ft_quant;
  if (name == "lora_ft") return FtMode::lora_ft;
  if (name == "lora_ft_quant") return FtMode::lora_ft_quant;
  throw ConfigError("unknown fine-tuning mode '" + std::string(name) + "'");
}

ParamCount count_params(const DenoiserConfig& cfg, FtMode mode, int quant_alpha, int quant_beta,
                        std::size_t h, int r) {
  cfg.validate();
  const bool lora = mode == FtMode::lora_ft || mode == FtMode::lora_ft_quant;
  const bool quant = mode == FtMode::full_ft_quant || mode == FtMode::lora_ft_quant;
  if (quant && quant_alpha + quant_beta <= 0) {
    throw ConfigError("count_params: quantized mode needs alpha + beta > 0");
  }
  if (lora && (r < 1 || r > cfg.d)) throw ConfigError("count_params: rank must lie in [1, d]");

  const double L = cfg.L, d = cfg.d, hh = static_cast<double>(h);
  ParamCount c;
  c.formula_attention = lora ? 2.0 * L * d * r : 3.0 * L * d * d;
  c.formula_embedding = quant ? d * hh / (quant_alpha + quant_beta) : d * hh;
  c.formula = c.formula_attention + c.formula_embedding;

  // Enumerate an actual model; values are irrelevant, only requires_grad.
  Rng rng(0);
  auto model = DenoiserModel::init(cfg, rng);
  if (lora) model.apply_lora(r, 2.0 * r, rng);
  c.literal_denoiser = count_trainable(model.parameters());
  c.literal_attention = lora ? count_trainable(model.adapters()) : count_trainable(model.attention_projections());
  c.literal = c.literal_denoiser + static_cast<std::size_t>(cfg.d) * h;
  return c;
}

}  // namespace qedlm
