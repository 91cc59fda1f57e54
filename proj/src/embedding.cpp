#include "qedlm/embedding.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "qedlm/errors.hpp"

namespace qedlm {

double EmbeddingTable::init_scale(std::size_t dim) { return 0.5 / std::sqrt(static_cast<double>(dim)); }

EmbeddingTable EmbeddingTable::init(std::size_t vocab_size, std::size_t dim, Rng& rng, double sigma0,
                                    QuantizerSpec quant) {
  quant.validate();
  const double a = init_scale(dim);
  auto m = uniform_tensor({vocab_size, dim}, rng, -a, a);
  EmbeddingTable t;
  t.matrix = Tensor::parameter(m.shape(), std::vector<double>(m.values().begin(), m.values().end()));
  t.sigma0 = sigma0;
  t.quant = std::move(quant);
  return t;
}

Tensor EmbeddingTable::effective() const { return quantize(matrix, quant); }

Tensor embed_with(std::span<const std::size_t> tokens, const Tensor& effective, double sigma0,
                  const std::optional<Tensor>& eps) {
  for (auto id : tokens) {
    if (id >= effective.rows()) {
      throw VocabularyError("embed: token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(effective.rows()));
    }
  }
  Tensor x = embedding_lookup(effective, tokens);
  if (eps && sigma0 != 0.0) x = add(x, scale(*eps, sigma0));
  return x;
}

Tensor embed(std::span<const std::size_t> tokens, const EmbeddingTable& table, const std::optional<Tensor>& eps) {
  return embed_with(tokens, table.effective(), table.sigma0, eps);
}

Tensor word_logits(const Tensor& x, const EmbeddingTable& table) { return neg_sq_dist(x, table.effective()); }

TokenIds nearest_rows(const Tensor& x, const Tensor& effective) {
  const std::size_t n = x.rows(), d = x.cols(), v = effective.rows();
  if (effective.cols() != d) {
    throw DimensionError("nearest_rows: incompatible shapes " + shape_str(x.shape()) + " and " +
                         shape_str(effective.shape()));
  }
  auto xv = x.values(), ev = effective.values();
  TokenIds out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t w = 0; w < v; ++w) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = xv[i * d + k] - ev[w * d + k];
        s += diff * diff;
      }
      if (s < best) {
        best = s;
        out[i] = w;
      }
    }
  }
  return out;
}

TokenIds round_to_words(const Tensor& x0, const EmbeddingTable& table) {
  NoGradGuard no_grad;
  return nearest_rows(x0, table.effective());
}

Tensor snap_to_rows(const Tensor& x, const Tensor& effective) {
  const auto ids = nearest_rows(x, effective);
  NoGradGuard no_grad;
  return embedding_lookup(effective, ids).detach();
}

std::string_view to_string(ClampMode mode) {
  switch (mode) {
    case ClampMode::none: return "none";
    case ClampMode::nearest: return "nearest";
    case ClampMode::quantized_nearest: return "quantized_nearest";
  }
  return "none";
}

ClampMode parse_clamp_mode(std::string_view name) {
  if (name == "none") return ClampMode::none;
  if (name == "nearest") return ClampMode::nearest;
  if (name == "quantized_nearest") return ClampMode::quantized_nearest;
  throw ConfigError("unknown clamp mode '" + std::string(name) + "'");
}

Tensor clamp_prediction(const Tensor& x0_hat, const EmbeddingTable& table, const Tensor& effective,
                        ClampMode mode, const std::optional<QuantizerSpec>& quant) {
  switch (mode) {
    case ClampMode::none: return x0_hat;
    case ClampMode::nearest: return snap_to_rows(x0_hat, effective);
    case ClampMode::quantized_nearest: {
      NoGradGuard no_grad;
      const Tensor q = quantize(x0_hat, quant.value_or(table.quant));
      return snap_to_rows(q, effective);
    }
  }
  return x0_hat;
}

Tensor clamp_step(const Tensor& x0_hat, int t, const Tensor& eps, const NoiseSchedule& sched,
                  const EmbeddingTable& table, ClampMode mode, const std::optional<QuantizerSpec>& quant) {
  if (t < 1 || t > sched.steps()) {
    throw IndexError("clamp_step: step " + std::to_string(t) + " outside [1, " + std::to_string(sched.steps()) + "]");
  }
  Tensor effective;
  {
    NoGradGuard no_grad;
    effective = table.effective();
  }
  const Tensor clamped = clamp_prediction(x0_hat, table, effective, mode, quant);
  const double ab = sched.alpha_bar(t - 1);
  return add(scale(clamped, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

}  // namespace qedlm
