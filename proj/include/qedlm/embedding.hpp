#pragma once

#include <optional>
#include <span>
#include <string_view>

#include "qedlm/quantize.hpp"
#include "qedlm/random.hpp"
#include "qedlm/schedule.hpp"
#include "qedlm/tensor.hpp"
#include "qedlm/vocab.hpp"

namespace qedlm {

// Trainable word embedding EMB(w) with an optional quantizer applied to the
// raw rows on every read.
struct EmbeddingTable {
  Tensor matrix;  // |V| x d, requires_grad
  double sigma0 = 0.0125;
  QuantizerSpec quant;

  // Rows uniform in [-0.5, 0.5] / sqrt(d).
  static EmbeddingTable init(std::size_t vocab_size, std::size_t dim, Rng& rng, double sigma0,
                             QuantizerSpec quant = {});
  // Initialization scale 0.5 / sqrt(d); sigma0 defaults to 0.1 of it.
  static double init_scale(std::size_t dim);

  std::size_t vocab_size() const { return matrix.rows(); }
  std::size_t dim() const { return matrix.cols(); }
  // quant(raw rows), on the tape when grad mode is on.
  Tensor effective() const;
};

// effective_row(w_i) + sigma0 * eps_i per position; pass no eps for the
// noiseless embedding.
Tensor embed(std::span<const std::size_t> tokens, const EmbeddingTable& table,
             const std::optional<Tensor>& eps = std::nullopt);
// Same with precomputed effective rows (shared across a batch).
Tensor embed_with(std::span<const std::size_t> tokens, const Tensor& effective, double sigma0,
                  const std::optional<Tensor>& eps = std::nullopt);

// logits[i][w] = -||x_i - effective_row(w)||^2
Tensor word_logits(const Tensor& x, const EmbeddingTable& table);

// Per-position argmax of word_logits; ties go to the lower index.
TokenIds round_to_words(const Tensor& x0, const EmbeddingTable& table);
TokenIds nearest_rows(const Tensor& x, const Tensor& effective);

// Each row of x replaced by its nearest row of `effective`.
Tensor snap_to_rows(const Tensor& x, const Tensor& effective);

enum class ClampMode { none, nearest, quantized_nearest };
std::string_view to_string(ClampMode mode);
ClampMode parse_clamp_mode(std::string_view name);

// The clamped prediction (no noise): identity, nearest row, or nearest row
// after applying `quant` (defaults to table.quant).
Tensor clamp_prediction(const Tensor& x0_hat, const EmbeddingTable& table, const Tensor& effective,
                        ClampMode mode, const std::optional<QuantizerSpec>& quant = std::nullopt);

// sqrt(abar_{t-1}) * clamp(x0_hat) + sqrt(1 - abar_{t-1}) * eps
Tensor clamp_step(const Tensor& x0_hat, int t, const Tensor& eps, const NoiseSchedule& sched,
                  const EmbeddingTable& table, ClampMode mode,
                  const std::optional<QuantizerSpec>& quant = std::nullopt);

}  // namespace qedlm
