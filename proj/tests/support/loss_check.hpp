#pragma once
// Finite-difference check of the training objective with respect to the
// embedding table. With a quantizer, the straight-through gradient on the
// raw rows is compared against central differences taken on the quantized
// (effective) rows, coordinate by coordinate inside the pass-through region;
// outside it the gradient must be exactly zero.

#include <cmath>

#include "qedlm/training.hpp"

namespace qedlm::check {

struct LossFdResult {
  double worst_rel = 0;       // over pass-through coordinates
  std::size_t checked = 0;    // pass-through coordinates compared
  std::size_t blocked = 0;    // clipped coordinates
  bool blocked_exact = true;  // every clipped coordinate had gradient 0
};

inline LossFdResult loss_embedding_fd(const std::vector<TokenIds>& batch, const DenoiserModel& model,
                                      const EmbeddingTable& table, const NoiseSchedule& sched,
                                      std::uint64_t seed, double step = 1e-5) {
  // Analytic gradient through the straight-through quantizer.
  EmbeddingTable raw = table;
  raw.matrix = Tensor::parameter(table.matrix.shape(),
                                 std::vector<double>(table.matrix.values().begin(), table.matrix.values().end()));
  {
    Rng rng(seed);
    loss_e2e(batch, model, raw, sched, rng).loss.backward();
  }
  const auto analytic = raw.matrix.grad();

  // Same loss as a function of the effective rows, quantizer removed.
  EmbeddingTable eff;
  eff.sigma0 = table.sigma0;
  {
    NoGradGuard g;
    const Tensor q = quantize(table.matrix, table.quant);
    eff.matrix = Tensor::from(q.shape(), std::vector<double>(q.values().begin(), q.values().end()));
  }
  auto values = eff.matrix.mutable_values();
  auto eval = [&] {
    NoGradGuard g;
    Rng rng(seed);
    return loss_e2e(batch, model, eff, sched, rng).loss.item();
  };

  LossFdResult r;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!passes_gradient(table.matrix.values()[i], table.quant)) {
      ++r.blocked;
      r.blocked_exact = r.blocked_exact && analytic[i] == 0.0;
      continue;
    }
    const double keep = values[i];
    values[i] = keep + step;
    const double fp = eval();
    values[i] = keep - step;
    const double fm = eval();
    values[i] = keep;
    const double numeric = (fp - fm) / (2 * step);
    r.worst_rel = std::max(r.worst_rel, std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8));
    ++r.checked;
  }
  return r;
}

}  // namespace qedlm::check
