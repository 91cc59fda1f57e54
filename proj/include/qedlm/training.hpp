#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qedlm/checkpoint.hpp"
#include "qedlm/denoiser.hpp"
#include "qedlm/embedding.hpp"
#include "qedlm/schedule.hpp"
#include "qedlm/vocab.hpp"

namespace qedlm {

struct LossOptions {
  // Weight on ||EMB(w)||^2; negative selects 1 / (n d).
  double lambda_emb = -1.0;
  // Multiply that weight by (T + 1).
  bool emb_t_plus_1 = false;
};

struct LossResult {
  Tensor loss;       // scalar, on the tape
  double mse = 0.0;  // prediction term alone, batch mean
};

// Batch mean of
//   mean((f(x_t, t) - x0)^2) + mean((f(x_1, 1) - x0)^2)
//   + CE(word_logits(x0), w) + lambda_emb * ||EMB(w)||^2
// with x0 = EMB(w) + sigma0 eps and one uniform t per sequence.
LossResult loss_e2e(const std::vector<TokenIds>& batch, const DenoiserModel& model, const EmbeddingTable& table,
                    const NoiseSchedule& sched, Rng& rng, const LossOptions& opts = {},
                    const Dropout& drop = {});

struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  long steps = 0;
  std::vector<std::vector<double>> m, v;

  // One update from the accumulated gradients of every tensor in params.
  void step(const ParamList& params, double lr);
};

// lr * (1 - step / total) for step in [0, total).
double linear_decay_lr(double lr, long step, long total);

enum class TrainMode { full_ft, lora_ft };
std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);

struct TrainConfig {
  DenoiserConfig model;
  TrainMode mode = TrainMode::full_ft;
  QuantizerSpec quant;
  double lr = 1e-4;
  long iterations = 5000;
  int batch_size = 64;
  double dropout = 0.1;
  std::uint64_t seed = 0;
  ScheduleKind schedule = ScheduleKind::sqrt;
  double s0 = 1e-4;
  // Negative selects 0.1 x the embedding init scale.
  double sigma0 = -1.0;
  int lora_r = 8;
  double lora_alpha = 16.0;
  LossOptions loss;
  ClampMode clamp = ClampMode::nearest;
  long report_every = 250;
  int eval_size = 64;

  void validate() const;
  double effective_sigma0() const;
};

struct ReportRow {
  long iteration = 0;
  double train_loss = 0, train_mse = 0, eval_loss = 0, eval_mse = 0;
};

struct TrainReport {
  std::vector<ReportRow> rows;
  ParamCount counts;
  std::string to_csv() const;
};

// Everything needed to sample: model, embedding, schedule and vocabulary.
struct DiffusionBundle {
  TrainConfig config;
  Vocabulary vocab;
  DenoiserModel model;
  EmbeddingTable table;
  NoiseSchedule sched;
};

struct TrainResult {
  DiffusionBundle bundle;
  TrainReport report;
};

// Splits corpus lines into (train, eval) token sequences of length n.
std::pair<std::vector<TokenIds>, std::vector<TokenIds>> split_corpus(const Corpus& corpus, const Vocabulary& vocab,
                                                                     int n);

// lora_ft with `base` loads the base denoiser and embedding first.
TrainResult train(const TrainConfig& config, const Corpus& corpus, const Vocabulary& vocab,
                  const DiffusionBundle* base = nullptr);

// Objective and prediction MSE on `set`, averaged over `draws` passes with
// independent t and noise (stream fixed by seed). Gradients are not recorded.
struct EvalStats {
  double loss = 0;
  double mse = 0;
};
EvalStats evaluate(const DiffusionBundle& bundle, const std::vector<TokenIds>& set, int draws, std::uint64_t seed);

Checkpoint to_checkpoint(const DiffusionBundle& bundle);
DiffusionBundle from_checkpoint(const Checkpoint& ckpt);

}  // namespace qedlm
