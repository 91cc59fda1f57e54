#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qedlm/checkpoint.hpp"
#include "qedlm/training.hpp"

namespace qedlm {

enum class ControlTask { semantic, length };
std::string_view to_string(ControlTask task);
ControlTask parse_control_task(std::string_view name);

struct ControlTarget {
  ControlTask task = ControlTask::semantic;
  std::string field;  // semantic
  std::string value;  // semantic
  int target_len = 0; // length: number of words, START/END/PAD excluded

  static ControlTarget semantic(std::string field, std::string value);
  static ControlTarget length(int target_len);
  void validate() const;
};

// Flattened n*d latent -> hidden -> ReLU -> classes.
struct ControlClassifier {
  std::string field;
  std::vector<std::string> classes;
  std::size_t n = 0, d = 0;
  Tensor w1, b1, w2, b2;

  Tensor logits(const Tensor& x) const;  // 1 x C
  // log p(c | x) as a scalar on the tape.
  Tensor log_prob(const Tensor& x, std::size_t cls) const;
  std::size_t predict(const Tensor& x) const;
  std::optional<std::size_t> class_index(const std::string& value) const;
  ParamList parameters() const;
  void freeze();
};

struct ClassifierConfig {
  int hidden = 256;
  int iterations = 20000;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  // Training noise levels are drawn uniformly from {0..max_t}; negative means T.
  int max_t = -1;
  // Replace every label with a random class (no-signal baseline).
  bool shuffle_labels = false;
};

struct ClassifierResult {
  ControlClassifier classifier;
  double heldout_accuracy = 0;
  std::size_t heldout_count = 0;
};

// Trains on x_t with t uniform over {0..max_t} (x_0 = noised embedding). Lines
// without `field` are skipped; fewer than two classes is a degenerate-label
// error. Accuracy is measured on the held-out lines at t = 0.
ClassifierResult train_classifier(const Corpus& corpus, const std::string& field, const DiffusionBundle& bundle,
                                  const ClassifierConfig& cfg);

Checkpoint to_checkpoint(const ControlClassifier& clf);
ControlClassifier classifier_from_checkpoint(const Checkpoint& ckpt);

struct GuidanceConfig {
  double lambda = 0.01;
  double lr = 0.1;
  int inner_steps = 3;
  int sample_steps = 200;
  // Sampling-time quantizer override: part_select(s = c, n = q_n) when
  // c != 0; c = 0 keeps the training-time quantizer.
  int q_n = 0;
  int c = 0;
  ClampMode clamp = ClampMode::nearest;
  // Clamp only at steps t <= clamp_start; negative means every step.
  int clamp_start = -1;
  // Length task: also pin the END token right after the target length.
  bool pin_end = true;

  void validate(int T) const;
  std::optional<QuantizerSpec> sample_quant() const;
};

// Evenly spaced steps from T down to 1 (both included), strictly
// decreasing. count = T gives T, T-1, ..., 1.
std::vector<int> downsample_steps(int T, int count);

using LogProbFn = std::function<Tensor(const Tensor&)>;

// cfg.inner_steps Adagrad ascent steps (fresh state, eps 1e-10) on
//   J(x) = lambda * (-||x - mu||^2 / (2 var)) + log_prob(x)
// starting from x_prev. A non-finite gradient throws GuidanceError naming
// the diffusion step and inner step.
Tensor guided_update(const Tensor& x_prev, const Tensor& mu, double var, const LogProbFn& log_prob,
                     const GuidanceConfig& cfg, int step = 0);

// One reverse chain. target == nullptr or a length target with no
// classifier runs unguided (length pinning still applies to length
// targets). Semantic targets need a classifier. The guidance fluency term
// is the Gaussian the reverse step samples from: mean sqrt(ab_prev) * x0
// (clamped) and variance 1 - ab_prev.
TokenIds sample_controlled(const DiffusionBundle& bundle, const ControlTarget* target,
                           const ControlClassifier* classifier, const GuidanceConfig& cfg, Rng& rng);

// count chains, chain i seeded with seed + i; jobs > 1 runs chains on
// threads. Output order is the chain order.
std::vector<TokenIds> sample_many(const DiffusionBundle& bundle, const ControlTarget* target,
                                  const ControlClassifier* classifier, const GuidanceConfig& cfg,
                                  std::uint64_t seed, int count, int jobs = 1);

}  // namespace qedlm
