#pragma once

#include <string>
#include <vector>

#include "qedlm/checkpoint.hpp"
#include "qedlm/control.hpp"
#include "qedlm/nn.hpp"
#include "qedlm/vocab.hpp"

namespace qedlm {

// Sentence BLEU up to 4-grams with brevity penalty. Orders with zero
// matches use (0 + 1) / (candidates + 1). Expects special tokens already
// stripped; an empty hypothesis scores 0.
double bleu(const TokenIds& hypothesis, const TokenIds& reference);

// argmin over w in S of mean_{w' in S} -BLEU(w, w'), specials stripped;
// ties go to the lowest index. Throws ContractError on an empty set.
std::size_t mbr_select(const std::vector<TokenIds>& samples);

// Semantic: the value's words appear as a contiguous run in the output.
// Length: word count (specials excluded) within target +/- 2.
bool control_success(const TokenIds& sample, const ControlTarget& target, const Vocabulary& vocab);
double eval_ctrl(const std::vector<TokenIds>& samples, const ControlTarget& target, const Vocabulary& vocab);

struct TeacherConfig {
  int d = 32;
  int L = 2;
  int heads = 2;
  int d_ff = 64;
  int n = 16;
  void validate() const;
};

// Causal transformer LM over the same vocabulary.
class TeacherLM {
 public:
  static TeacherLM init(const TeacherConfig& cfg, std::size_t vocab_size, Rng& rng);
  const TeacherConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return tok_.rows(); }

  // Next-token logits for each position of ids (length <= n).
  Tensor logits(const TokenIds& ids) const;
  // Summed NLL of ids[1..k] given prefixes, where k covers the words and
  // the first END; returns (nll, predicted token count).
  std::pair<double, std::size_t> sequence_nll(const TokenIds& ids) const;
  // Mean NLL loss of a batch on the tape.
  Tensor loss(const std::vector<TokenIds>& batch) const;
  // START followed by argmax continuations until END or n tokens.
  TokenIds greedy(std::size_t max_len) const;

  ParamList parameters() const;
  Tensor& output_weight() { return w_out_; }
  Tensor& output_bias() { return b_out_; }

 private:
  TeacherConfig cfg_;
  Tensor tok_, pos_;
  std::vector<TransformerBlock> blocks_;
  Tensor lnf_g_, lnf_b_, w_out_, b_out_;
};

struct TeacherTrainConfig {
  TeacherConfig model;
  int iterations = 1500;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

TeacherLM train_teacher(const TeacherTrainConfig& cfg, const Corpus& corpus, const Vocabulary& vocab);

Checkpoint to_checkpoint(const TeacherLM& teacher, const Vocabulary& vocab, std::uint64_t seed);
std::pair<TeacherLM, Vocabulary> teacher_from_checkpoint(const Checkpoint& ckpt);

// exp(total NLL / total predicted tokens) over the set; ContractError on an
// empty set.
double eval_lm(const std::vector<TokenIds>& samples, const TeacherLM& teacher);

struct EvalReport {
  double ctrl = 0;
  double lm = 0;
  std::size_t count = 0;
  std::size_t successes = 0;
  std::string to_csv() const;
  std::string summary() const;
};

}  // namespace qedlm
