#include "qedlm/decode_eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "qedlm/errors.hpp"
#include "qedlm/training.hpp"

namespace qedlm {

double bleu(const TokenIds& hyp, const TokenIds& ref) {
  if (hyp.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t order = 1; order <= 4; ++order) {
    std::map<std::vector<std::size_t>, int> ref_counts;
    for (std::size_t i = 0; i + order <= ref.size(); ++i)
      ++ref_counts[std::vector<std::size_t>(ref.begin() + i, ref.begin() + i + order)];
    std::map<std::vector<std::size_t>, int> hyp_counts;
    for (std::size_t i = 0; i + order <= hyp.size(); ++i)
      ++hyp_counts[std::vector<std::size_t>(hyp.begin() + i, hyp.begin() + i + order)];
    double matches = 0, total = 0;
    for (const auto& [gram, c] : hyp_counts) {
      total += c;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matches += std::min(c, it->second);
    }
    const double p = matches > 0 ? matches / total : 1.0 / (total + 1.0);
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(hyp.size()), r = static_cast<double>(ref.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / 4.0);
}

std::size_t mbr_select(const std::vector<TokenIds>& samples) {
  if (samples.empty()) throw ContractError("mbr_select: empty sample set");
  std::vector<TokenIds> s;
  s.reserve(samples.size());
  for (const auto& x : samples) s.push_back(strip_special(x));
  std::size_t best = 0;
  double best_risk = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double risk = 0;
    for (std::size_t j = 0; j < s.size(); ++j) risk += -bleu(s[i], s[j]);
    risk /= static_cast<double>(s.size());
    if (i == 0 || risk < best_risk) {
      best = i;
      best_risk = risk;
    }
  }
  return best;
}

bool control_success(const TokenIds& sample, const ControlTarget& target, const Vocabulary& vocab) {
  target.validate();
  const auto words = strip_special(sample);
  if (target.task == ControlTask::length) {
    const auto len = static_cast<int>(words.size());
    return std::abs(len - target.target_len) <= 2;
  }
  const auto value = tokenize(target.value);
  if (value.empty()) throw ConfigError("semantic target: empty value");
  TokenIds want;
  for (const auto& w : value) {
    const auto id = vocab.find(w);
    if (!id) return false;
    want.push_back(*id);
  }
  return std::search(words.begin(), words.end(), want.begin(), want.end()) != words.end();
}

double eval_ctrl(const std::vector<TokenIds>& samples, const ControlTarget& target, const Vocabulary& vocab) {
  target.validate();
  if (samples.empty()) throw ContractError("eval_ctrl: empty sample set");
  std::size_t ok = 0;
  for (const auto& s : samples) ok += control_success(s, target, vocab) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(samples.size());
}

// ---- teacher ----------------------------------------------------------------

void TeacherConfig::validate() const {
  if (d <= 0 || L <= 0 || heads <= 0 || d_ff <= 0 || n < 2) throw ConfigError("teacher: invalid dimensions");
  if (d % heads != 0) throw ConfigError("teacher: d not divisible by heads");
}

TeacherLM TeacherLM::init(const TeacherConfig& cfg, std::size_t vocab_size, Rng& rng) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.d);
  TeacherLM t;
  t.cfg_ = cfg;
  t.tok_ = init_normal({vocab_size, d}, rng, 0.1);
  t.pos_ = init_normal({static_cast<std::size_t>(cfg.n), d}, rng, 0.1);
  for (int l = 0; l < cfg.L; ++l)
    t.blocks_.push_back(TransformerBlock::init(d, static_cast<std::size_t>(cfg.heads),
                                               static_cast<std::size_t>(cfg.d_ff), rng));
  t.lnf_g_ = init_ones({d});
  t.lnf_b_ = init_zeros({d});
  t.w_out_ = init_weight({d, vocab_size}, rng);
  t.b_out_ = init_zeros({vocab_size});
  return t;
}

Tensor TeacherLM::logits(const TokenIds& ids) const {
  if (ids.empty() || ids.size() > static_cast<std::size_t>(cfg_.n)) {
    throw DimensionError("teacher: sequence length " + std::to_string(ids.size()) + " outside [1, " +
                         std::to_string(cfg_.n) + "]");
  }
  Tensor h = add(embedding_lookup(tok_, ids), slice(pos_, 0, 0, ids.size()));
  for (const auto& b : blocks_) h = b.forward(h, true, {});
  return linear(layer_norm(h, lnf_g_, lnf_b_), w_out_, b_out_);
}

namespace {

// START + words + END, truncated to n, unknown ids mapped to UNK.
TokenIds normalize(const TokenIds& ids, std::size_t n, std::size_t vocab_size) {
  TokenIds out{Vocabulary::kStart};
  for (auto id : strip_special(ids)) {
    if (out.size() + 1 >= n) break;
    out.push_back(id < vocab_size ? id : Vocabulary::kUnk);
  }
  out.push_back(Vocabulary::kEnd);
  return out;
}

}  // namespace

std::pair<double, std::size_t> TeacherLM::sequence_nll(const TokenIds& ids) const {
  NoGradGuard no_grad;
  const auto seq = normalize(ids, static_cast<std::size_t>(cfg_.n), vocab_size());
  const Tensor lg = logits(TokenIds(seq.begin(), seq.end() - 1));
  const TokenIds targets(seq.begin() + 1, seq.end());
  const double mean_nll = cross_entropy(lg, targets).item();
  return {mean_nll * static_cast<double>(targets.size()), targets.size()};
}

Tensor TeacherLM::loss(const std::vector<TokenIds>& batch) const {
  if (batch.empty()) throw ContractError("teacher loss: empty batch");
  Tensor total;
  for (const auto& ids : batch) {
    const auto seq = normalize(ids, static_cast<std::size_t>(cfg_.n), vocab_size());
    const TokenIds targets(seq.begin() + 1, seq.end());
    const Tensor l = cross_entropy(logits(TokenIds(seq.begin(), seq.end() - 1)), targets);
    total = total.valid() ? add(total, l) : l;
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

TokenIds TeacherLM::greedy(std::size_t max_len) const {
  NoGradGuard no_grad;
  max_len = std::min(max_len, static_cast<std::size_t>(cfg_.n));
  TokenIds ids{Vocabulary::kStart};
  while (ids.size() < max_len) {
    const Tensor lg = logits(ids);
    const auto V = lg.cols();
    const auto row = lg.values().subspan((lg.rows() - 1) * V, V);
    std::size_t best = 0;
    for (std::size_t v = 1; v < V; ++v)
      if (row[v] > row[best]) best = v;
    ids.push_back(best);
    if (best == Vocabulary::kEnd) break;
  }
  return ids;
}

ParamList TeacherLM::parameters() const {
  ParamList out{{"tok", tok_}, {"pos", pos_}};
  for (std::size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect("block" + std::to_string(l), out);
  out.push_back({"lnf_g", lnf_g_});
  out.push_back({"lnf_b", lnf_b_});
  out.push_back({"w_out", w_out_});
  out.push_back({"b_out", b_out_});
  return out;
}

TeacherLM train_teacher(const TeacherTrainConfig& cfg, const Corpus& corpus, const Vocabulary& vocab) {
  if (corpus.empty()) throw ConfigError("train_teacher: empty corpus");
  if (cfg.batch_size < 1 || cfg.iterations < 0 || !(cfg.lr > 0)) throw ConfigError("train_teacher: invalid settings");
  Rng rng(cfg.seed);
  auto teacher = TeacherLM::init(cfg.model, vocab.size(), rng);
  auto [train_set, eval_set] = split_corpus(corpus, vocab, cfg.model.n);
  if (train_set.empty()) train_set = eval_set;
  const ParamList params = teacher.parameters();
  AdamW opt;
  std::vector<TokenIds> batch(static_cast<std::size_t>(cfg.batch_size));
  for (int it = 0; it < cfg.iterations; ++it) {
    for (auto& b : batch) b = train_set[static_cast<std::size_t>(uniform_int(rng, 0, int(train_set.size()) - 1))];
    const Tensor l = teacher.loss(batch);
    if (!std::isfinite(l.item())) throw NumericError("train_teacher: non-finite loss at iteration " + std::to_string(it));
    l.backward();
    opt.step(params, linear_decay_lr(cfg.lr, it, cfg.iterations));
    for (auto p : params) p.tensor.zero_grad();
  }
  return teacher;
}

Checkpoint to_checkpoint(const TeacherLM& teacher, const Vocabulary& vocab, std::uint64_t seed) {
  const auto& c = teacher.config();
  Checkpoint ck;
  ck.kind = CheckpointKind::teacher;
  ck.config = {c.d, c.L, c.heads, c.d_ff, c.n, static_cast<std::int64_t>(vocab.size())};
  ck.set_meta("seed", std::to_string(seed));
  std::string v;
  for (const auto& t : vocab.tokens()) v += t + '\n';
  ck.set_meta("vocab", v);
  store_params(teacher.parameters(), ck);
  return ck;
}

std::pair<TeacherLM, Vocabulary> teacher_from_checkpoint(const Checkpoint& ck) {
  if (ck.kind != CheckpointKind::teacher) throw FormatError("checkpoint: not a teacher checkpoint");
  if (ck.config.size() != 6) throw FormatError("checkpoint: teacher config block must hold 6 integers");
  TeacherConfig c{int(ck.config[0]), int(ck.config[1]), int(ck.config[2]), int(ck.config[3]), int(ck.config[4])};
  std::vector<std::string> tokens;
  std::istringstream is(ck.meta("vocab"));
  for (std::string line; std::getline(is, line);) tokens.push_back(line);
  auto vocab = Vocabulary::from_tokens(std::move(tokens));
  if (vocab.size() != static_cast<std::size_t>(ck.config[5])) {
    throw FormatError("checkpoint: teacher vocabulary size disagrees with the config block");
  }
  Rng rng(0);
  auto t = TeacherLM::init(c, vocab.size(), rng);
  load_params(ck, t.parameters());
  return {std::move(t), std::move(vocab)};
}

double eval_lm(const std::vector<TokenIds>& samples, const TeacherLM& teacher) {
  if (samples.empty()) throw ContractError("eval_lm: empty sample set");
  double nll = 0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    const auto [l, k] = teacher.sequence_nll(s);
    nll += l;
    count += k;
  }
  return std::exp(nll / static_cast<double>(count));
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "count,successes,ctrl,lm\n" << count << ',' << successes << ',' << ctrl << ',' << lm << '\n';
  return os.str();
}

std::string EvalReport::summary() const {
  std::ostringstream os;
  os.precision(4);
  os << "samples: " << count << "\nctrl:    " << ctrl << " (" << successes << "/" << count << ")\nlm:      " << lm
     << " (teacher perplexity, lower is better)\n";
  return os.str();
}

}  // namespace qedlm
