#include "qedlm/training.hpp"

#include <cmath>
#include <sstream>

#include "qedlm/errors.hpp"

namespace qedlm {

LossResult loss_e2e(const std::vector<TokenIds>& batch, const DenoiserModel& model, const EmbeddingTable& table,
                    const NoiseSchedule& sched, Rng& rng, const LossOptions& opts, const Dropout& drop) {
  if (batch.empty()) throw ContractError("loss_e2e: empty batch");
  const auto& cfg = model.config();
  if (cfg.T != sched.steps()) {
    throw ConfigError("loss_e2e: model T=" + std::to_string(cfg.T) + " but schedule T=" +
                      std::to_string(sched.steps()));
  }
  const auto n = static_cast<std::size_t>(cfg.n), d = static_cast<std::size_t>(cfg.d);
  double lambda = opts.lambda_emb < 0 ? 1.0 / static_cast<double>(n * d) : opts.lambda_emb;
  if (opts.emb_t_plus_1) lambda *= sched.steps() + 1;

  const Tensor eff = table.effective();
  Tensor total;
  double mse_sum = 0.0;
  for (const auto& seq : batch) {
    if (seq.size() != n) {
      throw DimensionError("loss_e2e: sequence of length " + std::to_string(seq.size()) + ", model expects " +
                           std::to_string(n));
    }
    const Tensor eps0 = normal_tensor({n, d}, rng);
    const int t = uniform_int(rng, 1, sched.steps());
    const Tensor eps = normal_tensor({n, d}, rng);
    const Tensor eps1 = normal_tensor({n, d}, rng);

    const Tensor emb = embed_with(seq, eff, 0.0);
    const Tensor x0 = table.sigma0 > 0 ? add(emb, scale(eps0, table.sigma0)) : emb;

    const Tensor diff = sub(model.predict(forward_sample(x0, t, eps, sched), t, drop), x0);
    const Tensor mse = mean(mul(diff, diff));
    const Tensor diff1 = sub(model.predict(forward_sample(x0, 1, eps1, sched), 1, drop), x0);
    const Tensor anchor = mean(mul(diff1, diff1));
    const Tensor ce = cross_entropy(neg_sq_dist(x0, eff), seq);
    const Tensor reg = scale(squared_l2(emb), lambda);

    const Tensor l = add(add(mse, anchor), add(ce, reg));
    total = total.valid() ? add(total, l) : l;
    mse_sum += mse.item();
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  return {scale(total, inv), mse_sum * inv};
}

void AdamW::step(const ParamList& params, double lr) {
  if (m.empty()) {
    for (const auto& p : params) {
      m.emplace_back(p.tensor.numel(), 0.0);
      v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (m.size() != params.size()) throw ContractError("adamw: parameter list changed between steps");
  ++steps;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    if (m[i].size() != t.numel()) throw ContractError("adamw: state size mismatch for " + params[i].name);
    auto g = t.grad_view();
    auto w = t.mutable_values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      m[i][k] = beta1 * m[i][k] + (1.0 - beta1) * gk;
      v[i][k] = beta2 * v[i][k] + (1.0 - beta2) * gk * gk;
      const double mhat = m[i][k] / bc1, vhat = v[i][k] / bc2;
      w[k] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w[k]);
    }
  }
}

double linear_decay_lr(double lr, long step, long total) {
  if (total <= 0) return lr;
  return lr * (1.0 - static_cast<double>(step) / static_cast<double>(total));
}

std::string_view to_string(TrainMode mode) { return mode == TrainMode::full_ft ? "full_ft" : "lora_ft"; }

TrainMode parse_train_mode(std::string_view name) {
  if (name == "full_ft") return TrainMode::full_ft;
  if (name == "lora_ft") return TrainMode::lora_ft;
  throw ConfigError("unknown training mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  model.validate();
  quant.validate();
  if (!(lr > 0)) throw ConfigError("train: lr must be positive");
  if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
  if (iterations < 0) throw ConfigError("train: iterations must be non-negative");
  if (dropout < 0 || dropout >= 1) throw ConfigError("train: dropout must lie in [0, 1)");
  if (report_every < 1) throw ConfigError("train: report_every must be at least 1");
  if (eval_size < 1) throw ConfigError("train: eval_size must be at least 1");
  if (mode == TrainMode::lora_ft && (lora_r < 1 || lora_r > model.d)) {
    throw ConfigError("train: lora_r must lie in [1, d]");
  }
}

double TrainConfig::effective_sigma0() const {
  return sigma0 >= 0 ? sigma0 : 0.1 * EmbeddingTable::init_scale(static_cast<std::size_t>(model.d));
}

std::string TrainReport::to_csv() const {
  std::ostringstream os;
  os << "iteration,train_loss,train_mse,eval_loss,eval_mse\n";
  os.precision(10);
  for (const auto& r : rows)
    os << r.iteration << ',' << r.train_loss << ',' << r.train_mse << ',' << r.eval_loss << ',' << r.eval_mse << '\n';
  return os.str();
}

std::pair<std::vector<TokenIds>, std::vector<TokenIds>> split_corpus(const Corpus& corpus, const Vocabulary& vocab,
                                                                     int n) {
  std::vector<TokenIds> tr, ev;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    (is_eval_line(i) ? ev : tr).push_back(vocab.encode(corpus[i].words, static_cast<std::size_t>(n)));
  return {std::move(tr), std::move(ev)};
}

namespace {

void copy_values(const Tensor& from, Tensor to) {
  std::copy(from.values().begin(), from.values().end(), to.mutable_values().begin());
}

std::vector<TokenIds> head(const std::vector<TokenIds>& v, std::size_t k) {
  return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(k, v.size()))};
}

}  // namespace

TrainResult train(const TrainConfig& config, const Corpus& corpus, const Vocabulary& vocab,
                  const DiffusionBundle* base) {
  config.validate();
  if (corpus.empty()) throw ConfigError("train: empty corpus");
  Rng rng(config.seed);
  const auto d = static_cast<std::size_t>(config.model.d);

  TrainResult result{DiffusionBundle{config, vocab, DenoiserModel::init(config.model, rng),
                                     EmbeddingTable::init(vocab.size(), d, rng, config.effective_sigma0(), config.quant),
                                     NoiseSchedule::build(config.model.T, config.schedule, config.s0)},
                     {}};
  auto& b = result.bundle;
  if (base) {
    if (base->model.has_lora()) throw ConfigError("train: base checkpoint already carries adapters");
    const auto& bc = base->model.config();
    if (bc.d != config.model.d || bc.L != config.model.L || bc.heads != config.model.heads ||
        bc.d_ff != config.model.d_ff || bc.n != config.model.n || bc.T != config.model.T) {
      throw ConfigError("train: base checkpoint dimensions differ from the configuration");
    }
    if (base->vocab.tokens() != vocab.tokens()) throw ConfigError("train: base checkpoint vocabulary differs");
    load_params([&] {
      Checkpoint c;
      store_params(base->model.parameters(), c);
      return c;
    }(), b.model.parameters());
    copy_values(base->table.matrix, b.table.matrix);
  }
  if (config.mode == TrainMode::lora_ft) b.model.apply_lora(config.lora_r, config.lora_alpha, rng);

  auto [train_set, eval_set] = split_corpus(corpus, vocab, config.model.n);
  if (train_set.empty()) throw ConfigError("train: no training lines after the eval split");
  if (eval_set.empty()) eval_set = train_set;
  const auto eval_batch = head(eval_set, static_cast<std::size_t>(config.eval_size));
  const auto train_probe = head(train_set, static_cast<std::size_t>(config.eval_size));

  const auto qa = config.quant.kind == QuantKind::part_select && config.quant.s > 0 ? config.quant.n_bits : 0;
  const auto qb = config.quant.kind == QuantKind::part_select && config.quant.s < 0 ? config.quant.n_bits : 0;
  const bool quant_counts = qa + qb > 0;
  const FtMode ft = config.mode == TrainMode::lora_ft ? (quant_counts ? FtMode::lora_ft_quant : FtMode::lora_ft)
                                                     : (quant_counts ? FtMode::full_ft_quant : FtMode::full_ft);
  result.report.counts = count_params(config.model, ft, qa, qb, vocab.size(), config.lora_r);

  auto evaluate = [&](const std::vector<TokenIds>& set, std::uint64_t stream) {
    NoGradGuard no_grad;
    Rng er(derive_seed(config.seed, stream));
    auto r = loss_e2e(set, b.model, b.table, b.sched, er, config.loss);
    return std::pair{r.loss.item(), r.mse};
  };
  auto report = [&](long it) {
    const auto [tl, tm] = evaluate(train_probe, 11);
    const auto [el, em] = evaluate(eval_batch, 12);
    if (!std::isfinite(tl) || !std::isfinite(el)) {
      throw NumericError("train: non-finite loss at iteration " + std::to_string(it));
    }
    result.report.rows.push_back({it, tl, tm, el, em});
  };

  ParamList params = b.model.trainable();
  params.push_back({"embedding", b.table.matrix});
  AdamW opt;
  Rng drop_rng(derive_seed(config.seed, 13));
  const Dropout drop{config.dropout > 0 ? &drop_rng : nullptr, config.dropout};

  report(0);
  std::vector<TokenIds> batch(static_cast<std::size_t>(config.batch_size));
  for (long it = 0; it < config.iterations; ++it) {
    for (auto& s : batch) s = train_set[static_cast<std::size_t>(uniform_int(rng, 0, int(train_set.size()) - 1))];
    auto r = loss_e2e(batch, b.model, b.table, b.sched, rng, config.loss, drop);
    if (!std::isfinite(r.loss.item())) {
      throw NumericError("train: non-finite loss at iteration " + std::to_string(it + 1));
    }
    r.loss.backward();
    opt.step(params, linear_decay_lr(config.lr, it, config.iterations));
    for (auto& p : params) p.tensor.zero_grad();
    if ((it + 1) % config.report_every == 0 || it + 1 == config.iterations) report(it + 1);
  }
  return result;
}

// ---- checkpoint mapping -----------------------------------------------------

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += t + '\n';
  return out;
}

std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string line;
  while (std::getline(is, line)) out.push_back(line);
  return out;
}

long parse_long(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw FormatError("checkpoint: " + what + " = '" + s + "' is not an integer");
  }
}

}  // namespace

EvalStats evaluate(const DiffusionBundle& bundle, const std::vector<TokenIds>& set, int draws, std::uint64_t seed) {
  if (draws < 1) throw ConfigError("evaluate: draws must be at least 1");
  if (set.empty()) throw ContractError("evaluate: empty sequence set");
  NoGradGuard no_grad;
  Rng rng(seed);
  EvalStats s;
  for (int i = 0; i < draws; ++i) {
    const auto r = loss_e2e(set, bundle.model, bundle.table, bundle.sched, rng, bundle.config.loss);
    s.loss += r.loss.item();
    s.mse += r.mse;
  }
  s.loss /= draws;
  s.mse /= draws;
  return s;
}

Checkpoint to_checkpoint(const DiffusionBundle& bundle) {
  const auto& c = bundle.config;
  const auto& m = c.model;
  Checkpoint ck;
  ck.kind = CheckpointKind::diffusion;
  ck.config = {m.d, m.L, m.heads, m.d_ff, m.n, m.T, static_cast<std::int64_t>(bundle.vocab.size()),
               bundle.model.lora_rank()};
  ck.set_meta("seed", std::to_string(c.seed));
  ck.set_meta("mode", std::string(to_string(c.mode)));
  ck.set_meta("quant", bundle.table.quant.label);
  ck.set_meta("quant.kind", std::string(to_string(bundle.table.quant.kind)));
  ck.set_meta("quant.n_bits", std::to_string(bundle.table.quant.n_bits));
  ck.set_meta("quant.s", std::to_string(bundle.table.quant.s));
  ck.set_meta("quant.v_min", format_real(bundle.table.quant.v_min));
  ck.set_meta("quant.v_max", format_real(bundle.table.quant.v_max));
  ck.set_meta("lr", format_real(c.lr));
  ck.set_meta("iterations", std::to_string(c.iterations));
  ck.set_meta("batch_size", std::to_string(c.batch_size));
  ck.set_meta("dropout", format_real(c.dropout));
  ck.set_meta("schedule", std::string(to_string(bundle.sched.kind())));
  ck.set_meta("s0", format_real(bundle.sched.s0()));
  ck.set_meta("sigma0", format_real(bundle.table.sigma0));
  ck.set_meta("lora_alpha", format_real(bundle.model.lora_alpha()));
  ck.set_meta("lambda_emb", format_real(c.loss.lambda_emb));
  ck.set_meta("emb_t_plus_1", c.loss.emb_t_plus_1 ? "1" : "0");
  ck.set_meta("clamp", std::string(to_string(c.clamp)));
  ck.set_meta("vocab", join_tokens(bundle.vocab.tokens()));
  store_params(bundle.model.parameters(), ck);
  ck.params.emplace_back("embedding", std::vector<double>(bundle.table.matrix.values().begin(),
                                                          bundle.table.matrix.values().end()));
  return ck;
}

DiffusionBundle from_checkpoint(const Checkpoint& ck) {
  if (ck.kind != CheckpointKind::diffusion) throw FormatError("checkpoint: not a diffusion checkpoint");
  if (ck.config.size() != 8) throw FormatError("checkpoint: diffusion config block must hold 8 integers");
  TrainConfig c;
  c.model = {int(ck.config[0]), int(ck.config[1]), int(ck.config[2]), int(ck.config[3]), int(ck.config[4]),
             int(ck.config[5])};
  const auto V = static_cast<std::size_t>(ck.config[6]);
  const int r = int(ck.config[7]);
  c.seed = static_cast<std::uint64_t>(parse_long(ck.meta("seed"), "seed"));
  c.mode = parse_train_mode(ck.meta("mode"));
  c.quant.kind = parse_quant_kind(ck.meta("quant.kind"));
  c.quant.n_bits = int(parse_long(ck.meta("quant.n_bits"), "quant.n_bits"));
  c.quant.s = int(parse_long(ck.meta("quant.s"), "quant.s"));
  c.quant.v_min = parse_real(ck.meta("quant.v_min"), "quant.v_min");
  c.quant.v_max = parse_real(ck.meta("quant.v_max"), "quant.v_max");
  c.quant.label = ck.meta("quant");
  c.lr = parse_real(ck.meta("lr"), "lr");
  c.iterations = parse_long(ck.meta("iterations"), "iterations");
  c.batch_size = int(parse_long(ck.meta("batch_size"), "batch_size"));
  c.dropout = parse_real(ck.meta("dropout"), "dropout");
  c.schedule = parse_schedule_kind(ck.meta("schedule"));
  c.s0 = parse_real(ck.meta("s0"), "s0");
  c.sigma0 = parse_real(ck.meta("sigma0"), "sigma0");
  c.lora_alpha = parse_real(ck.meta("lora_alpha"), "lora_alpha");
  if (r > 0) c.lora_r = r;
  c.loss.lambda_emb = parse_real(ck.meta("lambda_emb"), "lambda_emb");
  c.loss.emb_t_plus_1 = ck.meta("emb_t_plus_1") == "1";
  c.clamp = parse_clamp_mode(ck.meta("clamp"));

  auto vocab = Vocabulary::from_tokens(split_tokens(ck.meta("vocab")));
  if (vocab.size() != V) throw FormatError("checkpoint: vocabulary size disagrees with the config block");

  Rng rng(0);
  DiffusionBundle b{c, std::move(vocab), DenoiserModel::init(c.model, rng),
                    EmbeddingTable::init(V, static_cast<std::size_t>(c.model.d), rng, c.sigma0, c.quant),
                    NoiseSchedule::build(c.model.T, c.schedule, c.s0)};
  if (r > 0) b.model.apply_lora(r, c.lora_alpha, rng);
  load_params(ck, b.model.parameters());
  load_params(ck, ParamList{{"embedding", b.table.matrix}});
  return b;
}

}  // namespace qedlm
