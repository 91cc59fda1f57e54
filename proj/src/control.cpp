#include "qedlm/control.hpp"

#include <cmath>
#include <exception>
#include <set>
#include <sstream>
#include <thread>

#include "qedlm/errors.hpp"

namespace qedlm {

std::string_view to_string(ControlTask task) { return task == ControlTask::semantic ? "semantic" : "length"; }

ControlTask parse_control_task(std::string_view name) {
  if (name == "semantic") return ControlTask::semantic;
  if (name == "length") return ControlTask::length;
  throw ConfigError("unknown control task '" + std::string(name) + "'");
}

ControlTarget ControlTarget::semantic(std::string field, std::string value) {
  ControlTarget t;
  t.task = ControlTask::semantic;
  t.field = std::move(field);
  t.value = std::move(value);
  return t;
}

ControlTarget ControlTarget::length(int target_len) {
  ControlTarget t;
  t.task = ControlTask::length;
  t.target_len = target_len;
  return t;
}

void ControlTarget::validate() const {
  if (task == ControlTask::semantic) {
    if (field.empty()) throw ConfigError("semantic target: empty field");
    if (value.empty()) throw ConfigError("semantic target: empty value");
  } else if (target_len < 1) {
    throw ConfigError("length target: target length must be at least 1");
  }
}

// ---- classifier -------------------------------------------------------------

Tensor ControlClassifier::logits(const Tensor& x) const {
  const Tensor flat = reshape(x, {1, n * d});
  return linear(relu(linear(flat, w1, b1)), w2, b2);
}

Tensor ControlClassifier::log_prob(const Tensor& x, std::size_t cls) const {
  const std::size_t target[1] = {cls};
  return scale(cross_entropy(logits(x), target), -1.0);
}

std::size_t ControlClassifier::predict(const Tensor& x) const {
  NoGradGuard no_grad;
  const Tensor out = logits(x);
  const auto l = out.values();
  std::size_t best = 0;
  for (std::size_t c = 1; c < l.size(); ++c)
    if (l[c] > l[best]) best = c;
  return best;
}

std::optional<std::size_t> ControlClassifier::class_index(const std::string& value) const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == value) return i;
  return std::nullopt;
}

ParamList ControlClassifier::parameters() const { return {{"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}}; }

void ControlClassifier::freeze() {
  for (auto p : parameters()) p.tensor.set_requires_grad(false);
}

ClassifierResult train_classifier(const Corpus& corpus, const std::string& field, const DiffusionBundle& bundle,
                                  const ClassifierConfig& cfg) {
  if (cfg.hidden < 1 || cfg.batch_size < 1 || cfg.iterations < 0 || !(cfg.lr > 0) ||
      cfg.max_t > bundle.sched.steps()) {
    throw ConfigError("train_classifier: invalid configuration");
  }
  const auto n = static_cast<std::size_t>(bundle.model.config().n);
  const auto d = static_cast<std::size_t>(bundle.model.config().d);
  const auto& sched = bundle.sched;
  const double sigma0 = bundle.table.sigma0;

  struct Item {
    TokenIds tokens;
    std::string label;
  };
  std::vector<Item> tr, ev;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto it = corpus[i].fields.find(field);
    if (it == corpus[i].fields.end()) continue;
    (is_eval_line(i) ? ev : tr).push_back({bundle.vocab.encode(corpus[i].words, n), it->second});
  }
  std::set<std::string> uniq;
  for (const auto& x : tr) uniq.insert(x.label);
  if (uniq.size() < 2) {
    throw DegenerateLabelError("train_classifier: field '" + field + "' has " + std::to_string(uniq.size()) +
                               " distinct value(s) in the training lines; need at least 2");
  }

  Rng rng(cfg.seed);
  ControlClassifier clf;
  clf.field = field;
  clf.classes.assign(uniq.begin(), uniq.end());
  clf.n = n;
  clf.d = d;
  const auto C = clf.classes.size(), H = static_cast<std::size_t>(cfg.hidden);
  clf.w1 = init_weight({n * d, H}, rng);
  clf.b1 = init_zeros({H});
  clf.w2 = init_weight({H, C}, rng);
  clf.b2 = init_zeros({C});

  auto label_of = [&](const Item& it) { return *clf.class_index(it.label); };
  std::vector<std::size_t> ytr, yev;
  for (const auto& x : tr) ytr.push_back(label_of(x));
  std::vector<Item> ev_known;
  for (const auto& x : ev)
    if (clf.class_index(x.label)) {
      ev_known.push_back(x);
      yev.push_back(label_of(x));
    }
  if (cfg.shuffle_labels) {
    std::uniform_int_distribution<std::size_t> pick(0, C - 1);
    for (auto& y : ytr) y = pick(rng);
    for (auto& y : yev) y = pick(rng);
  }

  Tensor eff;
  {
    NoGradGuard no_grad;
    eff = bundle.table.effective().detach();
  }
  auto latent = [&](const TokenIds& toks, int t, Rng& r) {
    NoGradGuard no_grad;
    Tensor x0 = embed_with(toks, eff, sigma0, normal_tensor({n, d}, r));
    if (t > 0) x0 = forward_sample(x0, t, normal_tensor({n, d}, r), sched);
    return x0;
  };

  ParamList params = clf.parameters();
  AdamW opt;
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  std::vector<double> xb(B * n * d);
  std::vector<std::size_t> yb(B);
  const int top_t = cfg.max_t < 0 ? sched.steps() : cfg.max_t;
  for (int it = 0; it < cfg.iterations; ++it) {
    for (std::size_t b = 0; b < B; ++b) {
      const auto idx = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(tr.size()) - 1));
      const int t = uniform_int(rng, 0, top_t);
      const auto x = latent(tr[idx].tokens, t, rng);
      std::copy(x.values().begin(), x.values().end(), xb.begin() + static_cast<std::ptrdiff_t>(b * n * d));
      yb[b] = ytr[idx];
    }
    const Tensor X = Tensor::from({B, n * d}, xb);
    const Tensor loss = cross_entropy(linear(relu(linear(X, clf.w1, clf.b1)), clf.w2, clf.b2), yb);
    loss.backward();
    opt.step(params, linear_decay_lr(cfg.lr, it, cfg.iterations));
    for (auto& p : params) p.tensor.zero_grad();
  }

  ClassifierResult res;
  Rng er(derive_seed(cfg.seed, 21));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ev_known.size(); ++i)
    if (clf.predict(latent(ev_known[i].tokens, 0, er)) == yev[i]) ++correct;
  res.heldout_count = ev_known.size();
  res.heldout_accuracy = ev_known.empty() ? 0.0 : static_cast<double>(correct) / ev_known.size();
  clf.freeze();
  res.classifier = std::move(clf);
  return res;
}

Checkpoint to_checkpoint(const ControlClassifier& clf) {
  Checkpoint ck;
  ck.kind = CheckpointKind::classifier;
  ck.config = {static_cast<std::int64_t>(clf.n), static_cast<std::int64_t>(clf.d),
               static_cast<std::int64_t>(clf.w1.cols()), static_cast<std::int64_t>(clf.classes.size())};
  ck.set_meta("field", clf.field);
  std::string classes;
  for (const auto& c : clf.classes) classes += c + '\n';
  ck.set_meta("classes", classes);
  store_params(clf.parameters(), ck);
  return ck;
}

ControlClassifier classifier_from_checkpoint(const Checkpoint& ck) {
  if (ck.kind != CheckpointKind::classifier) throw FormatError("checkpoint: not a classifier checkpoint");
  if (ck.config.size() != 4) throw FormatError("checkpoint: classifier config block must hold 4 integers");
  ControlClassifier clf;
  clf.n = static_cast<std::size_t>(ck.config[0]);
  clf.d = static_cast<std::size_t>(ck.config[1]);
  const auto H = static_cast<std::size_t>(ck.config[2]), C = static_cast<std::size_t>(ck.config[3]);
  clf.field = ck.meta("field");
  std::istringstream is(ck.meta("classes"));
  for (std::string line; std::getline(is, line);) clf.classes.push_back(line);
  if (clf.classes.size() != C) throw FormatError("checkpoint: class list disagrees with the config block");
  clf.w1 = init_zeros({clf.n * clf.d, H});
  clf.b1 = init_zeros({H});
  clf.w2 = init_zeros({H, C});
  clf.b2 = init_zeros({C});
  load_params(ck, clf.parameters());
  clf.freeze();
  return clf;
}

// ---- guided sampling --------------------------------------------------------

void GuidanceConfig::validate(int T) const {
  if (!(lambda >= 0)) throw ConfigError("guidance: lambda must be non-negative");
  if (!(lr > 0)) throw ConfigError("guidance: lr must be positive");
  if (inner_steps < 1) throw ConfigError("guidance: inner_steps must be at least 1");
  if (sample_steps < 1 || sample_steps > T) {
    throw ConfigError("guidance: sample_steps must lie in [1, T=" + std::to_string(T) + "]");
  }
  if (c < -1 || c > 1) throw ConfigError("guidance: c must be -1, 0 or +1");
  if (c != 0 && (q_n < 1 || q_n > 16)) throw ConfigError("guidance: q_n must lie in [1, 16]");
}

std::optional<QuantizerSpec> GuidanceConfig::sample_quant() const {
  if (c == 0) return std::nullopt;
  auto q = QuantizerSpec::part_select(c, q_n);
  q.label = c > 0 ? "Q" + std::to_string(q_n) + "i.0f" : "Q0i." + std::to_string(q_n) + "f";
  return q;
}

std::vector<int> downsample_steps(int T, int count) {
  if (T < 1 || count < 1 || count > T) {
    throw ConfigError("downsample: need 1 <= count <= T, got count=" + std::to_string(count) +
                      " T=" + std::to_string(T));
  }
  if (count == 1) return {T};
  std::vector<int> out;
  for (int i = 0; i < count; ++i) {
    const double pos = 1.0 + static_cast<double>(T - 1) * (count - 1 - i) / (count - 1);
    const int t = static_cast<int>(std::lround(pos));
    if (out.empty() || t < out.back()) out.push_back(t);
  }
  return out;
}

Tensor guided_update(const Tensor& x_prev, const Tensor& mu, double var, const LogProbFn& log_prob,
                     const GuidanceConfig& cfg, int step) {
  if (!(var > 0)) throw GuidanceError("guided_update: variance must be positive at step " + std::to_string(step));
  if (x_prev.shape() != mu.shape()) {
    throw DimensionError("guided_update: incompatible shapes " + shape_str(x_prev.shape()) + " and " +
                         shape_str(mu.shape()));
  }
  const Tensor m = mu.detach();
  std::vector<double> x(x_prev.values().begin(), x_prev.values().end());
  std::vector<double> acc(x.size(), 0.0);
  for (int k = 0; k < cfg.inner_steps; ++k) {
    Tensor xl = Tensor::parameter(x_prev.shape(), x);
    Tensor J = log_prob(xl);
    if (cfg.lambda > 0) J = add(J, scale(squared_l2(sub(xl, m)), -cfg.lambda / (2.0 * var)));
    if (!std::isfinite(J.item())) {
      throw GuidanceError("guided_update: non-finite objective at diffusion step " + std::to_string(step) +
                          ", inner step " + std::to_string(k + 1));
    }
    J.backward();
    const auto g = xl.grad();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw GuidanceError("guided_update: non-finite gradient at diffusion step " + std::to_string(step) +
                            ", inner step " + std::to_string(k + 1));
      }
      acc[i] += g[i] * g[i];
      x[i] += cfg.lr * g[i] / (std::sqrt(acc[i]) + 1e-10);
    }
  }
  return Tensor::from(x_prev.shape(), std::move(x));
}

namespace {

// Row layout of an encoded sequence: START, target_len words, END, PAD...
Tensor pin_length(const Tensor& x0_hat, const Tensor& eff, int target_len, bool pin_end) {
  std::vector<double> v(x0_hat.values().begin(), x0_hat.values().end());
  const std::size_t n = x0_hat.rows(), d = x0_hat.cols();
  auto put = [&](std::size_t row, std::size_t id) {
    for (std::size_t k = 0; k < d; ++k) v[row * d + k] = eff.at(id, k);
  };
  const auto end_pos = static_cast<std::size_t>(target_len) + 1;
  put(0, Vocabulary::kStart);
  for (std::size_t i = end_pos + 1; i < n; ++i) put(i, Vocabulary::kPad);
  if (pin_end && end_pos < n) put(end_pos, Vocabulary::kEnd);
  return Tensor::from(x0_hat.shape(), std::move(v));
}

}  // namespace

TokenIds sample_controlled(const DiffusionBundle& bundle, const ControlTarget* target,
                           const ControlClassifier* classifier, const GuidanceConfig& cfg, Rng& rng) {
  const auto& sched = bundle.sched;
  const int T = sched.steps();
  cfg.validate(T);
  std::optional<std::size_t> cls;
  if (target) {
    target->validate();
    if (target->task == ControlTask::semantic) {
      if (!classifier) throw ConfigError("sample_controlled: semantic control needs a classifier");
      if (classifier->field != target->field) {
        throw ConfigError("sample_controlled: classifier scores field '" + classifier->field + "', target asks for '" +
                          target->field + "'");
      }
      cls = classifier->class_index(target->value);
      if (!cls) {
        throw ConfigError("sample_controlled: value '" + target->value + "' unknown to the classifier for field '" +
                          target->field + "'");
      }
    }
  }
  const bool length = target && target->task == ControlTask::length;
  const auto n = static_cast<std::size_t>(bundle.model.config().n);
  const auto d = static_cast<std::size_t>(bundle.model.config().d);

  Tensor eff;
  {
    NoGradGuard no_grad;
    eff = bundle.table.effective().detach();
  }
  const auto quant = cfg.sample_quant();
  const ClampMode mode = quant && cfg.clamp == ClampMode::nearest ? ClampMode::quantized_nearest : cfg.clamp;

  Tensor x = normal_tensor({n, d}, rng);
  const auto steps = downsample_steps(T, cfg.sample_steps);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const int t = steps[i];
    const int t_prev = i + 1 < steps.size() ? steps[i + 1] : 0;
    Tensor clamped, x_prev, mu;
    double var = 0;
    {
      NoGradGuard no_grad;
      Tensor x0_hat = bundle.model.predict(x, t);
      if (length) x0_hat = pin_length(x0_hat, eff, target->target_len, cfg.pin_end);
      const bool clamp_now = cfg.clamp_start < 0 || t <= cfg.clamp_start;
      clamped = clamp_now ? clamp_prediction(x0_hat, bundle.table, eff, mode, quant) : x0_hat;
      if (t_prev == 0) {
        x = clamped;
        break;
      }
      const double ab = sched.alpha_bar(t_prev);
      x_prev = add(scale(clamped, std::sqrt(ab)), scale(normal_tensor({n, d}, rng), std::sqrt(1.0 - ab)));
      if (cls) {
        mu = scale(clamped, std::sqrt(ab));
        var = 1.0 - ab;
      }
    }
    if (cls) {
      x_prev = guided_update(
          x_prev, mu, var, [&](const Tensor& z) { return classifier->log_prob(z, *cls); }, cfg, t);
    }
    x = x_prev.detach();
  }
  return nearest_rows(x, eff);
}

std::vector<TokenIds> sample_many(const DiffusionBundle& bundle, const ControlTarget* target,
                                  const ControlClassifier* classifier, const GuidanceConfig& cfg,
                                  std::uint64_t seed, int count, int jobs) {
  if (count < 0) throw ConfigError("sample_many: negative sample count");
  std::vector<TokenIds> out(static_cast<std::size_t>(count));
  auto run = [&](int i) {
    Rng rng(seed + static_cast<std::uint64_t>(i));
    out[static_cast<std::size_t>(i)] = sample_controlled(bundle, target, classifier, cfg, rng);
  };
  if (jobs <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) run(i);
    return out;
  }
  const int workers = std::min(jobs, count);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (int i = w; i < count; i += workers) run(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace qedlm
