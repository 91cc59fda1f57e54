// qedlm command-line front end.
//
//   qedlm <command> [--config FILE] [flags]
//
// Every command reads an optional flat key=value file (keys are the long
// flag names without dashes; '#' starts a comment). Flags override it.
// Exit codes: 0 ok, 2 configuration, 3 I/O, 4 numeric or guidance failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qedlm/bench.hpp"
#include "qedlm/checkpoint.hpp"
#include "qedlm/control.hpp"
#include "qedlm/decode_eval.hpp"
#include "qedlm/errors.hpp"
#include "qedlm/random.hpp"
#include "qedlm/training.hpp"

using namespace qedlm;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

// Thrown after --help output; main() exits 0.
struct HelpShown {};

void parse(CLI::App& app, int argc, char** argv) {
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    throw HelpShown{};
  }
}

void make_configurable(CLI::App& app) {
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "flat key=value file; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
}

// The effective configuration as '#' comment lines.
std::string provenance(const CLI::App& app) {
  std::ostringstream out;
  out << "# qedlm " << app.get_name() << "\n";
  std::istringstream lines(app.config_to_str(true, false));
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty()) out << "# " << line << "\n";
  }
  return out.str();
}

void require_readable(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + what + " '" + path + "'");
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << std::flush;
  } else {
    write_file_atomic(path, text);
  }
}

// Non-empty lines that are not '#' comments.
std::vector<std::string> read_sample_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read sample file '" + path + "'");
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line.front() == '#') continue;
    out.push_back(line);
  }
  return out;
}

TokenIds to_ids(const std::string& line, const Vocabulary& vocab) {
  TokenIds ids;
  for (const auto& w : tokenize(line)) ids.push_back(vocab.id(w));
  return ids;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// ----------------------------------------------------------------- corpus

int cmd_corpus(int argc, char** argv) {
  CLI::App app{"Write the templated toy restaurant corpus", "corpus"};
  make_configurable(app);
  std::size_t count = 2000;
  std::uint64_t seed = 0;
  std::string out, vocab_out;
  app.add_option("--count", count, "number of lines")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--out", out, "corpus file")->required();
  app.add_option("--vocab-out", vocab_out, "also write the vocabulary built from it");
  parse(app, argc, argv);

  const Corpus corpus = make_toy_corpus(count, seed);
  write_corpus(out, corpus);
  if (!vocab_out.empty()) {
    std::vector<std::vector<std::string>> sentences;
    for (const auto& l : corpus) sentences.push_back(l.words);
    Vocabulary::build(sentences).save(vocab_out);
  }
  std::cout << "wrote " << corpus.size() << " lines to " << out << "\n";
  return 0;
}

// ------------------------------------------------------------------ train

int cmd_train(int argc, char** argv) {
  CLI::App app{"Train the diffusion LM end to end", "train"};
  make_configurable(app);
  TrainConfig cfg;
  std::string corpus_path, vocab_path, out, report, base_path, mode = "full_ft", quant = "none";
  std::string schedule = "sqrt", clamp = "nearest";
  app.add_option("--corpus", corpus_path, "training corpus")->required();
  app.add_option("--vocab", vocab_path, "vocabulary file (default: built from the corpus)");
  app.add_option("--out", out, "checkpoint path")->required();
  app.add_option("--report", report, "CSV report path (default: <out>.csv)");
  app.add_option("--base", base_path, "base checkpoint for lora_ft");
  app.add_option("--mode", mode, "full_ft or lora_ft");
  app.add_option("--quant", quant, "embedding quantizer (none, binary, ternary, points<n>, fixed<n>, Q0i.8f, ...)");
  app.add_option("--lr", cfg.lr);
  app.add_option("--iterations", cfg.iterations);
  app.add_option("--batch-size", cfg.batch_size);
  app.add_option("--dropout", cfg.dropout);
  app.add_option("--seed", cfg.seed);
  app.add_option("--d", cfg.model.d, "embedding and model width");
  app.add_option("--layers", cfg.model.L);
  app.add_option("--heads", cfg.model.heads);
  app.add_option("--d-ff", cfg.model.d_ff);
  app.add_option("--n", cfg.model.n, "sequence length including START and END");
  app.add_option("--T", cfg.model.T, "diffusion steps");
  app.add_option("--schedule", schedule, "sqrt or linear");
  app.add_option("--s0", cfg.s0);
  app.add_option("--sigma0", cfg.sigma0, "embedding noise; negative selects 0.1 x init scale");
  app.add_option("--lora-r", cfg.lora_r);
  app.add_option("--lora-alpha", cfg.lora_alpha);
  app.add_option("--lambda-emb", cfg.loss.lambda_emb, "negative selects 1/(n d)");
  app.add_option("--emb-t-plus-1", cfg.loss.emb_t_plus_1);
  app.add_option("--clamp", clamp, "clamp mode stored for sampling");
  app.add_option("--report-every", cfg.report_every);
  app.add_option("--eval-size", cfg.eval_size);
  parse(app, argc, argv);

  cfg.mode = parse_train_mode(mode);
  cfg.quant = parse_quantizer(quant);
  cfg.schedule = parse_schedule_kind(schedule);
  cfg.clamp = parse_clamp_mode(clamp);
  cfg.validate();
  if (report.empty()) report = out + ".csv";

  require_readable(corpus_path, "corpus");
  if (!vocab_path.empty()) require_readable(vocab_path, "vocabulary");
  if (!base_path.empty()) require_readable(base_path, "base checkpoint");
  if (cfg.mode == TrainMode::lora_ft && base_path.empty()) {
    throw ConfigError("train: mode lora_ft needs --base");
  }

  const Corpus corpus = read_corpus(corpus_path);
  DiffusionBundle base;
  if (!base_path.empty()) base = from_checkpoint(load_checkpoint(base_path));
  Vocabulary vocab;
  if (!vocab_path.empty()) {
    vocab = Vocabulary::load(vocab_path);
  } else if (!base_path.empty()) {
    vocab = base.vocab;
  } else {
    std::vector<std::vector<std::string>> sentences;
    for (const auto& l : corpus) sentences.push_back(l.words);
    vocab = Vocabulary::build(sentences);
  }

  const auto result = train(cfg, corpus, vocab, base_path.empty() ? nullptr : &base);
  const std::string header = provenance(app);
  Checkpoint ck = to_checkpoint(result.bundle);
  ck.set_meta("cli.config", header);
  save_checkpoint(out, ck);
  emit(report, header + result.report.to_csv());

  const auto& last = result.report.rows.back();
  std::cout << "train: " << result.report.rows.size() << " report rows, final eval_mse " << fmt(last.eval_mse)
            << ", eval_loss " << fmt(last.eval_loss) << "\n"
            << "checkpoint " << out << ", report " << report << "\n";
  return 0;
}

// -------------------------------------------------------- sample / control

struct SamplingFlags {
  std::string model, out, quant, clamp = "nearest";
  GuidanceConfig guide;
  int samples = 10;
  std::uint64_t seed = 0;
  int jobs = 1;

  void add_to(CLI::App& app) {
    app.add_option("--model", model, "diffusion checkpoint")->required();
    app.add_option("--samples", samples, "number of chains")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "chain i uses seed + i");
    app.add_option("--out", out, "sample file (default: stdout)");
    app.add_option("--jobs", jobs, "parallel chains")->check(CLI::PositiveNumber);
    app.add_option("--sample-steps", guide.sample_steps, "reverse steps after downsampling");
    app.add_option("--clamp", clamp, "none, nearest or quantized_nearest");
    app.add_option("--clamp-start", guide.clamp_start, "clamp only at t <= this; negative: always");
    app.add_option("--quant", quant, "sampling-time part selector (Q0i.8f, Q8i.0f); empty keeps training quantizer");
    app.add_option("--q-n", guide.q_n, "sampling-time selector bits");
    app.add_option("--c", guide.c, "sampling-time selector part: -1 fractional, 1 integer, 0 off");
  }

  void resolve() {
    guide.clamp = parse_clamp_mode(clamp);
    if (!quant.empty() && quant != "none") {
      const auto q = parse_quantizer(quant);
      if (q.kind != QuantKind::part_select) {
        throw ConfigError("--quant at sampling time must be a part selector such as Q0i.8f, got '" + quant + "'");
      }
      guide.q_n = q.n_bits;
      guide.c = q.s;
    }
  }
};

std::string render_all(const std::vector<TokenIds>& samples, const Vocabulary& vocab) {
  std::string text;
  for (const auto& s : samples) text += render_sample(vocab, s) + "\n";
  return text;
}

int cmd_sample(int argc, char** argv) {
  CLI::App app{"Unguided sampling", "sample"};
  make_configurable(app);
  SamplingFlags f;
  f.add_to(app);
  parse(app, argc, argv);
  f.resolve();
  require_readable(f.model, "checkpoint");

  const auto bundle = from_checkpoint(load_checkpoint(f.model));
  const auto samples = sample_many(bundle, nullptr, nullptr, f.guide, f.seed, f.samples, f.jobs);
  emit(f.out, provenance(app) + render_all(samples, bundle.vocab));
  if (!f.out.empty() && f.out != "-") std::cout << "sample: wrote " << samples.size() << " lines to " << f.out << "\n";
  return 0;
}

int cmd_control(int argc, char** argv) {
  CLI::App app{"Controlled sampling", "control"};
  make_configurable(app);
  SamplingFlags f;
  f.guide.lambda = 0.01;
  f.add_to(app);
  std::string task = "semantic", field, value, classifier_path, corpus_path, classifier_out;
  int target_len = 0;
  bool no_pin_end = false;
  ClassifierConfig ccfg;
  app.add_option("--task", task, "semantic or length");
  app.add_option("--field", field, "semantic field, e.g. food");
  app.add_option("--value", value, "semantic value, e.g. Italian");
  app.add_option("--target-len", target_len, "length task: word count");
  app.add_option("--lambda", f.guide.lambda, "fluency weight");
  app.add_option("--guide-lr", f.guide.lr, "Adagrad step size");
  app.add_option("--inner-steps", f.guide.inner_steps, "Adagrad steps per diffusion step");
  app.add_flag("--no-pin-end", no_pin_end, "length task: do not pin END after the target length");
  app.add_option("--classifier", classifier_path, "trained classifier checkpoint");
  app.add_option("--corpus", corpus_path, "train a classifier on this annotated corpus");
  app.add_option("--classifier-out", classifier_out, "save the trained classifier here");
  app.add_option("--clf-hidden", ccfg.hidden);
  app.add_option("--clf-iterations", ccfg.iterations);
  app.add_option("--clf-batch-size", ccfg.batch_size);
  app.add_option("--clf-lr", ccfg.lr);
  app.add_option("--clf-max-t", ccfg.max_t, "highest training noise step (-1 = T)");
  parse(app, argc, argv);
  f.resolve();
  f.guide.pin_end = !no_pin_end;
  ccfg.seed = f.seed;

  const ControlTarget target = parse_control_task(task) == ControlTask::length
                                   ? ControlTarget::length(target_len)
                                   : ControlTarget::semantic(field, value);
  target.validate();
  require_readable(f.model, "checkpoint");
  if (!classifier_path.empty()) require_readable(classifier_path, "classifier checkpoint");
  if (!corpus_path.empty()) require_readable(corpus_path, "corpus");
  const auto bundle = from_checkpoint(load_checkpoint(f.model));

  std::optional<ControlClassifier> clf;
  if (target.task == ControlTask::semantic) {
    if (!classifier_path.empty()) {
      clf = classifier_from_checkpoint(load_checkpoint(classifier_path));
    } else if (!corpus_path.empty()) {
      auto trained = train_classifier(read_corpus(corpus_path), target.field, bundle, ccfg);
      std::cerr << "control: classifier held-out accuracy " << fmt(trained.heldout_accuracy, 4) << " on "
                << trained.heldout_count << " lines\n";
      clf = std::move(trained.classifier);
      if (!classifier_out.empty()) save_checkpoint(classifier_out, to_checkpoint(*clf));
    } else {
      throw ConfigError("control: semantic task needs --classifier or --corpus");
    }
  }

  const auto samples =
      sample_many(bundle, &target, clf ? &*clf : nullptr, f.guide, f.seed, f.samples, f.jobs);
  emit(f.out, provenance(app) + render_all(samples, bundle.vocab));

  std::size_t ok = 0;
  for (const auto& s : samples) ok += control_success(s, target, bundle.vocab) ? 1 : 0;
  const bool to_stdout = f.out.empty() || f.out == "-";
  (to_stdout ? std::cerr : std::cout) << "control: " << task << " success " << ok << "/" << samples.size() << " ("
                                      << fmt(static_cast<double>(ok) / static_cast<double>(samples.size()), 4)
                                      << ")\n";
  return 0;
}

// -------------------------------------------------------------------- mbr

int cmd_mbr(int argc, char** argv) {
  CLI::App app{"Minimum Bayes risk selection over a sample file", "mbr"};
  make_configurable(app);
  std::string samples_path, out;
  app.add_option("--samples", samples_path, "sample file, one sequence per line")->required();
  app.add_option("--out", out, "write the chosen line here as well");
  parse(app, argc, argv);

  const auto lines = read_sample_lines(samples_path);
  if (lines.empty()) throw ContractError("empty sample set in '" + samples_path + "'");
  std::vector<std::vector<std::string>> sentences;
  for (const auto& l : lines) {
    std::vector<std::string> words;
    for (auto& w : tokenize(l)) {
      if (!Vocabulary().find(w)) words.push_back(std::move(w));
    }
    sentences.push_back(std::move(words));
  }
  const auto vocab = Vocabulary::build(sentences);
  std::vector<TokenIds> ids;
  for (const auto& l : lines) ids.push_back(to_ids(l, vocab));

  const std::string& best = lines[mbr_select(ids)];
  std::cout << best << "\n";
  if (!out.empty()) write_file_atomic(out, provenance(app) + best + "\n");
  return 0;
}

// ------------------------------------------------------------------- eval

int cmd_eval(int argc, char** argv) {
  CLI::App app{"Score a sample file: control success and teacher perplexity", "eval"};
  make_configurable(app);
  std::string samples_path, teacher_path, corpus_path, teacher_out, report, task = "semantic", field, value;
  int target_len = 0;
  TeacherTrainConfig tcfg;
  app.add_option("--samples", samples_path, "sample file")->required();
  app.add_option("--task", task, "semantic or length")->required();
  app.add_option("--field", field);
  app.add_option("--value", value);
  app.add_option("--target-len", target_len);
  app.add_option("--teacher", teacher_path, "teacher LM checkpoint");
  app.add_option("--corpus", corpus_path, "train a teacher on this corpus when --teacher is absent");
  app.add_option("--teacher-out", teacher_out, "save the trained teacher here");
  app.add_option("--teacher-iterations", tcfg.iterations);
  app.add_option("--teacher-d", tcfg.model.d);
  app.add_option("--teacher-layers", tcfg.model.L);
  app.add_option("--teacher-lr", tcfg.lr);
  app.add_option("--seed", tcfg.seed);
  app.add_option("--report", report, "CSV report path");
  parse(app, argc, argv);

  const ControlTarget target = parse_control_task(task) == ControlTask::length
                                   ? ControlTarget::length(target_len)
                                   : ControlTarget::semantic(field, value);
  target.validate();
  require_readable(samples_path, "sample file");
  if (teacher_path.empty() && corpus_path.empty()) throw ConfigError("eval: needs --teacher or --corpus");
  if (!teacher_path.empty()) require_readable(teacher_path, "teacher checkpoint");
  if (!corpus_path.empty()) require_readable(corpus_path, "corpus");

  const auto lines = read_sample_lines(samples_path);
  if (lines.empty()) throw ContractError("empty sample set in '" + samples_path + "'");

  std::optional<std::pair<TeacherLM, Vocabulary>> teacher;
  if (!teacher_path.empty()) {
    teacher = teacher_from_checkpoint(load_checkpoint(teacher_path));
  } else {
    const Corpus corpus = read_corpus(corpus_path);
    std::vector<std::vector<std::string>> sentences;
    for (const auto& l : corpus) sentences.push_back(l.words);
    auto vocab = Vocabulary::build(sentences);
    teacher.emplace(train_teacher(tcfg, corpus, vocab), vocab);
    if (!teacher_out.empty()) save_checkpoint(teacher_out, to_checkpoint(teacher->first, vocab, tcfg.seed));
  }
  const auto& [lm, vocab] = *teacher;

  const auto n = static_cast<std::size_t>(lm.config().n);
  std::vector<TokenIds> samples;
  for (const auto& l : lines) {
    auto ids = to_ids(l, vocab);
    if (ids.size() > n) ids.resize(n);
    samples.push_back(std::move(ids));
  }

  EvalReport r;
  r.count = samples.size();
  for (const auto& s : samples) r.successes += control_success(s, target, vocab) ? 1 : 0;
  r.ctrl = static_cast<double>(r.successes) / static_cast<double>(r.count);
  r.lm = eval_lm(samples, lm);
  if (!std::isfinite(r.lm)) throw NumericError("eval: perplexity is not finite");

  std::cout << r.summary() << "\n";
  if (!report.empty()) write_file_atomic(report, provenance(app) + r.to_csv());
  return 0;
}

// ------------------------------------------------------------ quant-bench

int cmd_quant_bench(int argc, char** argv) {
  CLI::App app{"Quantizer reconstruction error, throughput and parameter formulas", "quant-bench"};
  make_configurable(app);
  std::vector<std::string> quants{"none", "binary", "ternary", "points2", "fixed8", "Q0i.8f", "Q8i.0f"};
  std::size_t count = 100000;
  std::uint64_t seed = 0;
  double range = 1.0;
  int repeats = 3;
  DenoiserConfig model;
  std::size_t h = 200;
  int lora_r = 8;
  std::string formula_quant = "Q0i.8f", out;
  app.add_option("--quant", quants, "quantizers to measure")->delimiter(',');
  app.add_option("--count", count, "inputs per quantizer")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed);
  app.add_option("--range", range, "inputs are uniform in [-range, range]")->check(CLI::PositiveNumber);
  app.add_option("--repeats", repeats, "timing repetitions")->check(CLI::PositiveNumber);
  app.add_option("--d", model.d);
  app.add_option("--layers", model.L);
  app.add_option("--heads", model.heads);
  app.add_option("--d-ff", model.d_ff);
  app.add_option("--n", model.n);
  app.add_option("--T", model.T);
  app.add_option("--vocab-size", h, "vocabulary size h in the formulas");
  app.add_option("--lora-r", lora_r);
  app.add_option("--formula-quant", formula_quant, "quantizer whose bit split enters the formulas");
  app.add_option("--out", out, "CSV report path");
  parse(app, argc, argv);

  std::vector<QuantizerSpec> specs;
  for (const auto& q : quants) specs.push_back(parse_quantizer(q));
  const auto [alpha, beta] = quant_bits(parse_quantizer(formula_quant));

  Rng rng(seed);
  const auto x = uniform_tensor({count}, rng, -range, range);
  const std::vector<double> inputs(x.values().begin(), x.values().end());

  std::ostringstream csv, table;
  csv << "quantizer,mean_abs_error,forward_meps,backward_meps\n";
  table << std::left << std::setw(12) << "quantizer" << std::right << std::setw(16) << "mean|x-q(x)|"
        << std::setw(14) << "fwd Melem/s" << std::setw(14) << "bwd Melem/s" << "\n";
  for (const auto& spec : specs) {
    const auto row = bench_quantizer(spec, inputs, repeats);
    csv << row.label << "," << format_real(row.mean_abs_error) << "," << fmt(row.forward_meps) << ","
        << fmt(row.backward_meps) << "\n";
    table << std::left << std::setw(12) << row.label << std::right << std::setw(16) << fmt(row.mean_abs_error)
          << std::setw(14) << fmt(row.forward_meps, 4) << std::setw(14) << fmt(row.backward_meps, 4) << "\n";
  }

  csv << "\nmode,formula,formula_attention,formula_embedding,literal,literal_denoiser,literal_attention\n";
  table << "\ntunable parameters (d=" << model.d << " L=" << model.L << " h=" << h << " r=" << lora_r
        << " alpha=" << alpha << " beta=" << beta << ")\n";
  table << std::left << std::setw(15) << "mode" << std::right << std::setw(12) << "formula" << std::setw(12)
        << "attention" << std::setw(12) << "embedding" << std::setw(12) << "literal" << "\n";
  for (const auto& r : formula_table(model, alpha, beta, h, lora_r)) {
    const auto& c = r.count;
    csv << to_string(r.mode) << "," << format_real(c.formula) << "," << format_real(c.formula_attention) << ","
        << format_real(c.formula_embedding) << "," << c.literal << "," << c.literal_denoiser << ","
        << c.literal_attention << "\n";
    table << std::left << std::setw(15) << to_string(r.mode) << std::right << std::setw(12) << fmt(c.formula, 10)
          << std::setw(12) << fmt(c.formula_attention, 10) << std::setw(12) << fmt(c.formula_embedding, 10)
          << std::setw(12) << c.literal << "\n";
  }

  std::cout << table.str();
  if (!out.empty()) write_file_atomic(out, provenance(app) + csv.str());
  return 0;
}

// ---------------------------------------------------------------- dispatch

struct Command {
  const char* name;
  const char* summary;
  std::function<int(int, char**)> run;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> all{
      {"train", "train a diffusion LM (checkpoint + CSV report)", cmd_train},
      {"sample", "unguided samples, one per line", cmd_sample},
      {"control", "semantic or length controlled samples", cmd_control},
      {"mbr", "pick one sample by minimum Bayes risk", cmd_mbr},
      {"eval", "control success and teacher perplexity of a sample file", cmd_eval},
      {"quant-bench", "quantizer error, throughput and parameter formulas", cmd_quant_bench},
      {"corpus", "write the templated toy corpus", cmd_corpus},
  };
  return all;
}

void usage(std::ostream& os) {
  os << "usage: qedlm <command> [--config FILE] [flags]\n\ncommands:\n";
  for (const auto& c : commands()) os << "  " << std::left << std::setw(13) << c.name << c.summary << "\n";
  os << "\nRun 'qedlm <command> --help' for the flags of a command.\n";
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    usage(std::cerr);
    return kExitConfig;
  }
  const std::string name = argv[1];
  if (name == "-h" || name == "--help" || name == "help") {
    usage(std::cout);
    return 0;
  }
  const Command* cmd = nullptr;
  for (const auto& c : commands()) {
    if (name == c.name) cmd = &c;
  }
  if (!cmd) {
    std::cerr << "qedlm: unknown command '" << name << "'\n";
    usage(std::cerr);
    return kExitConfig;
  }

  // The command sees itself as argv[0].
  try {
    return cmd->run(argc - 1, argv + 1);
  } catch (const HelpShown&) {
    return 0;
  } catch (const CLI::FileError& e) {
    std::cerr << "qedlm " << name << ": " << e.what() << "\n";
    return kExitIo;
  } catch (const CLI::ParseError& e) {
    std::cerr << "qedlm " << name << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "qedlm " << name << ": " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "qedlm " << name << ": " << e.what() << "\n";
    return kExitNumeric;
  } catch (const GuidanceError& e) {
    std::cerr << "qedlm " << name << ": " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "qedlm " << name << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "qedlm " << name << ": " << e.what() << "\n";
    return 1;
  }
}
