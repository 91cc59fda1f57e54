#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "qedlm/checkpoint.hpp"
#include "qedlm/denoiser.hpp"
#include "qedlm/errors.hpp"
#include "qedlm/training.hpp"

using namespace qedlm;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

DenoiserConfig tiny() {
  DenoiserConfig c;
  c.d = 4;
  c.L = 1;
  c.heads = 2;
  c.d_ff = 6;
  c.n = 3;
  c.T = 10;
  return c;
}

DenoiserModel model_of(const DenoiserConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  return DenoiserModel::init(c, rng);
}

void perturb_all(const ParamList& params, Rng& rng, double scale) {
  for (auto p : params) {
    auto v = p.tensor.mutable_values();
    for (auto& x : v) x += scale * std::uniform_real_distribution<double>(-1, 1)(rng);
  }
}

}  // namespace

TEST(DenoiserConfig, Validation) {
  DenoiserConfig c;
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.L = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Denoiser, DeterministicAndShaped) {
  const auto m = model_of({}, 1);
  Rng rng(2);
  auto x = normal_tensor({16, 16}, rng);
  const auto a = vals(m.predict(x, 17)), b = vals(m.predict(x, 17));
  EXPECT_EQ(a, b);
  EXPECT_EQ(m.predict(x, 17).shape(), (Shape{16, 16}));
  for (double v : a) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(m.predict(normal_tensor({15, 16}, rng), 1), DimensionError);
  EXPECT_THROW(m.predict(normal_tensor({16, 8}, rng), 1), DimensionError);
  EXPECT_THROW(m.predict(x, 0), IndexError);
  EXPECT_THROW(m.predict(x, 201), IndexError);
}

TEST(Denoiser, TimeStepChangesOutput) {
  const auto m = model_of({}, 3);
  Rng rng(4);
  auto x = normal_tensor({16, 16}, rng);
  std::vector<std::vector<double>> outs;
  for (int t = 1; t <= 200; ++t) outs.push_back(vals(m.predict(x, t)));
  for (int i = 0; i < 200; ++i)
    for (int j = i + 1; j < 200; ++j) ASSERT_NE(outs[i], outs[j]) << i + 1 << " vs " << j + 1;
}

TEST(Denoiser, IndependentInputsDoNotInteract) {
  const auto m = model_of({}, 5);
  Rng rng(6);
  auto a = normal_tensor({16, 16}, rng), b = normal_tensor({16, 16}, rng);
  const auto fa = vals(m.predict(a, 9)), fb = vals(m.predict(b, 40));
  EXPECT_EQ(vals(m.predict(b, 40)), fb);
  EXPECT_EQ(vals(m.predict(a, 9)), fa);
}

TEST(Denoiser, GradientMatchesFiniteDifferencesForEveryWeight) {
  const auto cfg = tiny();
  auto m = model_of(cfg, 7);
  Rng rng(8);
  perturb_all(m.parameters(), rng, 0.3);  // move layer-norm gains and biases off their trivial init
  const auto x_t = normal_tensor({3, 4}, rng), x0 = normal_tensor({3, 4}, rng);
  auto loss = [&] { return squared_l2(sub(m.predict(x_t, 4), x0)); };
  loss().backward();
  for (auto p : m.parameters()) {
    const auto analytic = p.tensor.grad();
    auto w = p.tensor.mutable_values();
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double keep = w[i], h = 1e-5;
      w[i] = keep + h;
      const double fp = loss().item();
      w[i] = keep - h;
      const double fm = loss().item();
      w[i] = keep;
      const double numeric = (fp - fm) / (2 * h);
      EXPECT_LT(std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8), 1e-4) << p.name << "[" << i << "]";
    }
  }
}

TEST(Lora, InitialOutputIsIdentical) {
  auto base = model_of({}, 9);
  auto adapted = model_of({}, 9);
  Rng rng(10);
  adapted.apply_lora(8, 16, rng);
  EXPECT_TRUE(adapted.has_lora());
  EXPECT_EQ(adapted.lora_rank(), 8);
  EXPECT_EQ(adapted.lora_alpha(), 16.0);
  auto x = normal_tensor({16, 16}, rng);
  for (int t : {1, 50, 200}) EXPECT_EQ(vals(adapted.predict(x, t)), vals(base.predict(x, t)));
}

TEST(Lora, ScaleAndRankBounds) {
  Rng rng(11);
  EXPECT_EQ(LoraAdapter::init(16, 8, 16, rng).s, 2.0);
  EXPECT_THROW(LoraAdapter::init(16, 17, 16, rng), ConfigError);
  EXPECT_THROW(LoraAdapter::init(16, 0, 16, rng), ConfigError);
  auto m = model_of({}, 12);
  EXPECT_THROW(m.apply_lora(17, 34, rng), ConfigError);
}

TEST(Lora, OnlyAdaptersTrainAndBaseStaysBitIdentical) {
  auto m = model_of({}, 13);
  Rng rng(14);
  m.apply_lora(8, 16, rng);
  std::vector<std::vector<double>> before;
  for (const auto& p : m.parameters()) before.push_back(vals(p.tensor));

  const auto trainable = m.trainable();
  EXPECT_EQ(count_elements(trainable), count_elements(m.adapters()));
  for (const auto& p : m.parameters()) {
    const bool adapter = p.name.find("lora_") != std::string::npos;
    EXPECT_EQ(p.tensor.requires_grad(), adapter) << p.name;
  }

  AdamW opt;
  for (int step = 0; step < 3; ++step) {
    auto x = normal_tensor({16, 16}, rng), x0 = normal_tensor({16, 16}, rng);
    squared_l2(sub(m.predict(x, 5), x0)).backward();
    opt.step(trainable, 1e-2);
    for (auto p : trainable) p.tensor.zero_grad();
  }
  const auto params = m.parameters();
  bool adapter_moved = false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name.find("lora_") == std::string::npos) {
      EXPECT_EQ(vals(params[i].tensor), before[i]) << params[i].name;
    } else if (vals(params[i].tensor) != before[i]) {
      adapter_moved = true;
    }
  }
  EXPECT_TRUE(adapter_moved);
}

TEST(CountParams, TableFormulas) {
  DenoiserConfig c;  // L=2, d=16
  EXPECT_EQ(count_params(c, FtMode::full_ft, 0, 0, 100, 8).formula, 3136.0);
  EXPECT_EQ(count_params(c, FtMode::lora_ft, 0, 0, 100, 8).formula, 2112.0);
  EXPECT_EQ(count_params(c, FtMode::full_ft_quant, 0, 8, 100, 8).formula, 1536.0 + 200.0);
  EXPECT_EQ(count_params(c, FtMode::lora_ft_quant, 8, 0, 100, 8).formula, 512.0 + 200.0);
  EXPECT_THROW(count_params(c, FtMode::full_ft_quant, 0, 0, 100, 8), ConfigError);
}

TEST(CountParams, LiteralEnumeration) {
  DenoiserConfig c;
  const auto lora = count_params(c, FtMode::lora_ft, 0, 0, 100, 8);
  // Two targets per layer, each with a d x r down and an r x d up matrix.
  EXPECT_EQ(lora.literal_attention, 2u * 2u * (16u * 8u + 8u * 16u));
  EXPECT_EQ(lora.literal_denoiser, lora.literal_attention);
  // The formula's 2 L d r counts one matrix per adapter pair.
  EXPECT_EQ(static_cast<double>(lora.literal_attention), 2.0 * lora.formula_attention);
  const auto full = count_params(c, FtMode::full_ft, 0, 0, 100, 8);
  EXPECT_EQ(full.literal_attention, 4u * 2u * 256u);
  EXPECT_EQ(full.formula_attention, 0.75 * static_cast<double>(full.literal_attention));
  EXPECT_EQ(full.literal, full.literal_denoiser + 1600u);
  EXPECT_GE(1.0 - static_cast<double>(lora.literal_denoiser) / full.literal_denoiser, 0.9);
}

TEST(Checkpoint, SerializeRoundTrip) {
  Checkpoint ck;
  ck.kind = CheckpointKind::teacher;
  ck.config = {1, -2, 1LL << 40};
  ck.set_meta("a", "x y\nz");
  ck.set_meta("b", "");
  ck.params = {{"w", {0.1, -1e-300, 3.5, std::nextafter(1.0, 2.0)}}, {"empty", {}}};
  const auto bytes = serialize(ck);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "QEDF");
  EXPECT_EQ(bytes[4], kCheckpointVersion);
  const auto back = deserialize(bytes);
  EXPECT_EQ(back.kind, ck.kind);
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.metadata, ck.metadata);
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(serialize(back), bytes);
  EXPECT_EQ(back.meta("a"), "x y\nz");
  EXPECT_EQ(back.meta_or("zz", "dflt"), "dflt");
  EXPECT_THROW(back.meta("zz"), FormatError);
}

TEST(Checkpoint, RejectsCorruptInput) {
  Checkpoint ck;
  ck.config = {3};
  ck.params = {{"w", {1.0, 2.0}}};
  auto bytes = serialize(ck);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = kCheckpointVersion + 1;
  try {
    deserialize(bad_version);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("incompatible format version"), std::string::npos);
  }
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() - 1})
    EXPECT_THROW(deserialize({bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)}), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize(trailing), FormatError);
}

TEST(Checkpoint, FileRoundTripAndParams) {
  const auto dir = std::filesystem::temp_directory_path() / "qedlm_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "m.qedf").string();
  const auto m = model_of({}, 15);
  Checkpoint ck;
  store_params(m.parameters(), ck);
  save_checkpoint(path, ck);
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  const auto loaded = load_checkpoint(path);
  auto other = model_of({}, 16);
  load_params(loaded, other.parameters());
  Rng rng(17);
  auto x = normal_tensor({16, 16}, rng);
  EXPECT_EQ(vals(other.predict(x, 3)), vals(m.predict(x, 3)));

  Checkpoint partial = loaded;
  partial.params.pop_back();
  EXPECT_THROW(load_params(partial, other.parameters()), FormatError);
  Checkpoint resized = loaded;
  resized.params[0].second.push_back(0.0);
  EXPECT_THROW(load_params(resized, other.parameters()), FormatError);

  EXPECT_THROW(load_checkpoint((dir / "missing.qedf").string()), IoError);
  EXPECT_THROW(save_checkpoint("/nonexistent/dir/x.qedf", ck), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, RealFormatting) {
  for (double v : {0.1, 1e-4, -3.25, 1.0 / 3.0, 6.02e23}) EXPECT_EQ(parse_real(format_real(v), "v"), v);
  EXPECT_THROW(parse_real("abc", "lr"), ConfigError);
  EXPECT_THROW(parse_real("1.5x", "lr"), ConfigError);
}
