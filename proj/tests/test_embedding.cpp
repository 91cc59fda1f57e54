#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "qedlm/embedding.hpp"
#include "qedlm/errors.hpp"

using namespace qedlm;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

EmbeddingTable table_of(std::size_t V, std::size_t d, std::uint64_t seed, QuantizerSpec q = {}) {
  Rng rng(seed);
  return EmbeddingTable::init(V, d, rng, 0.1, std::move(q));
}

// Brute-force nearest row with lowest-index tie-break.
std::size_t oracle_nearest(const std::vector<double>& x, const Tensor& rows) {
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    double d = 0;
    for (std::size_t c = 0; c < rows.cols(); ++c) d += (x[c] - rows.at(r, c)) * (x[c] - rows.at(r, c));
    if (d < best_d) best_d = d, best = r;
  }
  return best;
}

}  // namespace

TEST(Vocabulary, ReservedTokensAndLookup) {
  Vocabulary v = Vocabulary::build({{"the", "cat"}, {"the", "dog"}});
  EXPECT_EQ(v.size(), 7u);
  EXPECT_EQ(v.token(Vocabulary::kStart), "START");
  EXPECT_EQ(v.token(Vocabulary::kUnk), "UNK");
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v.find(v.token(i)), i);
  EXPECT_EQ(v.id("zebra"), Vocabulary::kUnk);
  EXPECT_FALSE(v.find("zebra").has_value());
  EXPECT_THROW(v.token(99), VocabularyError);
}

TEST(Vocabulary, EncodeDecode) {
  Vocabulary v = Vocabulary::build({{"a", "b", "c"}});
  const auto ids = v.encode({"a", "b", "c"}, 8);
  EXPECT_EQ(ids, (TokenIds{0, 4, 5, 6, 1, 2, 2, 2}));
  EXPECT_EQ(v.encode({"a", "b", "c"}, 4), (TokenIds{0, 4, 5, 1}));
  EXPECT_EQ(detokenize(v, ids), "a b c");
  EXPECT_EQ(render_sample(v, ids), "START a b c END");
  EXPECT_EQ(strip_special(ids), (TokenIds{4, 5, 6}));
}

TEST(Vocabulary, RejectsBadTokenLists) {
  EXPECT_THROW(Vocabulary::from_tokens({"START", "END", "PAD", "UNK", "a", "a"}), VocabularyError);
  EXPECT_THROW(Vocabulary::from_tokens({"a", "START", "END", "PAD", "UNK"}), VocabularyError);
}

TEST(Vocabulary, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "qedlm_vocab_test.txt";
  Vocabulary v = Vocabulary::build({{"x", "y"}, {"z"}});
  v.save(path.string());
  EXPECT_EQ(Vocabulary::load(path.string()).tokens(), v.tokens());
  std::filesystem::remove(path);
  EXPECT_THROW(Vocabulary::load("/nonexistent/dir/vocab.txt"), IoError);
}

TEST(Corpus, LineFormatRoundTrip) {
  const auto line = parse_corpus_line("food=Italian area=riverside ||| The Vaults serves Italian food");
  EXPECT_EQ(line.fields.at("food"), "Italian");
  EXPECT_EQ(line.words.size(), 5u);
  EXPECT_EQ(parse_corpus_line(format_corpus_line(line)).fields, line.fields);
  EXPECT_EQ(parse_corpus_line(format_corpus_line(line)).words, line.words);
  EXPECT_TRUE(parse_corpus_line("just words here").fields.empty());
}

TEST(Corpus, ToyCorpusIsDeterministicAndAnnotated) {
  const auto a = make_toy_corpus(300, 5), b = make_toy_corpus(300, 5);
  ASSERT_EQ(a.size(), 300u);
  std::size_t held_out = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].words, b[i].words);
    EXPECT_LE(a[i].words.size(), 14u);  // fits n = 16 with START/END
    for (const auto& [field, value] : a[i].fields) {
      const auto words = tokenize(value);
      EXPECT_NE(std::search(a[i].words.begin(), a[i].words.end(), words.begin(), words.end()), a[i].words.end())
          << field;
    }
    held_out += is_eval_line(i);
  }
  EXPECT_GT(held_out, 10u);
  EXPECT_LT(held_out, 60u);
}

TEST(Embedding, NoiselessEmbedCopiesRows) {
  auto t = table_of(10, 4, 1);
  const TokenIds ids{3, 7, 7, 0};
  auto e = embed(ids, t);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(e.at(i, c), t.matrix.at(ids[i], c));
  EXPECT_THROW(embed(TokenIds{10}, t), VocabularyError);
}

TEST(Embedding, InitScaleAndRange) {
  auto t = table_of(50, 16, 2);
  EXPECT_DOUBLE_EQ(EmbeddingTable::init_scale(16), 0.125);
  for (double v : t.matrix.values()) {
    EXPECT_LE(std::abs(v), 0.125);
  }
  EXPECT_TRUE(t.matrix.requires_grad());
}

TEST(Embedding, TernaryTableOutputsOnGrid) {
  Rng rng(3);
  auto t = EmbeddingTable::init(20, 4, rng, 0.1, QuantizerSpec::ternary());
  t.matrix = Tensor::parameter({20, 4}, vals(uniform_tensor({20, 4}, rng, -2, 2)));
  const auto e = embed(TokenIds{1, 5, 19}, t);
  for (double v : e.values()) EXPECT_TRUE(v == -1.0 || v == 0.0 || v == 1.0);
}

TEST(Embedding, NoiseVarianceMatchesSigma) {
  auto t = table_of(5, 2, 4);
  t.sigma0 = 0.1;
  Rng rng(5);
  const int N = 10000;
  double s = 0, ss = 0;
  for (int i = 0; i < N; ++i) {
    auto e = embed(TokenIds{2}, t, normal_tensor({1, 2}, rng));
    const double v = e.at(0, 0) - t.matrix.at(2, 0);
    s += v;
    ss += v * v;
  }
  const double var = (ss - s * s / N) / (N - 1);
  EXPECT_NEAR(var / 0.01, 1.0, 0.05);
}

TEST(Embedding, LogitsAndRounding) {
  auto t = table_of(12, 3, 6);
  const TokenIds ids{4, 11, 0, 4};
  auto x = embed(ids, t);
  EXPECT_EQ(round_to_words(x, t), ids);
  auto lg = word_logits(x, t);
  EXPECT_EQ(lg.shape(), (Shape{4, 12}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(lg.at(i, ids[i]), 0.0);
  auto p = softmax(lg);
  for (std::size_t i = 0; i < 4; ++i) {
    double total = 0;
    for (std::size_t w = 0; w < 12; ++w) total += p.at(i, w);
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Embedding, MidpointTiesGoToLowerIndex) {
  EmbeddingTable t;
  t.matrix = Tensor::parameter({3, 2}, {5, 5, 1, 0, -1, 0});
  EXPECT_EQ(round_to_words(Tensor::from({1, 2}, {0, 0}), t), (TokenIds{1}));
  t.matrix = Tensor::parameter({3, 2}, {5, 5, -1, 0, 1, 0});
  EXPECT_EQ(round_to_words(Tensor::from({1, 2}, {0, 0}), t), (TokenIds{1}));
}

TEST(Embedding, PlantedNearestRowsRecovered) {
  auto t = table_of(40, 6, 8);
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = uniform_tensor({16, 6}, rng, -0.2, 0.2);
    TokenIds expect;
    for (std::size_t i = 0; i < 16; ++i)
      expect.push_back(oracle_nearest({x.values().begin() + i * 6, x.values().begin() + (i + 1) * 6}, t.matrix));
    ASSERT_EQ(round_to_words(x, t), expect);
  }
}

TEST(Embedding, RoundingIsScaleInvariant) {
  auto t = table_of(30, 4, 10);
  Rng rng(11);
  auto x = uniform_tensor({16, 4}, rng, -0.2, 0.2);
  const auto base = round_to_words(x, t);
  for (double c : {0.25, 3.0, 17.0}) {
    EmbeddingTable s = t;
    s.matrix = Tensor::parameter(t.matrix.shape(), vals(scale(t.matrix, c)));
    EXPECT_EQ(round_to_words(scale(x, c), s), base) << c;
  }
}

TEST(Embedding, RoundTripOnRandomSequences) {
  auto t = table_of(200, 16, 12);
  Rng rng(13);
  for (int k = 0; k < 200; ++k) {
    TokenIds s(16);
    for (auto& id : s) id = static_cast<std::size_t>(uniform_int(rng, 0, 199));
    ASSERT_EQ(round_to_words(embed(s, t), t), s);
  }
}

TEST(Embedding, WordLogitsGradient) {
  auto t = table_of(7, 3, 14);
  Rng rng(15);
  auto w = uniform_tensor({4, 7}, rng, -1, 1);
  auto x = uniform_tensor({4, 3}, rng, -0.3, 0.3);
  EXPECT_LT(finite_diff_check([&](const Tensor& v) { return sum(mul(word_logits(v, t), w)); }, x, 1e-5), 1e-4);
}

TEST(Clamp, NearestLandsOnRows) {
  auto t = table_of(25, 4, 16);
  const auto sched = NoiseSchedule::build(200, ScheduleKind::sqrt);
  Rng rng(17);
  auto x0_hat = uniform_tensor({16, 4}, rng, -0.3, 0.3);
  const int step = 50;
  auto out = clamp_step(x0_hat, step, Tensor::zeros({16, 4}), sched, t, ClampMode::nearest);
  const auto ids = round_to_words(x0_hat, t);
  const double c = std::sqrt(sched.alpha_bar(step - 1));
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(out.at(i, k) / c, t.matrix.at(ids[i], k), 1e-14);
  // Snapping twice is the same as once.
  auto eff = t.effective();
  EXPECT_EQ(vals(snap_to_rows(snap_to_rows(x0_hat, eff), eff)), vals(snap_to_rows(x0_hat, eff)));
}

TEST(Clamp, NoneScalesTheRow) {
  auto t = table_of(25, 4, 18);
  const auto sched = NoiseSchedule::build(200, ScheduleKind::sqrt);
  auto row = slice(t.matrix, 0, 6, 7);
  auto out = clamp_step(row, 10, Tensor::zeros({1, 4}), sched, t, ClampMode::none);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(out.at(0, k), std::sqrt(sched.alpha_bar(9)) * row.at(0, k));
  EXPECT_THROW(clamp_step(row, 0, Tensor::zeros({1, 4}), sched, t, ClampMode::none), IndexError);
  EXPECT_THROW(clamp_step(row, 201, Tensor::zeros({1, 4}), sched, t, ClampMode::none), IndexError);
}

TEST(Clamp, QuantizedNearestUsesGrid) {
  Rng rng(19);
  auto t = EmbeddingTable::init(30, 4, rng, 0.1, QuantizerSpec::ternary());
  t.matrix = Tensor::parameter({30, 4}, vals(uniform_tensor({30, 4}, rng, -2, 2)));
  auto eff = t.effective();
  auto x0_hat = uniform_tensor({8, 4}, rng, -2, 2);
  auto clamped = clamp_prediction(x0_hat, t, eff, ClampMode::quantized_nearest);
  // Equivalent to snapping the ternarized prediction.
  EXPECT_EQ(vals(clamped), vals(snap_to_rows(ternarize(x0_hat), eff)));
  for (double v : clamped.values()) EXPECT_TRUE(v == -1.0 || v == 0.0 || v == 1.0);
  EXPECT_EQ(to_string(parse_clamp_mode("quantized_nearest")), "quantized_nearest");
  EXPECT_THROW(parse_clamp_mode("sideways"), ConfigError);
}
