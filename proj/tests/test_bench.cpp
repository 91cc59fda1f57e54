#include <gtest/gtest.h>

#include <cmath>

#include "qedlm/bench.hpp"
#include "qedlm/random.hpp"

using namespace qedlm;

namespace {

std::vector<double> uniform_inputs(std::size_t count, double range, std::uint64_t seed) {
  Rng rng(seed);
  const auto x = uniform_tensor({count}, rng, -range, range);
  return {x.values().begin(), x.values().end()};
}

}  // namespace

TEST(QuantBench, NoneHasZeroError) {
  const auto row = bench_quantizer(QuantizerSpec::none(), uniform_inputs(1000, 1.0, 1), 1);
  EXPECT_EQ(row.mean_abs_error, 0.0);
  EXPECT_EQ(row.label, "none");
}

TEST(QuantBench, BinaryOnUniformIsHalf) {
  // E|x - sign(x)| = E(1 - |x|) = 1/2 for x ~ U[-1, 1].
  const auto row = bench_quantizer(QuantizerSpec::binary(), uniform_inputs(100000, 1.0, 2), 1);
  EXPECT_NEAR(row.mean_abs_error, 0.5, 0.02);
  EXPECT_GT(row.forward_meps, 0.0);
  EXPECT_GT(row.backward_meps, 0.0);
}

TEST(QuantBench, TernaryOnUniformIsQuarter) {
  // |x| < 1/2 maps to 0 and the rest to +-1: E = 2 * (1/2 * 1/4) = 1/4.
  const auto row = bench_quantizer(QuantizerSpec::ternary(), uniform_inputs(100000, 1.0, 3), 1);
  EXPECT_NEAR(row.mean_abs_error, 0.25, 0.01);
}

TEST(QuantBench, EmptyInputsGiveZeroRow) {
  const auto row = bench_quantizer(QuantizerSpec::ternary(), {}, 1);
  EXPECT_EQ(row.mean_abs_error, 0.0);
}

TEST(QuantBench, FormulaTableDelegatesToCountParams) {
  DenoiserConfig cfg;
  const auto rows = formula_table(cfg, 0, 8, 200, 8);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) {
    const auto direct = count_params(cfg, r.mode, 0, 8, 200, 8);
    EXPECT_EQ(r.count.formula, direct.formula);
    EXPECT_EQ(r.count.literal, direct.literal);
  }
  EXPECT_EQ(rows[0].mode, FtMode::full_ft);
  EXPECT_EQ(rows[3].mode, FtMode::lora_ft_quant);
}

TEST(QuantBench, BitSplitFollowsTheName) {
  EXPECT_EQ(quant_bits(parse_quantizer("Q0i.8f")), (std::pair{0, 8}));
  EXPECT_EQ(quant_bits(parse_quantizer("Q8i.0f")), (std::pair{8, 0}));
  EXPECT_EQ(quant_bits(QuantizerSpec::ternary()), (std::pair{0, 2}));
  EXPECT_EQ(quant_bits(QuantizerSpec::none()), (std::pair{0, 0}));
}
