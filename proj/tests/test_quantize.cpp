#include <gtest/gtest.h>

#include <cmath>

#include "qedlm/errors.hpp"
#include "qedlm/quantize.hpp"
#include "qedlm/random.hpp"

using namespace qedlm;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

std::vector<double> pass_through(const Tensor& x, const std::function<Tensor(const Tensor&)>& q) {
  auto p = Tensor::parameter(x.shape(), vals(x));
  sum(q(p)).backward();
  return p.grad();
}

bool is_power_of_two(double m) {
  int e = 0;
  return std::frexp(m, &e) == 0.5;
}

std::vector<QuantizerSpec> all_specs() {
  return {QuantizerSpec::binary(),          QuantizerSpec::ternary(),          QuantizerSpec::points(2, -4, 4),
          QuantizerSpec::fixed_point(4),    QuantizerSpec::part_select(-1, 8), QuantizerSpec::part_select(1, 8),
          parse_quantizer("Q0i.4f")};
}

}  // namespace

TEST(Binarize, Examples) {
  EXPECT_EQ(vals(binarize(Tensor::from({3}, {0.3, -0.2, 1.7}))), (std::vector<double>{1, -1, 1}));
  EXPECT_EQ(vals(binarize(Tensor::from({2}, {0, 0}))), (std::vector<double>{1, 1}));
  EXPECT_EQ(pass_through(Tensor::from({3}, {0.3, -0.2, 1.7}), binarize), (std::vector<double>{1, 1, 0}));
}

TEST(Ternarize, Examples) {
  EXPECT_EQ(ternarize_value(0.7), 1.0);
  EXPECT_EQ(ternarize_value(0.5), 0.0);
  EXPECT_EQ(ternarize_value(-0.2), 0.0);
  EXPECT_EQ(ternarize_value(-0.6), -1.0);
}

TEST(Ternarize, ZeroFractionOnUniformInputs) {
  Rng rng(1);
  auto x = uniform_tensor({10000}, rng, -1, 1);
  std::size_t zeros = 0;
  const auto q = ternarize(x);
  for (double v : q.values()) zeros += v == 0.0;
  EXPECT_NEAR(zeros / 1e4, 0.5, 0.05);
}

TEST(Points, Examples) {
  EXPECT_EQ(points_value(3.0, 2, -4, 4), 2.0);
  EXPECT_EQ(points_value(100.0, 2, -4, 4), 4.0);
  for (int n = 1; n <= 16; ++n) EXPECT_EQ(points_value(0.0, n, -4, 4), 0.0);
}

TEST(FixedPoint, Examples) {
  EXPECT_EQ(fixed_point_value(0.3, 4), 0.3125);
  EXPECT_EQ(fixed_point_value(20.0, 4), 15.0);
  for (int k = 0; k <= 15 * 16; ++k) EXPECT_EQ(fixed_point_value(k / 16.0, 4), k / 16.0);
}

TEST(PartSelect, Examples) {
  const double lo = 1e-9, hi = 1e9;
  EXPECT_EQ(part_select_value(0.3, -1, lo, hi), 0.25);
  EXPECT_EQ(part_select_value(5.0, 1, lo, hi), 4.0);
  EXPECT_EQ(part_select_value(0.0, 1, lo, hi), 0.0);
  EXPECT_EQ(part_select_value(-0.3, -1, lo, hi), -0.25);
  EXPECT_EQ(part_select_value(0.3, -1, 0.5, 1.0), 0.5);
}

TEST(PartSelect, SelectorDecidesTies) {
  // log2(2^1.5) = 1.5 exactly at the midpoint; s flips the rounding direction.
  const double x = std::exp2(1.5);
  EXPECT_EQ(part_select_value(x, 1, 1e-9, 1e9), 4.0);
  EXPECT_EQ(part_select_value(x, -1, 1e-9, 1e9), 2.0);
}

TEST(QuantizerSpec, ParsesNames) {
  auto f = parse_quantizer("Q0i.8f");
  EXPECT_EQ(f.kind, QuantKind::part_select);
  EXPECT_EQ(f.s, -1);
  EXPECT_EQ(f.n_bits, 8);
  EXPECT_EQ(f.v_min, std::ldexp(1.0, -8));
  EXPECT_EQ(f.v_max, 1.0);
  EXPECT_EQ(f.label, "Q0i.8f");
  auto i = parse_quantizer("Q8i.0f");
  EXPECT_EQ(i.s, 1);
  EXPECT_EQ(i.v_max, 256.0);
  EXPECT_EQ(parse_quantizer("Q0i8f").s, -1);
  EXPECT_EQ(parse_quantizer("tern").kind, QuantKind::ternary);
  EXPECT_EQ(parse_quantizer("bnn").kind, QuantKind::binary);
  EXPECT_EQ(parse_quantizer("none").kind, QuantKind::none);
  EXPECT_EQ(parse_quantizer("points3").n_bits, 3);
  EXPECT_EQ(parse_quantizer("fixed4").kind, QuantKind::fixed_point);
}

TEST(QuantizerSpec, RejectsInvalid) {
  EXPECT_THROW(parse_quantizer("Q0i.0f"), SpecError);
  EXPECT_THROW(parse_quantizer("Q4i.4f"), SpecError);
  EXPECT_THROW(parse_quantizer("points0"), SpecError);
  EXPECT_THROW(parse_quantizer("fixed17"), SpecError);
  EXPECT_THROW(parse_quantizer("int8"), SpecError);
  EXPECT_THROW(QuantizerSpec::points(2, 1.0, 1.0), SpecError);
  QuantizerSpec bad = QuantizerSpec::part_select(-1, 4);
  bad.s = 0;
  EXPECT_THROW(bad.validate(), SpecError);
  EXPECT_THROW(points_quantize(Tensor::zeros({2}), QuantizerSpec::ternary()), SpecError);
}

TEST(Quantize, NoneIsTheSameNode) {
  auto x = Tensor::parameter({2}, {0.1, 0.2});
  EXPECT_EQ(quantize(x, QuantizerSpec::none()).values().data(), x.values().data());
}

class QuantizerProperties : public ::testing::TestWithParam<std::size_t> {};

TEST_P(QuantizerProperties, IdempotentMonotoneAndInRange) {
  const auto spec = all_specs().at(GetParam());
  Rng rng(GetParam());
  auto x = uniform_tensor({10000}, rng, -20, 20);
  std::vector<double> xs = vals(x);
  std::sort(xs.begin(), xs.end());
  auto sorted = Tensor::from({xs.size()}, xs);
  const auto q = vals(quantize(sorted, spec));
  const auto qq = vals(quantize(Tensor::from({q.size()}, q), spec));
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (spec.kind != QuantKind::points) {
      ASSERT_EQ(qq[i], q[i]) << spec.label << " at " << xs[i];
    }
    if (i > 0) ASSERT_LE(q[i - 1], q[i]) << spec.label << " at " << xs[i];
    switch (spec.kind) {
      case QuantKind::binary: ASSERT_TRUE(q[i] == 1.0 || q[i] == -1.0); break;
      case QuantKind::ternary: ASSERT_TRUE(q[i] == 1.0 || q[i] == 0.0 || q[i] == -1.0); break;
      case QuantKind::fixed_point:
        ASSERT_GE(q[i], 0.0);
        ASSERT_LE(q[i], 15.0);
        ASSERT_EQ(std::ldexp(q[i], 4), std::round(std::ldexp(q[i], 4)));
        break;
      case QuantKind::part_select:
        ASSERT_TRUE(q[i] == 0.0 || is_power_of_two(std::abs(q[i])));
        ASSERT_GE(std::abs(q[i]), spec.v_min);
        ASSERT_LE(std::abs(q[i]), spec.v_max);
        break;
      case QuantKind::points:
        ASSERT_GE(q[i], spec.v_min);
        ASSERT_LE(q[i], spec.v_max);
        break;
      case QuantKind::none: break;
    }
  }
}

TEST_P(QuantizerProperties, StraightThroughInsideClipRegion) {
  const auto spec = all_specs().at(GetParam());
  Rng rng(100 + GetParam());
  auto x = uniform_tensor({10000}, rng, -20, 20);
  auto upstream = uniform_tensor({10000}, rng, -3, 3);
  auto p = Tensor::parameter(x.shape(), vals(x));
  sum(mul(quantize(p, spec), upstream)).backward();
  const auto g = p.grad();
  std::size_t inside = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const bool pass = passes_gradient(x.values()[i], spec);
    inside += pass;
    ASSERT_EQ(g[i], pass ? upstream.values()[i] : 0.0) << spec.label;
  }
  EXPECT_GT(inside, 0u) << spec.label;
}

INSTANTIATE_TEST_SUITE_P(AllKinds, QuantizerProperties, ::testing::Range<std::size_t>(0, all_specs().size()),
                         [](const auto& info) {
                           std::string n = all_specs()[info.param].label;
                           for (auto& c : n) if (c == '.') c = '_';
                           return n + "_" + std::to_string(info.param);
                         });
