#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qedlm/errors.hpp"
#include "qedlm/random.hpp"
#include "qedlm/schedule.hpp"

using namespace qedlm;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

struct Moments {
  double mean = 0, var = 0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(xs.size() - 1);
  return m;
}

}  // namespace

TEST(Schedule, SqrtFloorsTheTail) {
  const auto s = NoiseSchedule::build(2000, ScheduleKind::sqrt, 1e-4);
  EXPECT_LT(1.0 - std::sqrt(1.0001), 0.0);
  EXPECT_EQ(s.alpha_bar(2000), 1e-5);
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 1.0 - std::sqrt(1e-4));
  EXPECT_DOUBLE_EQ(s.alpha_bar(1000), 1.0 - std::sqrt(0.5 + 1e-4));
}

TEST(Schedule, LinearEndpoints) {
  const auto s = NoiseSchedule::build(4, ScheduleKind::linear);
  const double expect[4] = {1e-4, 1e-4 + 0.0199 / 3, 1e-4 + 2 * 0.0199 / 3, 0.02};
  for (int t = 1; t <= 4; ++t) EXPECT_NEAR(s.beta(t), expect[t - 1], 1e-15);
  EXPECT_NEAR(s.beta(2), 0.006733333, 1e-9);
  EXPECT_NEAR(s.beta(3), 0.013366667, 1e-9);
}

TEST(Schedule, MonotoneAndBetaInRange) {
  for (auto kind : {ScheduleKind::sqrt, ScheduleKind::linear}) {
    for (int T : {2, 8, 200, 2000}) {
      const auto s = NoiseSchedule::build(T, kind);
      EXPECT_LT(s.alpha_bar(T), s.alpha_bar(1));
      for (int t = 1; t <= T; ++t) {
        ASSERT_LT(s.alpha_bar(t), s.alpha_bar(t - 1)) << to_string(kind) << " T=" << T << " t=" << t;
        ASSERT_GT(s.beta(t), 0.0);
        ASSERT_LT(s.beta(t), 1.0);
      }
    }
  }
}

TEST(Schedule, AlphaBarIsTheProductOfAlphas) {
  for (auto kind : {ScheduleKind::sqrt, ScheduleKind::linear}) {
    const auto s = NoiseSchedule::build(2000, kind);
    double prod = s.alpha_bar(0);
    for (int t = 1; t <= 2000; ++t) {
      prod *= s.alpha(t);
      ASSERT_NEAR(s.alpha_bar(t), prod, 1e-12) << to_string(kind) << " t=" << t;
    }
  }
}

TEST(Schedule, BuildIsBitIdentical) {
  const auto a = NoiseSchedule::build(200, ScheduleKind::sqrt), b = NoiseSchedule::build(200, ScheduleKind::sqrt);
  for (int t = 1; t <= 200; ++t) {
    EXPECT_EQ(a.beta(t), b.beta(t));
    EXPECT_EQ(a.alpha_bar(t), b.alpha_bar(t));
  }
}

TEST(Schedule, Errors) {
  EXPECT_THROW(NoiseSchedule::build(1, ScheduleKind::sqrt), ScheduleError);
  EXPECT_THROW(NoiseSchedule::build(10, ScheduleKind::sqrt, 0.0), ScheduleError);
  EXPECT_THROW(NoiseSchedule::build(10, ScheduleKind::sqrt, 0.02), ScheduleError);
  const auto s = NoiseSchedule::build(10, ScheduleKind::linear);
  EXPECT_THROW(s.beta(0), IndexError);
  EXPECT_THROW(s.beta(11), IndexError);
  EXPECT_THROW(s.alpha_bar(-1), IndexError);
  auto x = Tensor::zeros({2});
  EXPECT_THROW(forward_sample(x, 0, x, s), IndexError);
  EXPECT_THROW(forward_sample(x, 11, x, s), IndexError);
  EXPECT_THROW(posterior_mean(x, x, 11, s), IndexError);
  EXPECT_THROW(posterior_variance(1, s), IndexError);
  EXPECT_THROW(parse_schedule_kind("cosine"), ConfigError);
}

TEST(ForwardSample, ZeroNoiseAndLimit) {
  const auto s = NoiseSchedule::build(2000, ScheduleKind::sqrt);
  auto x0 = Tensor::from({3}, {1.0, -2.0, 0.5});
  const auto out = vals(forward_sample(x0, 37, Tensor::zeros({3}), s));
  for (int i = 0; i < 3; ++i) EXPECT_EQ(out[i], std::sqrt(s.alpha_bar(37)) * x0.values()[i]);
  auto eps = Tensor::from({3}, {0.3, 0.1, -0.7});
  const auto tail = vals(forward_sample(x0, 2000, eps, s));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(tail[i], eps.values()[i], 0.01);
}

TEST(ForwardSample, MonteCarloMarginal) {
  const auto s = NoiseSchedule::build(200, ScheduleKind::sqrt);
  const int t = 60;
  const double x0 = 0.8;
  Rng rng(7);
  auto eps = normal_tensor({100000}, rng);
  const auto m = moments(vals(forward_sample(Tensor::full({100000}, x0), t, eps, s)));
  const double var = 1.0 - s.alpha_bar(t);
  EXPECT_NEAR(m.mean, std::sqrt(s.alpha_bar(t)) * x0, 3.0 * std::sqrt(var / 1e5));
  EXPECT_NEAR(m.var / var, 1.0, 0.02);
}

TEST(Posterior, NoiselessInputGivesScaledX0) {
  for (auto kind : {ScheduleKind::sqrt, ScheduleKind::linear}) {
    const auto s = NoiseSchedule::build(200, kind);
    Rng rng(3);
    auto x0 = uniform_tensor({4, 5}, rng, -2, 2);
    for (int t = 2; t <= 200; ++t) {
      auto xt = scale(x0, std::sqrt(s.alpha_bar(t)));
      const auto pm = vals(posterior_mean(x0, xt, t, s));
      for (std::size_t i = 0; i < pm.size(); ++i)
        ASSERT_NEAR(pm[i], std::sqrt(s.alpha_bar(t - 1)) * x0.values()[i], 1e-10) << t;
    }
  }
}

TEST(Posterior, BaseCasesAndLinearity) {
  const auto s = NoiseSchedule::build(50, ScheduleKind::sqrt);
  auto zero = Tensor::zeros({3});
  EXPECT_EQ(vals(posterior_mean(zero, zero, 10, s)), (std::vector<double>{0, 0, 0}));
  auto x0 = Tensor::from({3}, {0.1, 0.2, 0.3});
  auto xt = Tensor::from({3}, {-1.0, 0.5, 2.0});
  EXPECT_EQ(vals(posterior_mean(x0, xt, 1, s)), vals(x0));
  const double c = -3.5;
  const auto base = vals(posterior_mean(x0, xt, 20, s));
  const auto scaled = vals(posterior_mean(scale(x0, c), scale(xt, c), 20, s));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(scaled[i], c * base[i], 1e-12);
}

TEST(Posterior, VarianceMatchesIndependentFormula) {
  // Second implementation: rebuild the linear schedule from scratch.
  const int T = 10;
  const auto s = NoiseSchedule::build(T, ScheduleKind::linear);
  std::vector<double> beta(T + 1), abar(T + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    beta[t] = 1e-4 + (0.02 - 1e-4) * (t - 1) / (T - 1.0);
    abar[t] = abar[t - 1] * (1 - beta[t]);
  }
  for (int t = 2; t <= T; ++t) {
    const double expect = (1 - abar[t - 1]) / (1 - abar[t]) * beta[t];
    EXPECT_NEAR(posterior_variance(t, s), expect, 1e-15);
    EXPECT_GT(posterior_variance(t, s), 0.0);
    EXPECT_LT(posterior_variance(t, s), s.beta(t));
  }
  const auto q = NoiseSchedule::build(200, ScheduleKind::sqrt);
  for (int t = 2; t <= 200; ++t) {
    ASSERT_GT(posterior_variance(t, q), 0.0);
    ASSERT_LT(posterior_variance(t, q), q.beta(t));
  }
}

TEST(Posterior, SkipTransitionReducesToSingleStep) {
  const auto s = NoiseSchedule::build(200, ScheduleKind::sqrt);
  Rng rng(4);
  auto x0 = uniform_tensor({6}, rng, -1, 1), xt = uniform_tensor({6}, rng, -1, 1);
  for (int t = 2; t <= 200; t += 17) {
    const auto a = vals(posterior_mean_between(x0, xt, t, t - 1, s));
    const auto b = vals(posterior_mean(x0, xt, t, s));
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
    EXPECT_NEAR(posterior_variance_between(t, t - 1, s), posterior_variance(t, s), 1e-15);
  }
  // Noiseless x_t maps to sqrt(abar_{t_prev}) x0 across a skip as well.
  auto xt_clean = scale(x0, std::sqrt(s.alpha_bar(150)));
  const auto pm = vals(posterior_mean_between(x0, xt_clean, 150, 90, s));
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(pm[i], std::sqrt(s.alpha_bar(90)) * x0.values()[i], 1e-10);
}

TEST(ForwardSample, SequentialStepsMatchClosedForm) {
  // The linear schedule anchors alpha_bar_0 = 1, so x_0 is the chain start.
  const int T = 8, N = 100000;
  const auto s = NoiseSchedule::build(T, ScheduleKind::linear);
  const double x0 = 1.5;
  Rng rng(21);
  std::normal_distribution<double> normal;
  for (int t : {1, 4, 8}) {
    std::vector<double> seq(N), direct(N);
    for (int i = 0; i < N; ++i) {
      double x = x0;
      for (int k = 1; k <= t; ++k) x = std::sqrt(s.alpha(k)) * x + std::sqrt(s.beta(k)) * normal(rng);
      seq[i] = x;
      direct[i] = std::sqrt(s.alpha_bar(t)) * x0 + std::sqrt(1 - s.alpha_bar(t)) * normal(rng);
    }
    const auto a = moments(seq), b = moments(direct);
    EXPECT_NEAR(a.mean / b.mean, 1.0, 0.02) << t;
    EXPECT_NEAR(a.var / b.var, 1.0, 0.02) << t;
  }
}
