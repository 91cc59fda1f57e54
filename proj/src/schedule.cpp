#include "qedlm/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qedlm/errors.hpp"

namespace qedlm {

std::string_view to_string(ScheduleKind kind) {
  return kind == ScheduleKind::sqrt ? "sqrt" : "linear";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "sqrt") return ScheduleKind::sqrt;
  if (name == "linear") return ScheduleKind::linear;
  throw ConfigError("unknown schedule kind '" + std::string(name) + "'");
}

NoiseSchedule NoiseSchedule::build(int T, ScheduleKind kind, double s0) {
  if (T < 2) throw ScheduleError("schedule: T must be at least 2, got " + std::to_string(T));
  if (!(s0 > 0.0 && s0 <= 0.01)) throw ScheduleError("schedule: s0 must lie in (0, 0.01]");

  NoiseSchedule s;
  s.T_ = T;
  s.kind_ = kind;
  s.s0_ = s0;
  s.beta_.assign(static_cast<std::size_t>(T) + 1, 0.0);
  s.alpha_bar_.assign(static_cast<std::size_t>(T) + 1, 0.0);

  if (kind == ScheduleKind::sqrt) {
    s.alpha_bar_[0] = 1.0 - std::sqrt(s0);
    for (int t = 1; t <= T; ++t) {
      const double ab = 1.0 - std::sqrt(static_cast<double>(t) / T + s0);
      s.alpha_bar_[t] = std::max(ab, kAlphaBarFloor);
      s.beta_[t] = 1.0 - s.alpha_bar_[t] / s.alpha_bar_[t - 1];
    }
  } else {
    s.alpha_bar_[0] = 1.0;
    const double lo = 1e-4, hi = 0.02;
    for (int t = 1; t <= T; ++t) {
      s.beta_[t] = lo + (hi - lo) * static_cast<double>(t - 1) / (T - 1);
      s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - s.beta_[t]);
    }
  }

  for (int t = 1; t <= T; ++t) {
    if (!(s.beta_[t] > 0.0 && s.beta_[t] < 1.0)) {
      throw ScheduleError("schedule: beta_" + std::to_string(t) + " = " + std::to_string(s.beta_[t]) +
                          " outside (0, 1)");
    }
  }
  return s;
}

void NoiseSchedule::check_step(int t, int lo) const {
  if (t < lo || t > T_) {
    throw IndexError("schedule: step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                     std::to_string(T_) + "]");
  }
}

double NoiseSchedule::beta(int t) const {
  check_step(t, 1);
  return beta_[t];
}

double NoiseSchedule::alpha(int t) const { return 1.0 - beta(t); }

double NoiseSchedule::alpha_bar(int t) const {
  check_step(t, 0);
  return alpha_bar_[t];
}

Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) {
    throw IndexError("forward_sample: step " + std::to_string(t) + " outside [1, " +
                     std::to_string(sched.steps()) + "]");
  }
  const double ab = sched.alpha_bar(t);
  return add(scale(x0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

Tensor posterior_mean(const Tensor& x0, const Tensor& xt, int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) {
    throw IndexError("posterior_mean: step " + std::to_string(t) + " outside [1, " +
                     std::to_string(sched.steps()) + "]");
  }
  if (t == 1) return x0;
  const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t - 1);
  const double beta = sched.beta(t);
  const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
  const double ct = std::sqrt(sched.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
  return add(scale(x0, c0), scale(xt, ct));
}

double posterior_variance(int t, const NoiseSchedule& sched) {
  if (t < 2 || t > sched.steps()) {
    throw IndexError("posterior_variance: step " + std::to_string(t) + " outside [2, " +
                     std::to_string(sched.steps()) + "]");
  }
  return (1.0 - sched.alpha_bar(t - 1)) / (1.0 - sched.alpha_bar(t)) * sched.beta(t);
}

Tensor posterior_mean_between(const Tensor& x0, const Tensor& xt, int t, int t_prev,
                              const NoiseSchedule& sched) {
  if (t_prev < 0 || t_prev >= t || t > sched.steps()) {
    throw IndexError("posterior_mean_between: invalid transition " + std::to_string(t) + " -> " +
                     std::to_string(t_prev));
  }
  if (t_prev == t - 1) return posterior_mean(x0, xt, t, sched);
  const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t_prev);
  const double a_jump = ab / ab_prev;
  const double b_jump = 1.0 - a_jump;
  const double c0 = std::sqrt(ab_prev) * b_jump / (1.0 - ab);
  const double ct = std::sqrt(a_jump) * (1.0 - ab_prev) / (1.0 - ab);
  return add(scale(x0, c0), scale(xt, ct));
}

double posterior_variance_between(int t, int t_prev, const NoiseSchedule& sched) {
  if (t_prev < 0 || t_prev >= t || t > sched.steps()) {
    throw IndexError("posterior_variance_between: invalid transition " + std::to_string(t) + " -> " +
                     std::to_string(t_prev));
  }
  const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t_prev);
  const double b_jump = 1.0 - ab / ab_prev;
  return (1.0 - ab_prev) / (1.0 - ab) * b_jump;
}

}  // namespace qedlm
