#pragma once

#include <string_view>
#include <vector>

#include "qedlm/tensor.hpp"

namespace qedlm {

enum class ScheduleKind { sqrt, linear };

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

// Noise schedule over 1-indexed steps t = 1..T. Index 0 holds the anchor
// alpha_bar_0 (1 - sqrt(s0) for sqrt, 1 for linear).
class NoiseSchedule {
 public:
  static constexpr double kAlphaBarFloor = 1e-5;

  static NoiseSchedule build(int T, ScheduleKind kind, double s0 = 1e-4);

  int steps() const { return T_; }
  ScheduleKind kind() const { return kind_; }
  double s0() const { return s0_; }

  double beta(int t) const;
  double alpha(int t) const;
  // Valid for t in [0, T].
  double alpha_bar(int t) const;

 private:
  void check_step(int t, int lo) const;

  int T_ = 0;
  ScheduleKind kind_ = ScheduleKind::sqrt;
  double s0_ = 1e-4;
  std::vector<double> beta_;       // size T+1, index 0 unused
  std::vector<double> alpha_bar_;  // size T+1
};

// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

// Mean of q(x_{t-1} | x_t, x0); t = 1 returns x0.
Tensor posterior_mean(const Tensor& x0, const Tensor& xt, int t, const NoiseSchedule& sched);
// beta_tilde_t, for 2 <= t <= T.
double posterior_variance(int t, const NoiseSchedule& sched);

// Posterior of the skip transition t -> t_prev (t_prev < t) used by the
// downsampled chain; reduces to the single-step forms when t_prev = t - 1.
Tensor posterior_mean_between(const Tensor& x0, const Tensor& xt, int t, int t_prev,
                              const NoiseSchedule& sched);
double posterior_variance_between(int t, int t_prev, const NoiseSchedule& sched);

}  // namespace qedlm
