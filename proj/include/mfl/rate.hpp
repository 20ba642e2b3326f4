#pragma once

namespace mfl {

/// Regret-rate schedule used for scheduling and for the drift tests.
///
///   C(t)    = min(c1 sqrt(t) + c2, t)
///   rho(t)  = C(t) / t
///   rhohat(t) = 6 (log2 T + 1) ln(T / delta) rho(t)
struct RateSchedule {
  double c1 = 1.0;
  double c2 = 1.0;
  double delta = 0.1;
  int horizon = 1;

  double cumulative(double t) const;
  double rho(double t) const;
  double rho_hat(double t) const;  // throws std::invalid_argument for t < 1
  double log_term() const;         // ln(T / delta)
  void validate() const;
};

inline double rho_hat(double t, const RateSchedule& schedule) { return schedule.rho_hat(t); }

}  // namespace mfl
