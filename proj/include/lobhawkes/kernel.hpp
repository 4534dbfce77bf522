#pragma once

// Sum-of-exponentials self-excitation
//
//   h(t) = c + sum_{T_j < t} sum_l d_l exp(-a_l (t - T_j))
//
// evaluated recursively through per-term running sums, plus the closed-form
// integrals of h and (h g)^2 over event-free intervals.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lobhawkes/time.hpp"

namespace lobhawkes {

class CounterRng;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return x >= lo && x <= hi; }
  bool empty() const { return !(lo <= hi); }
};

struct KernelParams {
  double c = 1.0;          // baseline rate, events per second
  std::vector<double> d;   // excitation magnitudes
  std::vector<double> a;   // decay rates, 1/second

  KernelParams() = default;
  KernelParams(double c_, std::vector<double> d_, std::vector<double> a_)
      : c(c_), d(std::move(d_)), a(std::move(a_)) {}

  std::size_t terms() const { return a.size(); }

  // c > 0, a_l > 0, d_l >= 0 and matching lengths; throws InputError.
  void validate() const;

  // Sum_l d_l / a_l, the integral of the excitation kernel.
  double kernel_mass() const;
};

// Compact parameter box used by the kernel optimizer.
struct ParameterBounds {
  Interval c{1e-9, 10.0};
  Interval d{1e-9, 1e3};
  Interval a{1e-9, 1e4};
  double q_dur10 = 1.0;  // 10% quantile of trade durations (seconds)
  double q_dur50 = 1.0;  // median trade duration (seconds)

  // Boxes used in the simulation study.
  static ParameterBounds simulation();

  // Duration-scaled boxes for exchange data:
  // c in [1e-3, 10]/q50, d in [0, 1]/q50, a in [1e-2, 10]/q10.
  static ParameterBounds empirical(double q_dur10, double q_dur50);

  void validate() const;
  bool contains(const KernelParams& params) const;
};

// Running sums D_l(t) = sum_{T_j < t} d_l exp(-a_l (t - T_j)) at time().
class KernelState {
 public:
  KernelState() = default;
  explicit KernelState(std::size_t terms, Timestamp start = {});

  Timestamp time() const { return time_; }
  std::span<const double> excitation() const { return excitation_; }
  std::size_t terms() const { return excitation_.size(); }

  // Decays the sums to `t`; throws InputError if t < time().
  void advance(const KernelParams& params, Timestamp t);

  // Registers an event at time(). It affects h only strictly after time().
  void add_event(const KernelParams& params);

  // Sum_l D_l at time().
  double total() const;

 private:
  Timestamp time_{};
  std::vector<double> excitation_;
};

// h(t) = c + sum_l D_l(t). Advances `state` to `t` (exact exponential decay).
double h_at(KernelState& state, const KernelParams& params, Timestamp t);

// Integral of h over (s, t], assuming no events strictly inside. The state
// may lag s; it is decayed to s without being modified.
double integrate_h(const KernelParams& params, const KernelState& state, Timestamp s, Timestamp t);

// Integral of (h g)^2 over (s, t] for constant g, exact including the
// cross terms exp(-(a_l + a_l') u).
double integrate_hg_squared(const KernelParams& params, const KernelState& state, double g,
                            Timestamp s, Timestamp t);

// Monte Carlo estimate of the same integral, for cross-checking only.
double integrate_hg_squared_mc(const KernelParams& params, const KernelState& state, double g,
                               Timestamp s, Timestamp t, std::size_t samples, CounterRng& rng);

struct BranchingRatio {
  double value = 0.0;
  bool stable = true;  // value < 1
};

// g_bound * sum_l d_l / a_l.
BranchingRatio branching_ratio(const KernelParams& params, double g_bound);

namespace kernel_detail {

// (1 - exp(-rate * tau)) / rate, continuous at rate -> 0.
inline double decay_integral(double rate, double tau) {
  const double x = rate * tau;
  if (std::abs(x) < 1e-12) return tau;
  return -std::expm1(-x) / rate;
}

// Integral over [0, tau] of c + sum_l D_l exp(-a_l u).
double integral_h(double c, std::span<const double> excitation, std::span<const double> decay,
                  double tau);

// Integral over [0, tau] of (c + sum_l D_l exp(-a_l u))^2.
double integral_h_squared(double c, std::span<const double> excitation,
                          std::span<const double> decay, double tau);

}  // namespace kernel_detail

}  // namespace lobhawkes

