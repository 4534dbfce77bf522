#include "lobhawkes/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lobhawkes/errors.hpp"
#include "lobhawkes/rng.hpp"

namespace lobhawkes {

void KernelParams::validate() const {
  if (d.size() != a.size()) throw InputError("kernel: d and a must have the same length");
  if (a.empty()) throw InputError("kernel: at least one exponential term is required");
  if (!(c > 0.0) || !std::isfinite(c)) throw InputError("kernel: baseline c must be positive");
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (!(a[l] > 0.0) || !std::isfinite(a[l])) throw InputError("kernel: decay rates must be positive");
    if (!(d[l] >= 0.0) || !std::isfinite(d[l])) throw InputError("kernel: magnitudes must be nonnegative");
  }
}

double KernelParams::kernel_mass() const {
  double mass = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) mass += d[l] / a[l];
  return mass;
}

ParameterBounds ParameterBounds::simulation() { return ParameterBounds{}; }

ParameterBounds ParameterBounds::empirical(double q_dur10, double q_dur50) {
  if (!(q_dur10 > 0.0) || !(q_dur50 > 0.0)) {
    throw InputError("bounds: duration quantiles must be positive");
  }
  ParameterBounds b;
  b.c = {1e-3 / q_dur50, 10.0 / q_dur50};
  b.d = {0.0, 1.0 / q_dur50};
  b.a = {1e-2 / q_dur10, 10.0 / q_dur10};
  b.q_dur10 = q_dur10;
  b.q_dur50 = q_dur50;
  return b;
}

void ParameterBounds::validate() const {
  if (c.empty() || d.empty() || a.empty()) throw InputError("bounds: empty interval");
  if (!(c.lo > 0.0) || !(a.lo > 0.0)) throw InputError("bounds: c and a lower bounds must be positive");
  if (d.lo < 0.0) throw InputError("bounds: d lower bound must be nonnegative");
}

bool ParameterBounds::contains(const KernelParams& params) const {
  if (!c.contains(params.c)) return false;
  for (std::size_t l = 0; l < params.terms(); ++l) {
    if (!d.contains(params.d[l]) || !a.contains(params.a[l])) return false;
  }
  return true;
}

KernelState::KernelState(std::size_t terms, Timestamp start) : time_(start), excitation_(terms, 0.0) {}

void KernelState::advance(const KernelParams& params, Timestamp t) {
  if (t < time_) {
    throw InputError("kernel state: time regression from " + std::to_string(time_.ns) + " to " +
                     std::to_string(t.ns) + " ns");
  }
  if (t == time_) return;
  const double dt = seconds_between(time_, t);
  for (std::size_t l = 0; l < excitation_.size(); ++l) {
    if (excitation_[l] != 0.0) excitation_[l] *= std::exp(-params.a[l] * dt);
  }
  time_ = t;
}

void KernelState::add_event(const KernelParams& params) {
  for (std::size_t l = 0; l < excitation_.size(); ++l) excitation_[l] += params.d[l];
}

double KernelState::total() const {
  double s = 0.0;
  for (double x : excitation_) s += x;
  return s;
}

double h_at(KernelState& state, const KernelParams& params, Timestamp t) {
  state.advance(params, t);
  return params.c + state.total();
}

namespace {

// Excitation of `state` decayed forward to `s`, without touching the state.
std::vector<double> excitation_at(const KernelParams& params, const KernelState& state, Timestamp s) {
  if (s < state.time()) throw InputError("kernel integral: interval starts before the kernel state");
  std::vector<double> out(state.excitation().begin(), state.excitation().end());
  const double dt = seconds_between(state.time(), s);
  if (dt > 0.0) {
    for (std::size_t l = 0; l < out.size(); ++l) out[l] *= std::exp(-params.a[l] * dt);
  }
  return out;
}

double interval_length(Timestamp s, Timestamp t) {
  if (t < s) throw InputError("kernel integral: interval end precedes its start");
  return seconds_between(s, t);
}

}  // namespace

namespace kernel_detail {

double integral_h(double c, std::span<const double> excitation, std::span<const double> decay, double tau) {
  double area = c * tau;
  for (std::size_t l = 0; l < excitation.size(); ++l) {
    area += excitation[l] * decay_integral(decay[l], tau);
  }
  return area;
}

double integral_h_squared(double c, std::span<const double> excitation, std::span<const double> decay,
                          double tau) {
  double area = c * c * tau;
  const std::size_t n = excitation.size();
  for (std::size_t l = 0; l < n; ++l) {
    if (excitation[l] == 0.0) continue;
    area += 2.0 * c * excitation[l] * decay_integral(decay[l], tau);
    area += excitation[l] * excitation[l] * decay_integral(2.0 * decay[l], tau);
    for (std::size_t k = l + 1; k < n; ++k) {
      area += 2.0 * excitation[l] * excitation[k] * decay_integral(decay[l] + decay[k], tau);
    }
  }
  return area;
}

}  // namespace kernel_detail

double integrate_h(const KernelParams& params, const KernelState& state, Timestamp s, Timestamp t) {
  const double tau = interval_length(s, t);
  if (tau == 0.0) return 0.0;
  const auto excitation = excitation_at(params, state, s);
  return kernel_detail::integral_h(params.c, excitation, params.a, tau);
}

double integrate_hg_squared(const KernelParams& params, const KernelState& state, double g, Timestamp s,
                            Timestamp t) {
  const double tau = interval_length(s, t);
  if (tau == 0.0 || g == 0.0) return 0.0;
  const auto excitation = excitation_at(params, state, s);
  return g * g * kernel_detail::integral_h_squared(params.c, excitation, params.a, tau);
}

double integrate_hg_squared_mc(const KernelParams& params, const KernelState& state, double g, Timestamp s,
                               Timestamp t, std::size_t samples, CounterRng& rng) {
  const double tau = interval_length(s, t);
  if (tau == 0.0 || g == 0.0 || samples == 0) return 0.0;
  const auto excitation = excitation_at(params, state, s);
  double sum = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double u = rng.uniform() * tau;
    double h = params.c;
    for (std::size_t l = 0; l < excitation.size(); ++l) h += excitation[l] * std::exp(-params.a[l] * u);
    sum += h * h;
  }
  return g * g * tau * sum / static_cast<double>(samples);
}

BranchingRatio branching_ratio(const KernelParams& params, double g_bound) {
  const double value = g_bound * params.kernel_mass();
  return {value, value < 1.0};
}

}  // namespace lobhawkes
