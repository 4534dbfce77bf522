#pragma once

// Sample paths of lambda(t) = h(t) X(t)'b0 by Ogata thinning, plus the
// coefficient-recovery metrics used in the convergence and budget studies.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lobhawkes/kernel.hpp"
#include "lobhawkes/path.hpp"
#include "lobhawkes/rng.hpp"

namespace lobhawkes {

enum class CovariateLaw {
  UniformAtEvents,  // X redrawn uniform on [0,1]^K at every event, X(t) = X(T_{i-1}) on (T_{i-1}, T_i]
  Constant,         // X(t) = constant_x
  Path,             // X given by a user-supplied covariate path
};

struct SimDesign {
  KernelParams params;
  std::vector<double> b0;
  CovariateLaw law = CovariateLaw::UniformAtEvents;
  std::vector<double> constant_x;     // Constant law; defaults to ones
  std::optional<CovariatePath> path;  // Path law; its end is the horizon
  std::optional<std::size_t> jumps;   // stop at the n-th event
  std::optional<double> horizon;      // or after this many seconds
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  double burn_in = 0.0;               // leading fraction of the horizon kept only as kernel history
  bool allow_unstable = false;

  std::size_t dim() const { return b0.size(); }

  // Upper bound on g: |b0|_1 times the largest covariate value.
  double g_bound() const;

  // Throws InputError on malformed designs and on unstable ones unless forced.
  void validate() const;

  // Convergence-study design: (c, d, a) = (1, 1, 2), b0 = (2/3, 2/3, 2/3, 0, ...)
  // with covariates redrawn uniformly at events.
  // Its sup-norm branching ratio is exactly 1, so it is flagged as forced.
  static SimDesign convergence_study(std::size_t K, std::size_t jumps, std::uint64_t seed);
};

struct SimulatedPath {
  Segment segment;               // events at or before segment.path.start are burn-in history
  std::size_t history_events = 0;
  std::string rng = CounterRng::kName;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

// Event times are rounded to nanoseconds; a collision is moved 1 ns later.
// Covariate coordinate k at event i comes from its own counter stream, so
// paths for designs differing only in trailing zero coefficients share events.
SimulatedPath simulate(const SimDesign& design);

// #{k : |b_hat_k - b0_k| > alpha * max_k |b0_k|}.
std::size_t error_alpha(const std::vector<double>& b_hat, const std::vector<double>& b0, double alpha);

struct SimMetrics {
  std::vector<double> alphas;
  std::vector<std::size_t> errors;  // error_alpha per alpha
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t p = 0;
  double l1 = 0.0;  // |b_hat - b0|_1 / |b0|_1
  double l2 = 0.0;  // |b_hat - b0|_2 / |b0|_2
};

SimMetrics fp_fn(const std::vector<double>& b_hat, const std::vector<double>& b0,
                 const std::vector<double>& alphas = {0.1, 0.05, 0.01});

}  // namespace lobhawkes
