#include "lobhawkes/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lobhawkes/errors.hpp"
#include "lobhawkes/warnings.hpp"

namespace lobhawkes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(const std::vector<double>& b, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) s += b[k] * x[k];
  return s;
}

std::vector<std::string> default_names(std::size_t K) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < K; ++k) names.push_back("x" + std::to_string(k + 1));
  return names;
}

}  // namespace

double SimDesign::g_bound() const {
  double x_max = 1.0;
  if (law == CovariateLaw::Constant && !constant_x.empty()) {
    x_max = 0.0;
    for (double x : constant_x) x_max = std::max(x_max, std::abs(x));
  } else if (law == CovariateLaw::Path && path) {
    x_max = 0.0;
    for (double x : path->values) x_max = std::max(x_max, std::abs(x));
  }
  double l1 = 0.0;
  for (double b : b0) l1 += std::abs(b);
  return l1 * x_max;
}

void SimDesign::validate() const {
  params.validate();
  if (b0.empty()) throw InputError("simulate: b0 is empty");
  for (double b : b0) {
    if (!(b >= 0.0) || !std::isfinite(b)) throw InputError("simulate: b0 must be finite and nonnegative");
  }
  if (!jumps && !horizon && law != CovariateLaw::Path) {
    throw InputError("simulate: a horizon in jumps or seconds is required");
  }
  if (jumps && *jumps == 0) throw InputError("simulate: jump horizon must be positive");
  if (horizon && !(*horizon > 0.0)) throw InputError("simulate: horizon must be positive");
  if (!(burn_in >= 0.0 && burn_in < 1.0)) throw InputError("simulate: burn-in fraction must lie in [0, 1)");
  if (law == CovariateLaw::Constant && !constant_x.empty() && constant_x.size() != b0.size()) {
    throw InputError("simulate: constant covariate has the wrong width");
  }
  if (law == CovariateLaw::Path) {
    if (!path) throw InputError("simulate: path law needs a covariate path");
    path->validate();
    if (path->dim != b0.size()) throw InputError("simulate: covariate path width differs from b0");
    for (double x : path->values) {
      if (x < 0.0) throw InputError("simulate: covariates must be nonnegative");
    }
  }
  const BranchingRatio br = branching_ratio(params, g_bound());
  if (!br.stable && !allow_unstable) {
    throw InputError("simulate: branching ratio " + std::to_string(br.value) +
                     " >= 1; set allow_unstable to simulate anyway");
  }
}

SimDesign SimDesign::convergence_study(std::size_t K, std::size_t jumps, std::uint64_t seed) {
  if (K < 3) throw InputError("convergence design needs K >= 3");
  SimDesign d;
  d.params = KernelParams{1.0, {1.0}, {2.0}};
  d.b0.assign(K, 0.0);
  for (std::size_t k = 0; k < 3; ++k) d.b0[k] = 2.0 / 3.0;
  d.law = CovariateLaw::UniformAtEvents;
  d.jumps = jumps;
  d.seed = seed;
  d.allow_unstable = true;
  return d;
}

SimulatedPath simulate(const SimDesign& design) {
  design.validate();
  const BranchingRatio br = branching_ratio(design.params, design.g_bound());
  if (!br.stable) {
    warn("simulate: sup-norm branching ratio " + std::to_string(br.value) +
         " >= 1; stationarity is not guaranteed");
  }

  const std::size_t K = design.dim();
  const KernelParams& kp = design.params;
  const std::size_t L = kp.terms();
  const std::uint64_t base = design.stream << 20;
  CounterRng thin(design.seed, base);
  std::vector<CounterRng> coords;
  coords.reserve(K);
  for (std::size_t k = 0; k < K; ++k) coords.emplace_back(design.seed, base + k + 1);

  const Timestamp origin = design.law == CovariateLaw::Path ? design.path->start : Timestamp{};
  double t_end = design.horizon.value_or(kInf);
  if (design.law == CovariateLaw::Path) t_end = std::min(t_end, design.path->duration());
  const std::size_t max_jumps = design.jumps.value_or(std::numeric_limits<std::size_t>::max());

  // Covariate state.
  std::vector<double> x(K, 1.0);
  if (design.law == CovariateLaw::Constant && !design.constant_x.empty()) x = design.constant_x;
  auto redraw = [&] {
    for (std::size_t k = 0; k < K; ++k) x[k] = coords[k].uniform();
  };
  std::size_t path_row = 0;
  double next_change = kInf;
  if (design.law == CovariateLaw::UniformAtEvents) redraw();
  if (design.law == CovariateLaw::Path) {
    const auto& p = *design.path;
    if (p.rows() == 0) throw InputError("simulate: covariate path has no rows");
    auto r = p.row(0);
    x.assign(r.begin(), r.end());
    next_change = seconds_between(p.start, p.times[0]);
  }
  double g = dot(design.b0, x);

  std::vector<double> excitation(L, 0.0);
  std::vector<double> event_times;
  std::vector<std::vector<double>> event_x;  // X(T_{i-1}) in force at each event
  event_times.reserve(design.jumps.value_or(1024));

  double t = 0.0;
  while (event_times.size() < max_jumps) {
    double h_plus = kp.c;
    for (double e : excitation) h_plus += e;
    const double bound = h_plus * g;
    const double limit = std::min(t_end, next_change);
    double candidate = kInf;
    if (bound > 0.0) candidate = t + thin.exponential() / bound;
    if (candidate > limit) {
      if (!std::isfinite(limit)) throw NumericError("simulate: intensity is zero with no covariate change ahead");
      const double dt = limit - t;
      for (std::size_t l = 0; l < L; ++l) excitation[l] *= std::exp(-kp.a[l] * dt);
      t = limit;
      if (t >= t_end) break;
      // Path law: move to the next covariate row.
      const auto& p = *design.path;
      ++path_row;
      if (path_row >= p.rows()) break;
      auto r = p.row(path_row);
      x.assign(r.begin(), r.end());
      g = dot(design.b0, x);
      next_change = seconds_between(p.start, p.times[path_row]);
      continue;
    }
    const double dt = candidate - t;
    double h = kp.c;
    for (std::size_t l = 0; l < L; ++l) {
      excitation[l] *= std::exp(-kp.a[l] * dt);
      h += excitation[l];
    }
    t = candidate;
    if (thin.uniform() * bound <= h * g) {
      event_times.push_back(t);
      if (design.law == CovariateLaw::UniformAtEvents) {
        event_x.push_back(x);
        redraw();
        g = dot(design.b0, x);
      }
      for (std::size_t l = 0; l < L; ++l) excitation[l] += kp.d[l];
    }
  }
  if (design.jumps && event_times.size() < max_jumps && !design.horizon && design.law != CovariateLaw::Path) {
    throw NumericError("simulate: stopped before reaching the jump horizon");
  }

  SimulatedPath out;
  out.seed = design.seed;
  out.stream = design.stream;
  EventStream& events = out.segment.events;
  events.reserve(event_times.size());
  for (double s : event_times) {
    Timestamp ts{origin.ns + std::llround(s * 1e9)};
    if (!events.empty() && !(events.back() < ts)) ts.ns = events.back().ns + 1;
    events.push_back(ts);
  }
  const bool stopped_on_jumps = design.jumps && events.size() == max_jumps;
  Timestamp end = stopped_on_jumps ? events.back() : Timestamp{origin.ns + std::llround(t_end * 1e9)};
  if (!events.empty() && end < events.back()) end = events.back();
  const Timestamp start{origin.ns + std::llround(design.burn_in * static_cast<double>(end.ns - origin.ns))};

  CovariatePath& path = out.segment.path;
  path.start = start;
  path.dim = K;
  path.lagged = true;
  switch (design.law) {
    case CovariateLaw::UniformAtEvents: {
      path.names = default_names(K);
      for (std::size_t i = 0; i < events.size(); ++i) {
        if (start < events[i]) path.append(events[i], event_x[i]);
      }
      if (path.times.empty() || path.times.back() < end) path.append(end, x);
      break;
    }
    case CovariateLaw::Constant: {
      path.names = default_names(K);
      if (start < end) path.append(end, x);
      break;
    }
    case CovariateLaw::Path: {
      const auto& p = *design.path;
      path.names = p.names;
      for (std::size_t j = 0; j < p.rows(); ++j) {
        const Timestamp tj = std::min(p.times[j], end);
        if (start < tj) path.append(tj, p.row(j));
        if (!(p.times[j] < end)) break;
      }
      break;
    }
  }
  out.history_events = static_cast<std::size_t>(std::upper_bound(events.begin(), events.end(), start) - events.begin());
  out.segment.validate();
  return out;
}

std::size_t error_alpha(const std::vector<double>& b_hat, const std::vector<double>& b0, double alpha) {
  if (b_hat.size() != b0.size()) throw InputError("error_alpha: length mismatch");
  double scale = 0.0;
  for (double b : b0) scale = std::max(scale, std::abs(b));
  if (scale == 0.0) scale = 1.0;
  const double threshold = alpha * scale;
  std::size_t count = 0;
  for (std::size_t k = 0; k < b0.size(); ++k) {
    if (std::abs(b_hat[k] - b0[k]) > threshold) ++count;
  }
  return count;
}

SimMetrics fp_fn(const std::vector<double>& b_hat, const std::vector<double>& b0, const std::vector<double>& alphas) {
  if (b_hat.size() != b0.size()) throw InputError("fp_fn: length mismatch");
  SimMetrics m;
  m.alphas = alphas;
  for (double a : alphas) m.errors.push_back(error_alpha(b_hat, b0, a));
  double d1 = 0.0, d2 = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t k = 0; k < b0.size(); ++k) {
    const bool truth = b0[k] != 0.0;
    const bool est = b_hat[k] != 0.0;
    if (truth) ++m.p;
    if (est && !truth) ++m.fp;
    if (!est && truth) ++m.fn;
    const double diff = b_hat[k] - b0[k];
    d1 += std::abs(diff);
    d2 += diff * diff;
    n1 += std::abs(b0[k]);
    n2 += b0[k] * b0[k];
  }
  m.l1 = n1 > 0.0 ? d1 / n1 : d1;
  m.l2 = n2 > 0.0 ? std::sqrt(d2 / n2) : std::sqrt(d2);
  return m;
}

}  // namespace lobhawkes
