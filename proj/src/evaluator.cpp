#include "lobhawkes/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <numbers>

#include <boost/math/tools/roots.hpp>

#include "lobhawkes/detail/intensity_walk.hpp"

namespace lobhawkes {

void ModelSpec::validate() const {
  const std::string name(to_string(variant));
  if (has_kernel(variant)) {
    if (!kernel) throw InputError("model " + name + ": missing kernel parameters");
    kernel->validate();
    if (kernel->terms() != kernel_terms(variant)) throw InputError("model " + name + ": wrong number of kernel terms");
  } else if (kernel) {
    throw InputError("model E carries no self-excitation");
  }
  if (has_environment(variant)) {
    if (!b || b->empty()) throw InputError("model " + name + ": missing environment coefficients");
    for (double x : *b) {
      if (!std::isfinite(x)) throw InputError("model " + name + ": non-finite coefficient");
      if (!raw_linear && x < 0.0) throw InputError("model " + name + ": negative coefficient");
    }
  } else if (b) {
    throw InputError("model " + name + " has no environment");
  }
  if (raw_linear != is_raw_linear(variant)) throw InputError("model " + name + ": raw-linear flag mismatch");
  if (raw_linear && !(floor > 0.0)) throw InputError("model " + name + ": intensity floor must be positive");
  if (encoder && b && encoder->dim() != b->size()) throw InputError("model " + name + ": encoder width differs from b");
}

ModelSpec ModelSpec::from_fit(const FitResult& fit, double floor) {
  ModelSpec spec;
  spec.variant = fit.variant;
  spec.raw_linear = is_raw_linear(fit.variant);
  spec.floor = floor;
  if (has_kernel(fit.variant)) {
    if (!fit.intensity_kernel) throw InputError("fit result lacks a kernel");
    spec.kernel = fit.intensity_kernel;
  }
  if (has_environment(fit.variant)) {
    if (!fit.env) throw InputError("fit result lacks environment coefficients");
    spec.b = fit.env->b;
  }
  spec.validate();
  return spec;
}

double IntensityTrace::log_likelihood() const {
  double s = 0.0;
  for (double lam : event_intensity) s += std::log(lam);
  return s - compensator;
}

namespace {

// Integral over [0, tau] of max(g h(u), floor), h(u) = c + sum D_l e^{-a_l u}.
// For g > 0, g h is nonincreasing, so the floor binds on a trailing interval.
double floored_integral(double c, std::span<const double> excitation, std::span<const double> decay, double g,
                        double tau, double floor) {
  if (!(g > 0.0)) return floor * tau;
  auto f = [&](double u) {
    double h = c;
    for (std::size_t l = 0; l < decay.size(); ++l) h += excitation[l] * std::exp(-decay[l] * u);
    return g * h - floor;
  };
  const double f0 = f(0.0);
  if (f0 <= 0.0) return floor * tau;
  const double f1 = f(tau);
  if (f1 >= 0.0) return g * kernel_detail::integral_h(c, excitation, decay, tau);
  std::uintmax_t iterations = 200;
  const auto bracket =
      boost::math::tools::toms748_solve(f, 0.0, tau, f0, f1, boost::math::tools::eps_tolerance<double>(52), iterations);
  const double u = 0.5 * (bracket.first + bracket.second);
  return g * kernel_detail::integral_h(c, excitation, decay, u) + floor * (tau - u);
}

std::vector<Timestamp> segment_events(const Segment& seg, HistoryPolicy policy, std::span<const Timestamp> carried) {
  std::vector<Timestamp> events;
  if (policy == HistoryPolicy::Restart) {
    auto first = std::upper_bound(seg.events.begin(), seg.events.end(), seg.path.start);
    events.assign(first, seg.events.end());
  } else if (policy == HistoryPolicy::Carry) {
    events.reserve(carried.size() + seg.events.size());
    std::set_union(carried.begin(), carried.end(), seg.events.begin(), seg.events.end(), std::back_inserter(events));
  } else {
    events = seg.events;
  }
  return events;
}

}  // namespace

IntensityTrace evaluate_intensity(const ModelSpec& spec, std::span<const Segment> sample,
                                  const EvaluationOptions& options) {
  spec.validate();
  const KernelParams& kernel = spec.kernel ? *spec.kernel : detail::flat_kernel();
  const bool floored = spec.raw_linear;
  const std::string name(to_string(spec.variant));

  IntensityTrace trace;
  std::vector<Timestamp> carried;
  std::vector<double> g;
  for (std::size_t s = 0; s < sample.size(); ++s) {
    const Segment& seg = sample[s];
    seg.validate();
    if (spec.b && seg.path.dim != spec.b->size()) throw InputError("evaluate: covariate width differs from the model");
    if (s > 0 && seg.path.start < sample[s - 1].path.end()) {
      throw InputError("evaluate: segments must be in time order and disjoint");
    }

    g.assign(seg.path.rows(), 1.0);
    if (spec.b) {
      for (std::size_t j = 0; j < seg.path.rows(); ++j) {
        const auto x = seg.path.row(j);
        double v = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) v += x[k] * (*spec.b)[k];
        g[j] = v;
      }
    }

    const std::vector<Timestamp> events = segment_events(seg, options.history, carried);
    double since = 0.0;
    detail::walk_window(
        seg.path, events, kernel,
        [&](std::size_t j, Timestamp a, Timestamp b, const KernelState& state) {
          double area;
          if (floored) {
            area = floored_integral(kernel.c, state.excitation(), kernel.a, g[j], seconds_between(a, b), spec.floor);
          } else {
            area = g[j] * integrate_h(kernel, state, a, b);
          }
          since += area;
          trace.compensator += area;
        },
        [&](std::size_t j, Timestamp t, const KernelState& state) {
          double lam = (kernel.c + state.total()) * g[j];
          if (floored) {
            lam = std::max(lam, spec.floor);
          } else if (!(lam > 0.0) || !std::isfinite(lam)) {
            throw ModelIntegrityError("model " + name + ": intensity " + std::to_string(lam) + " at event " +
                                      std::to_string(t.ns) + " ns");
          }
          trace.event_intensity.push_back(lam);
          trace.residuals.push_back(since);
          since = 0.0;
        });
    trace.T += seg.path.duration();

    if (options.history == HistoryPolicy::Carry) carried = events;
  }
  return trace;
}

double log_likelihood(const ModelSpec& spec, std::span<const Segment> sample, const EvaluationOptions& options) {
  return evaluate_intensity(spec, sample, options).log_likelihood();
}

double log_likelihood(const ModelSpec& spec, const CovariatePath& path, std::span<const Timestamp> events,
                      const EvaluationOptions& options) {
  const Segment seg{path, EventStream(events.begin(), events.end())};
  return log_likelihood(spec, std::span<const Segment>(&seg, 1), options);
}

ComparisonResult compare_traces(const IntensityTrace& t1, const IntensityTrace& t2, double quantile) {
  if (t1.event_intensity.size() != t2.event_intensity.size()) {
    throw InputError("compare: the two traces cover different events");
  }
  ComparisonResult r;
  r.quantile = quantile;
  r.L1 = t1.log_likelihood();
  r.L2 = t2.log_likelihood();
  r.n = t1.event_intensity.size();
  r.T = t1.T;
  double ss = 0.0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const double d = std::log(t1.event_intensity[i]) - std::log(t2.event_intensity[i]);
    ss += d * d;
  }
  r.sigma2 = r.T > 0.0 ? ss / r.T : 0.0;
  if (!(r.sigma2 > 0.0)) {
    r.status = ComparisonStatus::Degenerate;
    return r;
  }
  r.statistic = (r.L1 - r.L2) / std::sqrt(r.T * r.sigma2);
  return r;
}

ComparisonResult compare(const ModelSpec& spec1, const ModelSpec& spec2, std::span<const Segment> sample,
                         const EvaluationOptions& options, double quantile) {
  return compare_traces(evaluate_intensity(spec1, sample, options), evaluate_intensity(spec2, sample, options),
                        quantile);
}

namespace {

// P(sup |B| > lambda) for the Brownian bridge.
double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (lambda < 1.18) {
    const double y = std::exp(-pi * pi / (8.0 * lambda * lambda));
    double s = 0.0;
    for (int k = 1; k <= 20; ++k) s += std::pow(y, (2 * k - 1) * (2 * k - 1));
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

}  // namespace

KsResult ks_exponential(std::span<const double> sample) {
  KsResult r;
  r.n = sample.size();
  if (r.n == 0) throw InputError("ks: empty sample");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(r.n);
  for (std::size_t i = 0; i < r.n; ++i) {
    const double F = x[i] > 0.0 ? -std::expm1(-x[i]) : 0.0;
    r.statistic = std::max({r.statistic, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  const double rn = std::sqrt(n);
  r.p_value = kolmogorov_q((rn + 0.12 + 0.11 / rn) * r.statistic);
  return r;
}

RescalingDiagnostics time_rescaling_residuals(const ModelSpec& spec, std::span<const Segment> sample,
                                              const EvaluationOptions& options) {
  RescalingDiagnostics d;
  d.residuals = evaluate_intensity(spec, sample, options).residuals;
  d.ks = ks_exponential(d.residuals);
  return d;
}

void write_comparison_csv(std::ostream& out, std::span<const ComparisonRow> rows) {
  out << "model1,model2,side,statistic,L1,L2,sigma2,n,T\n";
  const auto old_precision = out.precision(17);
  for (const auto& row : rows) {
    const auto& r = row.result;
    out << row.model1 << ',' << row.model2 << ',' << row.side << ',';
    if (r.degenerate()) {
      out << "degenerate";
    } else {
      out << r.statistic;
    }
    out << ',' << r.L1 << ',' << r.L2 << ',' << r.sigma2 << ',' << r.n << ',' << r.T << '\n';
  }
  out.precision(old_precision);
}

BudgetScan scan_budget(std::span<const Segment> sample, const FitConfig& config, std::span<const double> grid) {
  if (grid.empty()) throw InputError("scan_budget: empty grid");
  if (!has_environment(config.variant) || is_raw_linear(config.variant)) {
    throw InputError("scan_budget: the variant has no budget-constrained environment");
  }
  BudgetScan scan;
  double best = std::numeric_limits<double>::infinity();
  for (double B : grid) {
    if (!(B > 0.0)) throw InputError("scan_budget: budgets must be positive");
    FitConfig cfg = config;
    cfg.budget = BudgetPolicy{BudgetRule::Fixed, B, false};
    const FitResult fit = alternate_fit(sample, cfg);
    BudgetScanEntry e;
    e.budget = B;
    e.log_likelihood = log_likelihood(ModelSpec::from_fit(fit), sample, {HistoryPolicy::AsGiven});
    e.nonzero = fit.env ? fit.env->nonzero() : 0;
    e.criterion = -e.log_likelihood + static_cast<double>(e.nonzero);
    if (e.criterion < best) {
      best = e.criterion;
      scan.best_budget = B;
    }
    scan.entries.push_back(e);
  }
  return scan;
}

}  // namespace lobhawkes
