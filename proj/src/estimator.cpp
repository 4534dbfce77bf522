#include "lobhawkes/estimator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

#include <boost/math/tools/minima.hpp>

#include "lobhawkes/detail/intensity_walk.hpp"
#include "lobhawkes/detail/nelder_mead.hpp"
#include "lobhawkes/qp.hpp"
#include "lobhawkes/warnings.hpp"

namespace lobhawkes {

FitAccumulators FitAccumulators::zero(Eigen::Index dim) {
  FitAccumulators acc;
  acc.v = Eigen::VectorXd::Zero(dim);
  acc.M = Eigen::MatrixXd::Zero(dim, dim);
  acc.row_mean = Eigen::VectorXd::Zero(dim);
  return acc;
}

void FitAccumulators::merge(const FitAccumulators& other) {
  if (other.dim() != dim()) throw InputError("accumulators: dimension mismatch in merge");
  const double total = static_cast<double>(updates + other.updates);
  if (total > 0.0) {
    row_mean = (row_mean * static_cast<double>(updates) + other.row_mean * static_cast<double>(other.updates)) / total;
  }
  v += other.v;
  M += other.M;
  T += other.T;
  updates += other.updates;
  events += other.events;
}

namespace {

void check_segment(const Segment& seg, Eigen::Index dim) {
  seg.validate();
  if (static_cast<Eigen::Index>(seg.path.dim) != dim) throw InputError("sample: segments differ in covariate width");
}

Eigen::Index sample_dim(std::span<const Segment> sample) {
  if (sample.empty()) throw InputError("sample: no segments");
  return static_cast<Eigen::Index>(sample.front().path.dim);
}

void add_gram(const CovariatePath& path, FitAccumulators& acc) {
  const auto K = static_cast<Eigen::Index>(path.dim);
  constexpr Eigen::Index kBlock = 256;
  Eigen::MatrixXd block(K, kBlock);
  Eigen::Index filled = 0;
  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(K, K);
  auto flush = [&] {
    if (filled == 0) return;
    lower.selfadjointView<Eigen::Lower>().rankUpdate(block.leftCols(filled));
    filled = 0;
  };
  Timestamp prev = path.start;
  for (std::size_t j = 0; j < path.rows(); ++j) {
    const auto x = path.row(j);
    const double dt = seconds_between(prev, path.times[j]);
    prev = path.times[j];
    for (Eigen::Index k = 0; k < K; ++k) acc.row_mean[k] += x[static_cast<std::size_t>(k)];
    if (dt <= 0.0) continue;
    const double w = std::sqrt(dt);
    for (Eigen::Index k = 0; k < K; ++k) block(k, filled) = w * x[static_cast<std::size_t>(k)];
    if (++filled == kBlock) flush();
  }
  flush();
  acc.M += lower.selfadjointView<Eigen::Lower>();
  acc.T += path.duration();
  acc.updates += path.rows();
}

void add_score(const CovariatePath& path, std::span<const Timestamp> events, const KernelParams* h,
               Eigen::VectorXd& v, std::size_t& counted) {
  const KernelParams& kernel = h ? *h : detail::flat_kernel();
  const auto K = static_cast<Eigen::Index>(path.dim);
  const std::size_t n = events.size();
  std::size_t idx = 0;
  KernelState state(kernel.terms(), n > 0 && events.front() < path.start ? events.front() : path.start);
  for (; idx < n && !(path.start < events[idx]); ++idx) {
    state.advance(kernel, events[idx]);
    state.add_event(kernel);
  }
  std::size_t j = 0;
  for (; idx < n; ++idx) {
    const Timestamp t = events[idx];
    while (j < path.rows() && path.times[j] < t) ++j;
    if (j == path.rows()) throw InputError("event after the end of the covariate window");
    const double hv = h_at(state, kernel, t);
    if (!(hv > 0.0) || !std::isfinite(hv)) {
      throw NumericError("kernel intensity is not positive at event time " + std::to_string(t.ns) + " ns");
    }
    const auto x = path.row(j);
    for (Eigen::Index k = 0; k < K; ++k) v[k] += x[static_cast<std::size_t>(k)] / hv;
    state.add_event(kernel);
    ++counted;
  }
}

}  // namespace

FitAccumulators accumulate(const CovariatePath& path, std::span<const Timestamp> events, const KernelParams* h) {
  Segment seg{path, EventStream(events.begin(), events.end())};
  return accumulate(std::span<const Segment>(&seg, 1), h);
}

FitAccumulators accumulate_gram(std::span<const Segment> sample) {
  const Eigen::Index K = sample_dim(sample);
  FitAccumulators acc = FitAccumulators::zero(K);
  for (const Segment& seg : sample) {
    check_segment(seg, K);
    add_gram(seg.path, acc);
    acc.events += seg.window_events();
  }
  if (acc.updates > 0) acc.row_mean /= static_cast<double>(acc.updates);
  return acc;
}

Eigen::VectorXd accumulate_score(std::span<const Segment> sample, const KernelParams* h) {
  const Eigen::Index K = sample_dim(sample);
  if (h) h->validate();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(K);
  std::size_t counted = 0;
  for (const Segment& seg : sample) {
    if (static_cast<Eigen::Index>(seg.path.dim) != K) throw InputError("sample: segments differ in covariate width");
    add_score(seg.path, seg.events, h, v, counted);
  }
  return v;
}

FitAccumulators accumulate(std::span<const Segment> sample, const KernelParams* h) {
  FitAccumulators acc = accumulate_gram(sample);
  acc.v = accumulate_score(sample, h);
  return acc;
}

std::size_t EnvCoefficients::nonzero() const {
  return static_cast<std::size_t>(std::count_if(b.begin(), b.end(), [](double x) { return x != 0.0; }));
}

double EnvCoefficients::l1() const {
  double s = 0.0;
  for (double x : b) s += std::abs(x);
  return s;
}

EnvCoefficients solve_b(const FitAccumulators& acc, const EnvConstraints& constraints) {
  const Eigen::Index K = acc.dim();
  if (!(acc.T > 0.0)) throw InputError("solve_b: empty observation window");
  QpConstraints qc;
  const double upper = constraints.beta.value_or(kUnbounded);
  if (constraints.beta && !(*constraints.beta >= 0.0)) throw InputError("solve_b: box bound must be nonnegative");
  qc.upper = Eigen::VectorXd::Constant(K, upper);
  qc.lower = constraints.signed_box ? Eigen::VectorXd::Constant(K, -upper) : Eigen::VectorXd::Zero(K);
  qc.budget = constraints.budget;
  if (!(constraints.budget >= 0.0)) throw InputError("solve_b: budget must be nonnegative");

  const Eigen::MatrixXd H = acc.M / acc.T;
  const Eigen::VectorXd f = acc.v / acc.T;
  const QpSolution sol = solve_qp(H, f, qc);
  const double scale = std::max(1.0, sol.x.lpNorm<Eigen::Infinity>());
  if (sol.kkt_residual > 1e-8 * scale) {
    std::ostringstream msg;
    msg << "solve_b: KKT residual " << sol.kkt_residual << " above tolerance after " << sol.iterations
        << " iterations";
    warn(msg.str());
  }
  EnvCoefficients out;
  out.b.assign(sol.x.data(), sol.x.data() + K);
  out.budget = constraints.budget;
  out.beta = constraints.beta;
  out.signed_box = constraints.signed_box;
  return out;
}

namespace {

// Flattened event/covariate timeline of a sample. The contrast for a kernel
// with decay rates a is quadratic in theta = (c, d_1..d_L):
//   T Q_T = theta' W theta - 2 u' theta,
//   u_0 = sum g(T_i),  u_l = sum g(T_i) E_l(T_i),
//   W = sum_pieces g^2 int (1, E(s+.))' (1, E(s+.)) over the piece,
// with E_l the unit-magnitude excitation sums.
struct Timeline {
  enum Kind : std::uint8_t { Piece, Event, History, Reset };
  struct Op {
    double tau;  // piece length or decay gap, seconds
    double w;    // g^2 for pieces, g for events
    Kind kind;
  };
  std::vector<Op> ops;
  double T = 0.0;
  std::size_t events = 0;
};

std::span<const double> segment_g(std::span<const std::vector<double>> g_rows, std::size_t s, const Segment& seg) {
  if (g_rows.empty()) return {};
  const auto& g = g_rows[s];
  if (g.size() != seg.path.rows()) throw InputError("environment values do not match the covariate rows");
  return g;
}

Timeline build_timeline(std::span<const Segment> sample, std::span<const std::vector<double>> g_rows) {
  if (sample.empty()) throw InputError("sample: no segments");
  if (!g_rows.empty() && g_rows.size() != sample.size()) throw InputError("environment values per segment mismatch");
  Timeline tl;
  for (std::size_t s = 0; s < sample.size(); ++s) {
    const Segment& seg = sample[s];
    seg.validate();
    const auto g = segment_g(g_rows, s, seg);
    auto gval = [&](std::size_t j) { return g.empty() ? 1.0 : g[j]; };
    tl.ops.push_back({0.0, 0.0, Timeline::Reset});
    const auto& ev = seg.events;
    std::size_t idx = 0;
    for (; idx < ev.size() && !(seg.path.start < ev[idx]); ++idx) {
      if (idx > 0) tl.ops.push_back({seconds_between(ev[idx - 1], ev[idx]), 0.0, Timeline::Piece});
      tl.ops.push_back({0.0, 0.0, Timeline::History});
    }
    if (idx > 0) tl.ops.push_back({seconds_between(ev[idx - 1], seg.path.start), 0.0, Timeline::Piece});
    detail::walk_window(
        seg.path, ev, detail::flat_kernel(),
        [&](std::size_t j, Timestamp a, Timestamp b, const KernelState&) {
          const double gj = gval(j);
          tl.ops.push_back({seconds_between(a, b), gj * gj, Timeline::Piece});
        },
        [&](std::size_t j, Timestamp, const KernelState&) {
          tl.ops.push_back({0.0, gval(j), Timeline::Event});
          ++tl.events;
        });
    tl.T += seg.path.duration();
  }
  if (!(tl.T > 0.0)) throw InputError("sample: empty observation window");
  return tl;
}

constexpr std::size_t kMaxTerms = 4;

struct Contrast {
  std::size_t n = 1;  // 1 + L
  Eigen::VectorXd u;
  Eigen::MatrixXd W;
};

Contrast contrast_terms(const Timeline& tl, std::span<const double> a) {
  const std::size_t L = a.size();
  if (L > kMaxTerms) throw InputError("kernel: at most 4 exponential terms are supported");
  std::array<double, kMaxTerms> E{}, em{}, phi{};
  std::array<double, kMaxTerms + 1> u{};
  std::array<double, (kMaxTerms + 1) * (kMaxTerms + 1)> W{};
  const std::size_t n = L + 1;

  for (const auto& op : tl.ops) {
    switch (op.kind) {
      case Timeline::Reset:
        E.fill(0.0);
        break;
      case Timeline::History:
        for (std::size_t l = 0; l < L; ++l) E[l] += 1.0;
        break;
      case Timeline::Event:
        u[0] += op.w;
        for (std::size_t l = 0; l < L; ++l) u[l + 1] += op.w * E[l];
        for (std::size_t l = 0; l < L; ++l) E[l] += 1.0;
        break;
      case Timeline::Piece: {
        const double tau = op.tau;
        if (tau <= 0.0) break;
        for (std::size_t l = 0; l < L; ++l) {
          em[l] = std::expm1(-a[l] * tau);
          phi[l] = -em[l] / a[l];
        }
        if (op.w != 0.0) {
          const double g2 = op.w;
          W[0] += g2 * tau;
          for (std::size_t l = 0; l < L; ++l) {
            if (E[l] == 0.0) continue;
            W[l + 1] += g2 * E[l] * phi[l];
            for (std::size_t k = l; k < L; ++k) {
              if (E[k] == 0.0) continue;
              // (1 - e_l e_k) / (a_l + a_k) without cancellation
              const double one_minus = -(em[l] + em[k] + em[l] * em[k]);
              W[(l + 1) * n + k + 1] += g2 * E[l] * E[k] * one_minus / (a[l] + a[k]);
            }
          }
        }
        for (std::size_t l = 0; l < L; ++l) E[l] *= 1.0 + em[l];
        break;
      }
    }
  }
  Contrast out;
  out.n = n;
  out.u = Eigen::VectorXd(static_cast<Eigen::Index>(n));
  out.W = Eigen::MatrixXd(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    out.u[static_cast<Eigen::Index>(i)] = u[i];
    for (std::size_t k = i; k < n; ++k) {
      const double w = i == 0 ? W[k] : W[i * n + k];
      out.W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = w;
      out.W(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = w;
    }
  }
  return out;
}

double contrast_value(const Contrast& ct, const Eigen::VectorXd& theta, double T) {
  return (theta.dot(ct.W * theta) - 2.0 * ct.u.dot(theta)) / T;
}

Eigen::VectorXd theta_of(const KernelParams& p) {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(p.terms() + 1));
  theta[0] = p.c;
  for (std::size_t l = 0; l < p.terms(); ++l) theta[static_cast<Eigen::Index>(l + 1)] = p.d[l];
  return theta;
}

struct ProfileValue {
  double q = 0.0;
  Eigen::VectorXd theta;
};

class KernelProfile {
 public:
  KernelProfile(const Timeline& tl, const ParameterBounds& bounds, std::size_t L) : tl_(tl), bounds_(bounds), L_(L) {
    lower_ = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(L + 1), bounds.d.lo);
    upper_ = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(L + 1), bounds.d.hi);
    lower_[0] = bounds.c.lo;
    upper_[0] = bounds.c.hi;
    log_lo_ = std::log(bounds.a.lo);
    log_hi_ = std::log(bounds.a.hi);
  }

  double log_lo() const { return log_lo_; }
  double log_hi() const { return log_hi_; }
  int evaluations() const { return evaluations_; }

  std::vector<double> rates(const std::vector<double>& x) const {
    std::vector<double> a(x.size());
    for (std::size_t l = 0; l < x.size(); ++l) a[l] = std::exp(std::clamp(x[l], log_lo_, log_hi_));
    return a;
  }

  ProfileValue operator()(const std::vector<double>& x) {
    ++evaluations_;
    const auto a = rates(x);
    const Contrast ct = contrast_terms(tl_, a);
    const QpSolution sol = solve_small_box_qp(ct.W, ct.u, lower_, upper_);
    return {sol.objective / tl_.T, sol.x};
  }

 private:
  const Timeline& tl_;
  const ParameterBounds& bounds_;
  std::size_t L_;
  Eigen::VectorXd lower_, upper_;
  double log_lo_ = 0.0, log_hi_ = 0.0;
  int evaluations_ = 0;
};

KernelParams assemble(const std::vector<double>& a, const Eigen::VectorXd& theta) {
  KernelParams p;
  p.c = theta[0];
  std::vector<std::size_t> order(a.size());
  for (std::size_t l = 0; l < a.size(); ++l) order[l] = l;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return a[l] < a[r]; });
  for (std::size_t l : order) {
    p.a.push_back(a[l]);
    p.d.push_back(theta[static_cast<Eigen::Index>(l + 1)]);
  }
  return p;
}

bool touches(double x, const Interval& box) {
  const double tol = 1e-9 * std::max(std::abs(box.lo), std::abs(box.hi));
  return std::abs(x - box.lo) <= std::max(tol, 1e-300) || std::abs(x - box.hi) <= tol;
}

bool on_boundary(const KernelParams& p, const ParameterBounds& b) {
  if (touches(p.c, b.c)) return true;
  for (std::size_t l = 0; l < p.terms(); ++l) {
    if (touches(p.d[l], b.d)) return true;
    const double x = std::log(p.a[l]);
    if (std::abs(x - std::log(b.a.lo)) <= 1e-7 || std::abs(x - std::log(b.a.hi)) <= 1e-7) return true;
  }
  return false;
}

}  // namespace

double quadratic_loss(std::span<const Segment> sample, const KernelParams* h,
                      std::span<const std::vector<double>> g_rows) {
  const Timeline tl = build_timeline(sample, g_rows);
  const KernelParams& kernel = h ? *h : detail::flat_kernel();
  const Contrast ct = contrast_terms(tl, kernel.a);
  return contrast_value(ct, theta_of(kernel), tl.T);
}

KernelFit fit_kernel(std::span<const Segment> sample, std::span<const std::vector<double>> g_rows,
                     const KernelFitOptions& options) {
  options.bounds.validate();
  const std::size_t L = options.terms;
  if (L == 0 || L > kMaxTerms) throw InputError("fit_kernel: number of terms must be between 1 and 4");
  const Timeline tl = build_timeline(sample, g_rows);
  if (tl.events == 0) throw InputError("fit_kernel: no events in the sample");
  KernelProfile profile(tl, options.bounds, L);
  const double lo = profile.log_lo();
  const double hi = profile.log_hi();

  std::vector<double> best_x;
  ProfileValue best;
  best.q = kUnbounded;
  auto consider = [&](const std::vector<double>& x, const ProfileValue& val) {
    if (val.q < best.q) {
      best = val;
      best_x = x;
    }
  };
  std::optional<std::vector<double>> warm;
  if (options.warm_start && options.warm_start->terms() == L) {
    std::vector<double> x;
    for (double ai : options.warm_start->a) x.push_back(std::log(std::max(ai, 1e-300)));
    warm = x;
  }

  bool converged = true;
  if (hi - lo <= 0.0) {
    const std::vector<double> x(L, lo);
    consider(x, profile(x));
  } else if (L == 1) {
    // Coarse scan for the basin, then Brent on the bracketing cell.
    constexpr int kGrid = 16;
    const double step = (hi - lo) / (kGrid - 1);
    std::vector<double> grid;
    for (int i = 0; i < kGrid; ++i) grid.push_back(lo + step * i);
    if (warm) grid.push_back(std::clamp((*warm)[0], lo, hi));
    double best_grid = 0.0;
    double best_q = kUnbounded;
    for (double x : grid) {
      const auto val = profile({x});
      consider({x}, val);
      if (val.q < best_q) {
        best_q = val.q;
        best_grid = x;
      }
    }
    const double left = std::max(lo, best_grid - step);
    const double right = std::min(hi, best_grid + step);
    boost::uintmax_t iters = 200;
    const auto r = boost::math::tools::brent_find_minima(
        [&](double x) {
          const auto val = profile({x});
          consider({x}, val);
          return val.q;
        },
        left, right, 40, iters);
    (void)r;
    converged = iters < 200;
  } else {
    std::vector<std::vector<double>> starts;
    if (warm) starts.push_back(*warm);
    const double fractions[3][2] = {{0.25, 0.75}, {0.10, 0.50}, {0.50, 0.90}};
    for (int s = 0; s < std::max(1, options.restarts); ++s) {
      std::vector<double> x(L);
      for (std::size_t l = 0; l < L; ++l) {
        const double f0 = fractions[s % 3][0];
        const double f1 = fractions[s % 3][1];
        const double frac = L == 1 ? f0 : f0 + (f1 - f0) * static_cast<double>(l) / static_cast<double>(L - 1);
        x[l] = lo + frac * (hi - lo);
      }
      starts.push_back(x);
    }
    detail::NelderMeadOptions nm;
    nm.max_evaluations = options.max_evaluations;
    converged = false;
    double best_start = kUnbounded;
    bool best_start_converged = false;
    for (const auto& x0 : starts) {
      const auto res = detail::nelder_mead(
          [&](const std::vector<double>& x) {
            const auto val = profile(x);
            consider(x, val);
            return val.q;
          },
          x0, 0.1 * (hi - lo), nm);
      if (res.f < best_start) {
        best_start = res.f;
        best_start_converged = res.converged;
      }
    }
    converged = best_start_converged;
  }

  KernelFit fit;
  fit.params = assemble(profile.rates(best_x), best.theta);
  fit.objective = best.q;
  fit.on_boundary = on_boundary(fit.params, options.bounds);
  fit.evaluations = profile.evaluations();
  if (!converged) throw KernelFitError("fit_kernel: decay-rate search did not converge", fit);
  return fit;
}

namespace {

// Kernel divided by d_1 (by c when d_1 = 0), so that its first magnitude is 1.
KernelParams normalized_kernel(const KernelParams& p) {
  double scale = p.d.empty() ? 0.0 : p.d.front();
  if (!(scale > 0.0)) scale = p.c;
  KernelParams out = p;
  out.c /= scale;
  for (double& d : out.d) d /= scale;
  return out;
}

}  // namespace

BudgetChoices choose_B(const FitAccumulators& acc, const KernelParams& first_fit, double mult) {
  if (!(acc.T > 0.0)) throw InputError("choose_B: empty observation window");
  BudgetChoices out;
  // Evaluated in the d_1-normalized parametrization, where the kernel mass
  // is sum (d_l/d_1)/a_l and the baseline is c/d_1.
  const KernelParams hn = normalized_kernel(first_fit);
  const double mass = hn.kernel_mass();
  if (mass < 1.0 && hn.c > 0.0) {
    const double mean_rate = hn.c / (1.0 - mass);
    out.heuristic = mult * (static_cast<double>(acc.events) / acc.T) / mean_rate;
  }
  const double denom = acc.M.sum();
  if (!(denom > 0.0)) throw NumericError("choose_B: covariate Gram matrix sums to zero");
  out.beta = acc.v.sum() / denom;
  out.box_budget = static_cast<double>(acc.dim()) * out.beta;
  return out;
}

namespace {

EnvConstraints constraints_for(const FitConfig& config, const BudgetChoices& choices, Eigen::Index K) {
  EnvConstraints ec;
  ec.signed_box = is_raw_linear(config.variant);
  const auto& pol = config.budget;
  if (!(pol.value > 0.0)) throw InputError("budget: value must be positive");
  auto apply = [&](double B) {
    if (pol.per_coordinate || ec.signed_box) {
      ec.beta = B;
    } else {
      ec.budget = B;
    }
  };
  switch (pol.rule) {
    case BudgetRule::Fixed:
      apply(pol.value);
      break;
    case BudgetRule::Heuristic:
      if (!choices.heuristic) {
        throw NumericError("budget: heuristic undefined because the fitted kernel mass is at least 1");
      }
      apply(*choices.heuristic);
      break;
    case BudgetRule::BoxRule: {
      if (!(choices.beta > 0.0) || !std::isfinite(choices.beta)) {
        throw NumericError("budget: box rule scale 1'v/1'M1 is not positive");
      }
      ec.beta = pol.value * choices.beta;
      if (!ec.signed_box) ec.budget = static_cast<double>(K) * *ec.beta;
      break;
    }
  }
  return ec;
}

std::vector<std::vector<double>> environment_rows(std::span<const Segment> sample, const std::vector<double>& b,
                                                  double scale) {
  std::vector<std::vector<double>> out;
  out.reserve(sample.size());
  for (const Segment& seg : sample) {
    std::vector<double> g(seg.path.rows());
    for (std::size_t j = 0; j < g.size(); ++j) {
      const auto x = seg.path.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k) s += x[k] * b[k];
      g[j] = s / scale;
    }
    out.push_back(std::move(g));
  }
  return out;
}

double row_mean_of(const std::vector<std::vector<double>>& rows) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    for (double x : r) s += x;
    n += r.size();
  }
  return n > 0 ? s / static_cast<double>(n) : 0.0;
}

double g_bound(const EnvConstraints& ec, std::size_t K, const std::vector<std::vector<double>>& rows) {
  double realized = 0.0;
  for (const auto& r : rows) {
    for (double x : r) realized = std::max(realized, std::abs(x));
  }
  if (ec.signed_box) return realized;
  double bound = ec.budget;
  if (ec.beta) bound = std::min(bound, static_cast<double>(K) * *ec.beta);
  return std::isfinite(bound) ? bound : realized;
}

void record_warning(FitResult& r, const std::string& msg) {
  r.warnings.push_back(msg);
  warn(msg);
}

}  // namespace

FitResult alternate_fit(std::span<const Segment> sample, const FitConfig& config) {
  if (sample.empty()) throw InputError("fit: no segments");
  if (config.max_iterations < 1) throw InputError("fit: max_iterations must be positive");
  if (config.fixed_iterations && *config.fixed_iterations < 1) throw InputError("fit: fixed_iterations must be positive");
  config.bounds.validate();

  FitResult result;
  result.variant = config.variant;
  const ModelVariant variant = config.variant;
  const std::size_t L = kernel_terms(variant);

  KernelFitOptions kopts;
  kopts.bounds = config.bounds;
  kopts.terms = L;
  kopts.restarts = config.restarts;

  auto kernel_step = [&](std::span<const std::vector<double>> g_rows) {
    const KernelFit kf = fit_kernel(sample, g_rows, kopts);
    if (kf.on_boundary) record_warning(result, "kernel estimate lies on the parameter-box boundary");
    return kf;
  };

  if (!has_environment(variant)) {
    const FitAccumulators gram = accumulate_gram(sample);
    result.events = gram.events;
    result.updates = gram.updates;
    result.T = gram.T;
    const KernelFit kf = kernel_step({});
    result.params = kf.params;
    result.intensity_kernel = kf.params;
    result.objective_trace = {kf.objective};
    result.history.push_back({1, kf.params, {}, 1.0, kf.objective});
    result.iterations = 1;
    result.converged = true;
    result.branching = kf.params.kernel_mass();
    if (result.branching >= 1.0) {
      record_warning(result, "fitted branching ratio " + std::to_string(result.branching) +
                                 " >= 1: stationarity condition violated");
    }
    return result;
  }

  FitAccumulators acc = accumulate_gram(sample);
  const Eigen::Index K = acc.dim();
  result.events = acc.events;
  result.updates = acc.updates;
  result.T = acc.T;
  if (acc.events == 0) throw InputError("fit: no events in the sample");

  if (!has_kernel(variant)) {
    if (config.budget.rule == BudgetRule::Heuristic) {
      throw InputError("budget: the heuristic rule needs a Hawkes kernel");
    }
    acc.v = accumulate_score(sample, nullptr);
    result.budget_choices = choose_B(acc, KernelParams{1.0, {}, {}}, 1.0);
    result.budget_choices.heuristic.reset();
    const EnvConstraints ec = constraints_for(config, result.budget_choices, K);
    EnvCoefficients env = solve_b(acc, ec);
    const auto rows = environment_rows(sample, env.b, 1.0);
    const double q = quadratic_loss(sample, nullptr, rows);
    result.env = env;
    result.g_mean = row_mean_of(rows);
    result.objective_trace = {q};
    result.history.push_back({1, KernelParams{}, env.b, result.g_mean, q});
    result.iterations = 1;
    result.converged = true;
    return result;
  }

  const int limit = config.fixed_iterations.value_or(config.max_iterations);
  std::vector<std::vector<double>> g_rows;  // empty: g = 1 at the first h-step
  std::optional<EnvConstraints> fixed_constraints;
  for (int it = 1; it <= limit; ++it) {
    const KernelFit kf = kernel_step(g_rows);
    kopts.warm_start = kf.params;
    const KernelParams hn = normalized_kernel(kf.params);
    acc.v = accumulate_score(sample, &hn);

    EnvConstraints ec;
    if (it == 1) {
      result.budget_choices = choose_B(acc, kf.params, config.budget.rule == BudgetRule::Heuristic ? config.budget.value : 1.0);
    }
    if (config.budget.rule == BudgetRule::BoxRule) {
      BudgetChoices current = result.budget_choices;
      current.beta = choose_B(acc, kf.params, 1.0).beta;
      ec = constraints_for(config, current, K);
    } else {
      if (!fixed_constraints) fixed_constraints = constraints_for(config, result.budget_choices, K);
      ec = *fixed_constraints;
    }

    const EnvCoefficients env = solve_b(acc, ec);
    const auto raw_rows = environment_rows(sample, env.b, 1.0);
    const double gmean = row_mean_of(raw_rows);
    if (!(gmean > 0.0)) {
      throw NumericError("fit: environment estimate has nonpositive mean over covariate rows");
    }
    const double q = quadratic_loss(sample, &hn, raw_rows);

    // The g-step minimizes the surrogate R_T, not Q_T. Keep the previous
    // iterate when it would raise Q_T; further alternations then repeat it.
    if (!result.objective_trace.empty() && q > result.objective_trace.back()) {
      const IterationRecord kept = result.history.back();
      for (int rest = it; rest <= (config.fixed_iterations ? limit : it); ++rest) {
        IterationRecord rec = kept;
        rec.iteration = rest;
        result.history.push_back(rec);
        result.objective_trace.push_back(kept.objective);
        result.iterations = rest;
      }
      result.converged = true;
      break;
    }

    result.params = kf.params;
    result.intensity_kernel = hn;
    result.env = env;
    result.g_mean = gmean;
    result.iterations = it;
    result.history.push_back({it, kf.params, env.b, gmean, q});
    result.branching = branching_ratio(hn, g_bound(ec, static_cast<std::size_t>(K), raw_rows)).value;

    const bool has_prev = !result.objective_trace.empty();
    const double prev = has_prev ? result.objective_trace.back() : 0.0;
    result.objective_trace.push_back(q);
    g_rows = environment_rows(sample, env.b, gmean);

    if (!config.fixed_iterations && has_prev &&
        std::abs(q - prev) <= config.relative_tolerance * std::max(std::abs(prev), 1e-300)) {
      result.converged = true;
      break;
    }
  }
  if (config.fixed_iterations) result.converged = true;
  if (!result.converged) {
    record_warning(result, "alternating fit stopped at the iteration limit before the relative change in Q_T fell below tolerance");
  }
  if (result.branching >= 1.0) {
    record_warning(result, "branching ratio bound " + std::to_string(result.branching) +
                               " >= 1: stationarity condition violated");
  }
  return result;
}

}  // namespace lobhawkes
