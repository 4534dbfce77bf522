#include "lobhawkes/qp.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "lobhawkes/errors.hpp"

namespace lobhawkes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd clamp(const Eigen::VectorXd& y, const QpConstraints& c) {
  return y.cwiseMax(c.lower).cwiseMin(c.upper);
}

}  // namespace

QpConstraints QpConstraints::nonnegative(Eigen::Index n, double budget, double upper) {
  QpConstraints c;
  c.lower = Eigen::VectorXd::Zero(n);
  c.upper = Eigen::VectorXd::Constant(n, upper);
  c.budget = budget;
  return c;
}

void QpConstraints::validate(Eigen::Index n) const {
  if (lower.size() != n || upper.size() != n) throw InputError("qp: bound vectors have the wrong size");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i]) {
      throw InputError("qp: empty box for coordinate " + std::to_string(i));
    }
  }
  if (std::isnan(budget)) throw InputError("qp: budget is NaN");
  if (std::isfinite(budget) && lower.sum() > budget) throw InputError("qp: budget below the sum of lower bounds");
}

Eigen::VectorXd project_box_budget(const Eigen::VectorXd& y, const QpConstraints& c) {
  Eigen::VectorXd x = clamp(y, c);
  if (!std::isfinite(c.budget) || x.sum() <= c.budget) return x;

  // S(tau) = sum clamp(y - tau, l, u) is continuous, piecewise linear and
  // nonincreasing; sweep its breakpoints to find S(tau) = budget.
  const Eigen::Index n = y.size();
  struct Breakpoint {
    double tau;
    int delta;  // +1 coordinate leaves its upper bound, -1 reaches its lower bound
  };
  std::vector<Breakpoint> events;
  events.reserve(2 * static_cast<std::size_t>(n));
  int free_count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double enter = y[i] - c.upper[i];
    const double exit = y[i] - c.lower[i];
    if (enter <= 0.0 && 0.0 < exit) ++free_count;
    if (std::isfinite(enter) && enter > 0.0) events.push_back({enter, +1});
    if (std::isfinite(exit) && exit > 0.0) events.push_back({exit, -1});
  }
  std::sort(events.begin(), events.end(), [](const Breakpoint& l, const Breakpoint& r) { return l.tau < r.tau; });

  double tau = 0.0;
  double s = x.sum();
  std::size_t k = 0;
  while (true) {
    const double next = k < events.size() ? events[k].tau : kInf;
    const double s_next = free_count > 0 ? s - free_count * (next - tau) : s;
    if (s_next <= c.budget) {
      if (free_count > 0) tau += (s - c.budget) / free_count;
      break;
    }
    if (k >= events.size()) break;  // infeasible; validate() rules this out
    s = s_next;
    tau = next;
    while (k < events.size() && events[k].tau == next) {
      free_count += events[k].delta;
      ++k;
    }
  }
  return clamp((y.array() - tau).matrix(), c);
}

double qp_objective(const Eigen::MatrixXd& H, const Eigen::VectorXd& f, const Eigen::VectorXd& x) {
  return x.dot(H * x) - 2.0 * f.dot(x);
}

double kkt_residual(const Eigen::MatrixXd& H, const Eigen::VectorXd& f, const Eigen::VectorXd& x,
                    const QpConstraints& c) {
  const Eigen::VectorXd grad = 2.0 * (H * x - f);
  return (x - project_box_budget(x - grad, c)).lpNorm<Eigen::Infinity>();
}

namespace {

// Solves the equality-constrained problem on the current active set. Returns
// false when the face optimum leaves the box.
bool polish(const Eigen::MatrixXd& H, const Eigen::VectorXd& f, const QpConstraints& c, Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  const double eps = 1e-9 * std::max(1.0, x.lpNorm<Eigen::Infinity>());
  std::vector<Eigen::Index> free;
  Eigen::VectorXd fixed = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x[i] <= c.lower[i] + eps) {
      fixed[i] = c.lower[i];
    } else if (x[i] >= c.upper[i] - eps) {
      fixed[i] = c.upper[i];
    } else {
      free.push_back(i);
    }
  }
  if (free.empty()) {
    x = fixed;
    return true;
  }
  const bool budget_active = std::isfinite(c.budget) && x.sum() >= c.budget - eps * static_cast<double>(n);
  const auto nf = static_cast<Eigen::Index>(free.size());
  const Eigen::Index dim = nf + (budget_active ? 1 : 0);

  Eigen::VectorXd fixed_only = fixed;
  for (Eigen::Index i : free) fixed_only[i] = 0.0;
  const Eigen::VectorXd coupling = H * fixed_only;

  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs(dim);
  for (Eigen::Index r = 0; r < nf; ++r) {
    for (Eigen::Index s = 0; s < nf; ++s) kkt(r, s) = H(free[r], free[s]);
    rhs[r] = f[free[r]] - coupling[free[r]];
  }
  if (budget_active) {
    double fixed_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) fixed_sum += fixed_only[i];
    kkt.block(0, nf, nf, 1).setOnes();
    kkt.block(nf, 0, 1, nf).setOnes();
    rhs[nf] = c.budget - fixed_sum;
  }
  const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
  if (!sol.allFinite() || (kkt * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-8 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>())) {
    return false;
  }
  Eigen::VectorXd candidate = fixed;
  for (Eigen::Index r = 0; r < nf; ++r) {
    const Eigen::Index i = free[r];
    if (sol[r] < c.lower[i] - eps || sol[r] > c.upper[i] + eps) return false;
    candidate[i] = sol[r];
  }
  candidate = project_box_budget(candidate, c);
  if (qp_objective(H, f, candidate) > qp_objective(H, f, x) + 1e-14 * std::max(1.0, std::abs(qp_objective(H, f, x)))) {
    return false;
  }
  x = std::move(candidate);
  return true;
}

}  // namespace

QpSolution solve_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& f, const QpConstraints& constraints,
                    const QpOptions& options) {
  const Eigen::Index n = f.size();
  if (H.rows() != n || H.cols() != n) throw InputError("qp: Hessian shape does not match the linear term");
  constraints.validate(n);

  QpSolution out;
  if (n == 0) {
    out.x = Eigen::VectorXd(0);
    out.converged = true;
    return out;
  }

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H, Eigen::EigenvaluesOnly);
  const double max_eig = eig.eigenvalues().maxCoeff();
  const double min_eig = eig.eigenvalues().minCoeff();
  if (min_eig < -options.psd_tolerance * std::max(1.0, std::abs(max_eig))) {
    throw NumericError("qp: Hessian is not positive semidefinite (min eigenvalue " + std::to_string(min_eig) + ")");
  }
  const double lipschitz = max_eig > 0.0 ? 2.0 * max_eig : 1.0;

  Eigen::VectorXd x = project_box_budget(Eigen::VectorXd::Zero(n), constraints);
  Eigen::VectorXd y = x;
  double t = 1.0;
  double residual = kkt_residual(H, f, x, constraints);
  int it = 0;
  for (; it < options.max_iterations && residual > options.kkt_tolerance; ++it) {
    const Eigen::VectorXd grad = 2.0 * (H * y - f);
    Eigen::VectorXd x_next = project_box_budget(y - grad / lipschitz, constraints);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    if ((y - x_next).dot(x_next - x) > 0.0) {
      t = 1.0;
      y = x_next;
    } else {
      y = x_next + ((t - 1.0) / t_next) * (x_next - x);
      t = t_next;
    }
    x = std::move(x_next);
    if (it % 10 == 9) {
      residual = kkt_residual(H, f, x, constraints);
      if (residual > options.kkt_tolerance && it % 50 == 49) {
        Eigen::VectorXd polished = x;
        if (polish(H, f, constraints, polished)) {
          const double r = kkt_residual(H, f, polished, constraints);
          if (r < residual) {
            x = polished;
            y = x;
            t = 1.0;
            residual = r;
          }
        }
      }
    }
  }
  residual = kkt_residual(H, f, x, constraints);
  if (residual > 0.0) {
    Eigen::VectorXd polished = x;
    if (polish(H, f, constraints, polished)) {
      const double r = kkt_residual(H, f, polished, constraints);
      if (r <= residual) {
        x = std::move(polished);
        residual = r;
      }
    }
  }
  out.x = std::move(x);
  out.objective = qp_objective(H, f, out.x);
  out.kkt_residual = residual;
  out.iterations = it;
  out.converged = residual <= options.kkt_tolerance;
  return out;
}

QpSolution solve_small_box_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& f, const Eigen::VectorXd& lower,
                              const Eigen::VectorXd& upper) {
  const Eigen::Index n = f.size();
  if (n > 6) throw InputError("qp: enumeration solver is limited to 6 variables");
  QpSolution best;
  best.objective = kInf;
  int combos = 1;
  for (Eigen::Index i = 0; i < n; ++i) combos *= 3;

  Eigen::VectorXd x(n);
  std::vector<Eigen::Index> free;
  for (int code = 0; code < combos; ++code) {
    free.clear();
    int rest = code;
    bool usable = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int state = rest % 3;
      rest /= 3;
      if (state == 0) {
        if (!std::isfinite(lower[i])) usable = false;
        x[i] = lower[i];
      } else if (state == 1) {
        if (!std::isfinite(upper[i]) || upper[i] == lower[i]) usable = false;
        x[i] = upper[i];
      } else {
        if (lower[i] == upper[i]) usable = false;
        free.push_back(i);
        x[i] = 0.0;
      }
    }
    if (!usable) continue;
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd hff(nf, nf);
      Eigen::VectorXd rhs(nf);
      const Eigen::VectorXd coupling = H * x;
      for (Eigen::Index r = 0; r < nf; ++r) {
        for (Eigen::Index s = 0; s < nf; ++s) hff(r, s) = H(free[r], free[s]);
        rhs[r] = f[free[r]] - coupling[free[r]];
      }
      const Eigen::VectorXd sol = hff.completeOrthogonalDecomposition().solve(rhs);
      if (!sol.allFinite()) continue;
      if ((hff * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-9 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>())) continue;
      bool inside = true;
      for (Eigen::Index r = 0; r < nf; ++r) {
        const Eigen::Index i = free[r];
        if (sol[r] < lower[i] || sol[r] > upper[i]) {
          inside = false;
          break;
        }
        x[i] = sol[r];
      }
      if (!inside) continue;
    }
    const double obj = qp_objective(H, f, x);
    if (obj < best.objective) {
      best.objective = obj;
      best.x = x;
    }
  }
  if (!std::isfinite(best.objective)) throw NumericError("qp: no feasible stationary point found");
  best.converged = true;
  return best;
}

}  // namespace lobhawkes
