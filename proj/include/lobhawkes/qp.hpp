#pragma once

// Convex quadratic programs  min x'Hx - 2 f'x  over
//   { lower <= x <= upper, sum(x) <= budget }.

#include <limits>

#include <Eigen/Dense>

namespace lobhawkes {

struct QpConstraints {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double budget = std::numeric_limits<double>::infinity();

  static QpConstraints nonnegative(Eigen::Index n, double budget,
                                   double upper = std::numeric_limits<double>::infinity());
  void validate(Eigen::Index n) const;
};

struct QpOptions {
  double kkt_tolerance = 1e-10;
  int max_iterations = 200000;
  // Relative slack allowed on the smallest eigenvalue of H.
  double psd_tolerance = 1e-9;
};

struct QpSolution {
  Eigen::VectorXd x;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Euclidean projection onto the feasible set, O(n log n).
Eigen::VectorXd project_box_budget(const Eigen::VectorXd& y, const QpConstraints& constraints);

// Infinity norm of x - P(x - grad), grad = 2(Hx - f). Zero exactly at optimum.
double kkt_residual(const Eigen::MatrixXd& H, const Eigen::VectorXd& f, const Eigen::VectorXd& x,
                    const QpConstraints& constraints);

double qp_objective(const Eigen::MatrixXd& H, const Eigen::VectorXd& f, const Eigen::VectorXd& x);

// Accelerated projected gradient (FISTA with adaptive restart) followed by an
// active-set polish. Throws NumericError if H is not PSD within tolerance,
// InputError if the constraints are infeasible.
QpSolution solve_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& f, const QpConstraints& constraints,
                    const QpOptions& options = {});

// Exact solver for tiny box-constrained problems (n <= 6) by enumerating
// which bound, if any, each coordinate sits on.
QpSolution solve_small_box_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& f,
                              const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

}  // namespace lobhawkes
