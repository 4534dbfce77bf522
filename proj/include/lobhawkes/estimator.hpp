#pragma once

// Alternating estimation of lambda = h g:
//   * h-step: minimize the quadratic contrast
//       Q_T(h, g) = -(2/T) int h g dN + (1/T) int (h g)^2 dt
//     over the kernel parameters for fixed g,
//   * g-step: minimize the surrogate
//       R_T(b) = -(2/T) b' v + (1/T) b' M b,
//     v = sum_events X / h,  M = sum_rows (t_j - t_{j-1}) X_j X_j',
//     over b >= 0 with an l1 budget and/or a per-coordinate box.
// v and M are streamed; the m x K design is never formed.

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lobhawkes/errors.hpp"
#include "lobhawkes/kernel.hpp"
#include "lobhawkes/model.hpp"
#include "lobhawkes/path.hpp"

namespace lobhawkes {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

struct FitAccumulators {
  Eigen::VectorXd v;         // Phi' Gamma
  Eigen::MatrixXd M;         // Phi' Sigma Phi
  double T = 0.0;            // total window length, seconds
  std::size_t updates = 0;   // m
  std::size_t events = 0;    // n
  Eigen::VectorXd row_mean;  // (1/m) sum_j X(t_j)

  static FitAccumulators zero(Eigen::Index dim);
  Eigen::Index dim() const { return v.size(); }

  // Accumulators over disjoint windows add up.
  void merge(const FitAccumulators& other);
};

// Single pass over one window. `h` scores the events (v += X/h(T)); nullptr
// means h = 1. Throws NumericError if h <= 0 at an event.
FitAccumulators accumulate(const CovariatePath& path, std::span<const Timestamp> events, const KernelParams* h);
FitAccumulators accumulate(std::span<const Segment> sample, const KernelParams* h);

// The h-independent part (M, T, counts, row mean) with v left at zero.
FitAccumulators accumulate_gram(std::span<const Segment> sample);

// v = sum_events X(T)/h(T) alone.
Eigen::VectorXd accumulate_score(std::span<const Segment> sample, const KernelParams* h);

struct EnvCoefficients {
  std::vector<double> b;
  double budget = kUnbounded;  // sum b <= budget
  std::optional<double> beta;  // b_k <= beta (and b_k >= -beta when signed)
  bool signed_box = false;     // raw-linear models drop nonnegativity

  std::size_t nonzero() const;
  double l1() const;
};

struct EnvConstraints {
  double budget = kUnbounded;
  std::optional<double> beta;
  bool signed_box = false;
};

// Minimizes -(2/T) b'v + (1/T) b'Mb over the constraint set; KKT residual of
// the returned point is at most 1e-8 (a warning is issued otherwise).
EnvCoefficients solve_b(const FitAccumulators& acc, const EnvConstraints& constraints);

// Q_T of lambda = h g, where g is constant per covariate row. `g_rows` holds
// one vector per segment (empty span: g = 1); `h` nullptr means h = 1.
double quadratic_loss(std::span<const Segment> sample, const KernelParams* h,
                      std::span<const std::vector<double>> g_rows);

struct KernelFitOptions {
  ParameterBounds bounds = ParameterBounds::simulation();
  std::size_t terms = 1;
  int restarts = 3;
  int max_evaluations = 1500;
  std::optional<KernelParams> warm_start;
};

struct KernelFit {
  KernelParams params;
  double objective = 0.0;  // Q_T at the optimum
  bool on_boundary = false;
  int evaluations = 0;
};

class KernelFitError : public NumericError {
 public:
  KernelFitError(const std::string& what, KernelFit best) : NumericError(what), best_(std::move(best)) {}
  const KernelFit& best_so_far() const { return best_; }

 private:
  KernelFit best_;
};

// Minimizes Q_T(h, g) over the kernel parameters in the bound box for fixed
// g. For fixed decay rates the contrast is quadratic in (c, d), which is
// solved exactly; Nelder-Mead searches the log decay rates.
KernelFit fit_kernel(std::span<const Segment> sample, std::span<const std::vector<double>> g_rows,
                     const KernelFitOptions& options);

enum class BudgetRule {
  Fixed,      // value is B
  Heuristic,  // value is Mult in B = Mult [c/(1 - sum d/a)]^{-1} N(T)/T
  BoxRule,    // value multiplies beta = 1'v / 1'M1; b_k in [0, value*beta], B = K*value*beta
};

struct BudgetPolicy {
  BudgetRule rule = BudgetRule::BoxRule;
  double value = 10.0;
  // Apply B as the per-coordinate bound b_k <= B rather than sum b <= B
  // (Fixed and Heuristic rules only).
  bool per_coordinate = false;
};

struct BudgetChoices {
  std::optional<double> heuristic;  // unavailable when sum d/a >= 1
  double beta = 0.0;
  double box_budget = 0.0;          // K * beta
};

// Candidate budgets from a first-iteration Hawkes fit and accumulators whose
// score uses that fit.
BudgetChoices choose_B(const FitAccumulators& acc, const KernelParams& first_fit, double mult);

struct FitConfig {
  ModelVariant variant = ModelVariant::H1;
  BudgetPolicy budget;
  ParameterBounds bounds = ParameterBounds::simulation();
  int max_iterations = 10;
  // When set, run exactly this many alternations regardless of the stopping rule.
  std::optional<int> fixed_iterations;
  double relative_tolerance = 1e-8;
  int restarts = 3;
};

struct IterationRecord {
  int iteration = 0;
  KernelParams params;    // h-step estimate
  std::vector<double> b;  // g-step estimate
  double g_mean = 1.0;
  double objective = 0.0; // Q_T(h g) after the g-step
};

struct FitResult {
  ModelVariant variant = ModelVariant::H1;
  std::optional<KernelParams> params;            // h-step estimate
  std::optional<KernelParams> intensity_kernel;  // kernel multiplying X'b in lambda
  std::optional<EnvCoefficients> env;
  double g_mean = 1.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;
  std::vector<IterationRecord> history;
  BudgetChoices budget_choices;
  double branching = 0.0;  // g-bound * kernel mass of the fitted intensity
  std::vector<std::string> warnings;
  std::size_t events = 0;
  std::size_t updates = 0;
  double T = 0.0;
};

FitResult alternate_fit(std::span<const Segment> sample, const FitConfig& config);

struct BudgetScanEntry {
  double budget = 0.0;
  double log_likelihood = 0.0;
  std::size_t nonzero = 0;
  double criterion = 0.0;  // -L_T + K_B
};

struct BudgetScan {
  std::vector<BudgetScanEntry> entries;
  double best_budget = 0.0;
};

// Refits with each l1 budget in `grid` and picks the minimizer of -L_T + K_B.
BudgetScan scan_budget(std::span<const Segment> sample, const FitConfig& config, std::span<const double> grid);

}  // namespace lobhawkes
