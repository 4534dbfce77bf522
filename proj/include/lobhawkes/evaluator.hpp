#pragma once

// Out-of-sample evaluation of fitted intensities lambda = h X'b:
// exact log-likelihood, the studentized log-likelihood-ratio test between two
// models, and time-rescaling residuals.

#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lobhawkes/covariates.hpp"
#include "lobhawkes/errors.hpp"
#include "lobhawkes/estimator.hpp"
#include "lobhawkes/kernel.hpp"
#include "lobhawkes/model.hpp"
#include "lobhawkes/path.hpp"

namespace lobhawkes {

// A nonnegative model produced lambda <= 0 (or a non-finite value) at an event.
class ModelIntegrityError : public NumericError {
 public:
  using NumericError::NumericError;
};

inline constexpr double kMachineEpsilon = std::numeric_limits<double>::epsilon();

struct ModelSpec {
  ModelVariant variant = ModelVariant::E;
  std::optional<KernelParams> kernel;    // h; absent for E (h = 1)
  std::optional<std::vector<double>> b;  // absent for H01/H02 (g = 1)
  std::optional<EncoderSpec> encoder;    // how the covariate path was built, if known
  bool raw_linear = false;
  double floor = kMachineEpsilon;        // lambda -> max(lambda, floor) for raw-linear variants

  // Parts present exactly as the variant requires; throws InputError.
  void validate() const;

  // Intensity of a fit: its normalized kernel times X'b.
  static ModelSpec from_fit(const FitResult& fit, double floor = kMachineEpsilon);
};

// Where the kernel state at each segment's start comes from.
enum class HistoryPolicy {
  Restart,  // empty past at every segment start (overnight reset)
  Carry,    // all events of earlier segments, plus the segment's own history
  AsGiven,  // the segment's own history events only
};

struct EvaluationOptions {
  HistoryPolicy history = HistoryPolicy::Restart;
};

struct IntensityTrace {
  std::vector<double> event_intensity;  // lambda(T_i) at window events, in order
  std::vector<double> residuals;        // compensator increments between events, per segment from its start
  double compensator = 0.0;             // integral of lambda over all windows
  double T = 0.0;

  double log_likelihood() const;
};

// Single pass over every segment. Throws ModelIntegrityError when a
// nonnegative variant has lambda <= 0 at an event.
IntensityTrace evaluate_intensity(const ModelSpec& spec, std::span<const Segment> sample,
                                  const EvaluationOptions& options = {});

// sum log lambda(T_i) - int lambda dt over the windows.
double log_likelihood(const ModelSpec& spec, std::span<const Segment> sample, const EvaluationOptions& options = {});
double log_likelihood(const ModelSpec& spec, const CovariatePath& path, std::span<const Timestamp> events,
                      const EvaluationOptions& options = {});

enum class ComparisonStatus { Ok, Degenerate };

struct ComparisonResult {
  double L1 = 0.0;
  double L2 = 0.0;
  double sigma2 = 0.0;  // (1/T) sum_i log(lambda1/lambda2)^2 at events
  double statistic = std::numeric_limits<double>::quiet_NaN();  // (L1 - L2)/sqrt(T sigma2)
  std::size_t n = 0;
  double T = 0.0;
  double quantile = 1.64;
  ComparisonStatus status = ComparisonStatus::Ok;

  bool degenerate() const { return status == ComparisonStatus::Degenerate; }
  bool prefers_model1() const { return !degenerate() && statistic > quantile; }   // reject model 2
  bool prefers_model2() const { return !degenerate() && statistic < -quantile; }  // reject model 1
};

// Statistic from two traces over the same events. Degenerate (statistic NaN)
// when the two intensities agree at every event.
ComparisonResult compare_traces(const IntensityTrace& t1, const IntensityTrace& t2, double quantile = 1.64);

ComparisonResult compare(const ModelSpec& spec1, const ModelSpec& spec2, std::span<const Segment> sample,
                         const EvaluationOptions& options = {}, double quantile = 1.64);

struct KsResult {
  double statistic = 0.0;  // sup |F_n - F|
  double p_value = 1.0;    // Stephens' small-sample approximation
  std::size_t n = 0;
};

// One-sample Kolmogorov-Smirnov test against Exp(1).
KsResult ks_exponential(std::span<const double> sample);

struct RescalingDiagnostics {
  std::vector<double> residuals;
  KsResult ks;
};

RescalingDiagnostics time_rescaling_residuals(const ModelSpec& spec, std::span<const Segment> sample,
                                              const EvaluationOptions& options = {});

struct ComparisonRow {
  std::string model1;
  std::string model2;
  std::string side;
  ComparisonResult result;
};

// Columns: model1,model2,side,statistic,L1,L2,sigma2,n,T. A degenerate row
// carries "degenerate" in the statistic column.
void write_comparison_csv(std::ostream& out, std::span<const ComparisonRow> rows);

}  // namespace lobhawkes
