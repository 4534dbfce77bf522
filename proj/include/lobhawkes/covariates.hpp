#pragma once

// Raw order-book covariates, quantile-bin one-hot encoding, and sampling at
// reference times with a one-update lag.

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lobhawkes/ingest.hpp"
#include "lobhawkes/path.hpp"

namespace lobhawkes {

// Streaming EWMA: the first input passes through, then
// out_i = alpha out_{i-1} + (1 - alpha) in_i.
class Ewma {
 public:
  explicit Ewma(double alpha);
  double update(double x);
  void reset() { started_ = false; }
  bool started() const { return started_; }
  double value() const { return value_; }

 private:
  double alpha_;
  double value_ = 0.0;
  bool started_ = false;
};

// EWMA over one session.
std::vector<double> ewma(std::span<const double> values, double alpha);

// (bid - ask)/(bid + ask); NaN when both sizes are zero.
double volume_imbalance(double bid_size, double ask_size);

// EWMA(signed volume)/EWMA(volume) at each trade, alpha = 0.98 by default.
std::vector<double> trade_imbalance(std::span<const double> signed_sizes, double alpha = 0.98);

// Basis points of the mid price.
double spread_bps(std::int64_t ask_price, std::int64_t bid_price);

inline constexpr std::int64_t kSessionOpen = (9 * 3600 + 30 * 60) * kNanosPerSecond;
inline constexpr std::int64_t kSessionClose = (16 * 3600 + 30 * 60) * kNanosPerSecond;

// Time of day mapped linearly from [09:30, 16:30] to [0, 1]; values outside
// are clamped (callers warn).
double seasonal(Timestamp time_of_day);

struct CovariateOptions {
  std::string prefix;          // prepended to every name, e.g. "AMZN."
  bool include_seasonal = true;
  int levels = 3;              // volume imbalance levels
  double trade_alpha = 0.98;
  double slow_duration_alpha = 0.98;
  double fast_duration_alpha = 0.90;
};

// Raw covariates of one instrument over one session, one row per update of
// that instrument: [Seas], VolImb1..L, Spread, TrdImb98, Dur98, Dur90.
// Values still undefined (no two-sided book yet, fewer than two trades) are
// NaN; imbalances carry the last defined value forward from 0.
RawCovariatePath build_instrument_covariates(std::span<const MarketUpdate> session, int instrument,
                                             const CovariateOptions& options);

struct LaggedCovariates {
  Timestamp start;        // left end of the first kept row
  RawCovariatePath path;  // row j: values in force on (times[j-1], times[j]]
  std::size_t dropped = 0;  // leading reference times without complete data
};

// Row j at reference time r_j holds, per input path, the last value
// timestamped strictly before r_j. Leading rows with any missing or NaN value
// are dropped. `session_start` bounds the first row when nothing is dropped;
// references at or before it are ignored.
LaggedCovariates sample_and_lag(std::span<const RawCovariatePath> paths, std::span<const Timestamp> reference,
                                Timestamp session_start);

struct CovariateBins {
  std::string name;
  std::vector<double> breakpoints;  // strictly increasing; bins (-inf,q1), [q1,q2), ..., [qn, inf)
  std::size_t bins() const { return breakpoints.size() + 1; }
};

struct EncoderSpec {
  std::vector<CovariateBins> covariates;
  bool constant = true;  // leading all-ones column

  std::size_t dim() const;
  std::vector<std::string> feature_names() const;
  void validate() const;
};

inline constexpr double kDefaultQuantiles[] = {0.01, 0.10, 0.25, 0.50, 0.75, 0.90, 0.99};

// Nearest-rank quantile: smallest x with at least ceil(p n) sample values <= x.
double nearest_rank_quantile(std::vector<double> values, double p);

// Breakpoints at the unique nearest-rank quantiles of each column (NaNs
// ignored). A constant column gets a single bin and a warning.
EncoderSpec fit_encoder(const RawCovariatePath& sample, bool constant = true,
                        std::span<const double> quantiles = kDefaultQuantiles);

// Indicator of the containing bin per covariate, blocks concatenated.
// Throws InputError on NaN.
std::vector<double> one_hot_encode(std::span<const double> z, const EncoderSpec& spec);

CovariatePath encode_path(const LaggedCovariates& lagged, const EncoderSpec& spec);

// Raw values (optionally behind a constant column), for the linear variants.
CovariatePath raw_linear_path(const LaggedCovariates& lagged, bool constant = true);

// Covariate path CSV: "# lobhawkes covariate-path v1 start_ns=<n> lagged=<0|1>",
// then "timestamp_ns,<names>", then one row per update. Doubles are written
// in shortest round-trip form.
void write_path_csv(std::ostream& out, const CovariatePath& path);
CovariatePath read_path_csv(std::istream& in, const std::string& source = "path");

// Event CSV: "# lobhawkes events v1", "timestamp_ns", one time per line.
void write_events_csv(std::ostream& out, const EventStream& events);
EventStream read_events_csv(std::istream& in, const std::string& source = "events");

void write_encoder(std::ostream& out, const EncoderSpec& spec);  // JSON
EncoderSpec read_encoder(std::istream& in);

}  // namespace lobhawkes
