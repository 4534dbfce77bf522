#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lobhawkes/time.hpp"

namespace lobhawkes {

// Raw covariates Z(t): row j is the value set at times[j] and kept until the
// next update (right-continuous, not yet predictable).
struct RawCovariatePath {
  std::vector<std::string> names;
  std::vector<Timestamp> times;
  std::vector<double> values;  // row-major, rows() x dim()

  std::size_t dim() const { return names.size(); }
  std::size_t rows() const { return times.size(); }
  std::span<const double> row(std::size_t j) const { return {values.data() + j * dim(), dim()}; }
  void append(Timestamp t, std::span<const double> z);
  void validate() const;
};

// Piecewise-constant, left-continuous covariate path on the window
// (start, times.back()]. Row j is the value in force on (times[j-1], times[j]]
// with times[-1] = start, i.e. the information available strictly before
// times[j] once `lagged` is set.
struct CovariatePath {
  Timestamp start{};
  std::vector<Timestamp> times;
  std::size_t dim = 0;
  std::vector<double> values;  // row-major, rows() x dim
  std::vector<std::string> names;
  bool lagged = true;

  std::size_t rows() const { return times.size(); }
  std::span<const double> row(std::size_t j) const { return {values.data() + j * dim, dim}; }
  Timestamp end() const { return times.empty() ? start : times.back(); }
  double duration() const { return seconds_between(start, end()); }
  void append(Timestamp t, std::span<const double> x);

  // Shapes agree, times strictly increasing after start, values finite.
  void validate() const;
};

// One observation window (typically a trading day) with its events. Events at
// or before path.start are history: they feed the kernel but are not counted.
struct Segment {
  CovariatePath path;
  EventStream events;

  void validate() const;
  std::size_t window_events() const;
};

// Splits after covariate row `rows` (1 <= rows < path.rows()). The second
// part starts where the first ends and keeps every earlier event as history.
std::pair<Segment, Segment> split_segment(const Segment& seg, std::size_t rows);

// Path with a single constant-1 column updated at `times`.
CovariatePath constant_path(Timestamp start, std::span<const Timestamp> times);

}  // namespace lobhawkes
