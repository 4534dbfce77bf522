#include "lobhawkes/path.hpp"

#include <algorithm>
#include <cmath>

#include "lobhawkes/errors.hpp"

namespace lobhawkes {

void RawCovariatePath::append(Timestamp t, std::span<const double> z) {
  if (z.size() != dim()) throw InputError("raw covariate row has the wrong width");
  times.push_back(t);
  values.insert(values.end(), z.begin(), z.end());
}

void RawCovariatePath::validate() const {
  if (values.size() != rows() * dim()) throw InputError("raw covariate path: value count mismatch");
  require_sorted(times, true, "raw covariate path");
}

void CovariatePath::append(Timestamp t, std::span<const double> x) {
  if (x.size() != dim) throw InputError("covariate row has the wrong width");
  times.push_back(t);
  values.insert(values.end(), x.begin(), x.end());
}

void CovariatePath::validate() const {
  if (values.size() != rows() * dim) throw InputError("covariate path: value count mismatch");
  if (!names.empty() && names.size() != dim) throw InputError("covariate path: name count mismatch");
  require_sorted(times, true, "covariate path");
  if (!times.empty() && times.front() < start) throw InputError("covariate path: update before window start");
  for (double x : values) {
    if (!std::isfinite(x)) throw InputError("covariate path: non-finite value");
  }
}

void Segment::validate() const {
  path.validate();
  require_sorted(events, true, "event stream");
  if (!events.empty() && path.end() < events.back()) {
    throw InputError("event stream extends beyond the covariate window");
  }
}

std::size_t Segment::window_events() const {
  return static_cast<std::size_t>(events.end() - std::upper_bound(events.begin(), events.end(), path.start));
}

std::pair<Segment, Segment> split_segment(const Segment& seg, std::size_t rows) {
  const CovariatePath& p = seg.path;
  if (rows < 1 || rows >= p.rows()) throw InputError("split_segment: split row out of range");
  const Timestamp cut = p.times[rows - 1];
  Segment first, second;
  first.path.start = p.start;
  second.path.start = cut;
  for (CovariatePath* q : {&first.path, &second.path}) {
    q->dim = p.dim;
    q->names = p.names;
    q->lagged = p.lagged;
  }
  const auto mid = p.values.begin() + static_cast<std::ptrdiff_t>(rows * p.dim);
  first.path.times.assign(p.times.begin(), p.times.begin() + static_cast<std::ptrdiff_t>(rows));
  first.path.values.assign(p.values.begin(), mid);
  second.path.times.assign(p.times.begin() + static_cast<std::ptrdiff_t>(rows), p.times.end());
  second.path.values.assign(mid, p.values.end());
  first.events.assign(seg.events.begin(), std::upper_bound(seg.events.begin(), seg.events.end(), cut));
  second.events = seg.events;
  return {std::move(first), std::move(second)};
}

CovariatePath constant_path(Timestamp start, std::span<const Timestamp> times) {
  CovariatePath p;
  p.start = start;
  p.dim = 1;
  p.names = {"const"};
  p.times.assign(times.begin(), times.end());
  p.values.assign(times.size(), 1.0);
  return p;
}

}  // namespace lobhawkes
