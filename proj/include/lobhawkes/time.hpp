#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <span>
#include <vector>

namespace lobhawkes {

inline constexpr std::int64_t kNanosPerSecond = 1'000'000'000;

// Integer nanoseconds since session start (or midnight for exchange data).
// Kernel math converts to floating seconds at the boundary.
struct Timestamp {
  std::int64_t ns = 0;

  constexpr auto operator<=>(const Timestamp&) const = default;

  static Timestamp from_seconds(double seconds) {
    return Timestamp{static_cast<std::int64_t>(std::llround(seconds * 1e9))};
  }
  constexpr double seconds() const { return static_cast<double>(ns) * 1e-9; }
};

// Length of (from, to] in seconds; negative when `to` precedes `from`.
constexpr double seconds_between(Timestamp from, Timestamp to) {
  return static_cast<double>(to.ns - from.ns) * 1e-9;
}

// Sorted jump times of a counting process.
using EventStream = std::vector<Timestamp>;

// Throws InputError unless times are nondecreasing (strict = increasing).
void require_sorted(std::span<const Timestamp> times, bool strict, const char* what);

}  // namespace lobhawkes
