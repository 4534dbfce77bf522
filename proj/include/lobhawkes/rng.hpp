#pragma once

#include <cmath>
#include <cstdint>

namespace lobhawkes {

// Counter-based generator: output i is SplitMix64's finalizer applied to
// key + i * golden-gamma, where key mixes (seed, stream). Any draw can be
// recomputed from (seed, stream, counter), so replications are reproducible
// bit for bit and independent streams need no shared state.
class CounterRng {
 public:
  static constexpr const char* kName = "splitmix64-counter";

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGamma); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform_positive() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  // Exp(1) by inversion.
  double exponential() { return -std::log(uniform_positive()); }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace lobhawkes
