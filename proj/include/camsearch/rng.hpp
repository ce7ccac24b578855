#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace camsearch {

/// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Folds an ordered list of integers into one stream key.
constexpr std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t key = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t p : parts) key = mix64(key ^ mix64(p + 0x9e3779b97f4a7c15ULL));
  return key;
}

/// Counter-based generator: the i-th draw is a pure function of (key, i), so
/// any stream can be reproduced without replaying its siblings. Distributions
/// are implemented here rather than through <random> so results do not depend
/// on the standard library vendor.
class CounterRng {
 public:
  constexpr CounterRng() = default;
  constexpr explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
      : key_(key), counter_(counter) {}
  CounterRng(std::initializer_list<std::uint64_t> parts) noexcept : key_(derive_key(parts)) {}

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

  constexpr std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(next_u64());
    const auto wide = static_cast<unsigned __int128>(next_u64()) * span;
    return lo + static_cast<std::int64_t>(static_cast<std::uint64_t>(wide >> 64));
  }

  /// Standard normal via Box-Muller (one draw per call; no cached pair so the
  /// counter alone determines the state).
  double normal() noexcept {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace camsearch
