#pragma once

#include <cstdint>

namespace cogap {

/// SplitMix64 finalizer. Used only to expand user seeds into generator state.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// xorshift64* (shift triple 12/25/27, multiplier 0x2545F4914F6CDD1D).
///
/// All randomness in the toolkit flows through this generator so datasets,
/// weight initialization and shuffles are reproducible across platforms.
/// Standard-library distributions are never used: their output is
/// implementation-defined.
class Xorshift64Star {
 public:
  explicit Xorshift64Star(std::uint64_t seed) noexcept : state_(splitmix64(seed)) {
    if (state_ == 0) state_ = 0x9E3779B97F4A7C15ULL;
  }

  /// Independent stream for item `index` of a seeded collection.
  static Xorshift64Star stream(std::uint64_t seed, std::uint64_t index) noexcept {
    return Xorshift64Star(seed ^ splitmix64(index + 0xD1B54A32D192ED03ULL));
  }

  std::uint64_t next() noexcept {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Multiply-shift reduction; n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

}  // namespace cogap
