#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace maskrgg {

/// SplitMix64 finalizer. Used for seeding and for stream derivation.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

/// xoshiro256** generator with portable (library-independent) variate
/// transforms, so that every sample is bit-reproducible across standard
/// library implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 12) + 0.5) * 0x1.0p-52;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Standard normal variate (128-layer ziggurat).
  double normal() noexcept;

  /// Gamma(shape, 1) variate, Marsaglia-Tsang.
  double gamma(double shape) noexcept;

  /// Chi-square variate with `dof` degrees of freedom.
  double chi_squared(double dof) noexcept { return 2.0 * gamma(0.5 * dof); }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> s_{};
};

/// Counter-based split of a 64-bit master seed into independent streams.
///
/// A stream is addressed by a path of indices (for example cell, trial).
/// Its key is key_0 = mix64(master), key_{k+1} = mix64(key_k ^ mix64(i_k + γ))
/// with γ the golden-ratio increment. The generator for a key is seeded by
/// running SplitMix64 from that key. Because the key depends only on the
/// path, results do not depend on how trials are scheduled across threads.
class StreamSeed {
 public:
  explicit StreamSeed(std::uint64_t master) noexcept
      : master_(master), key_(mix64(master)) {}

  [[nodiscard]] StreamSeed child(std::uint64_t index) const noexcept {
    StreamSeed out = *this;
    out.key_ = mix64(key_ ^ mix64(index + kGoldenGamma));
    return out;
  }

  [[nodiscard]] Rng rng() const noexcept { return Rng(key_); }
  [[nodiscard]] std::uint64_t master() const noexcept { return master_; }
  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t master_;
  std::uint64_t key_;
};

}  // namespace maskrgg
