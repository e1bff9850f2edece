#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>

namespace datascope {

/// splitmix64 finalizer. Bijective on u64 with full avalanche; used both for
/// seed derivation and as the mixing core of the state-action hash.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed, a textual tag and up
/// to two numeric qualifiers. Order-sensitive, collision-resistant enough for
/// experiment bookkeeping.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = mix64(base);
  for (unsigned char c : tag) h = mix64(h ^ c);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  return h;
}

/// Deterministic PRNG used everywhere sampling happens. Wraps a fixed-layout
/// xorshift-multiply stream so that datasets are byte-identical across
/// platforms and standard-library versions (std:: distributions are not
/// portable, so all sampling primitives live here).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix64(seed)) {}

  std::uint64_t next_u64() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_ ^ (state_ >> 29));
  }

  /// Uniform in [0, 1) with 53 random bits.
  double next_double() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). n must be positive.
  std::uint32_t next_below(std::uint32_t n) {
    if (n == 0) throw std::invalid_argument("Rng::next_below: n must be > 0");
    return static_cast<std::uint32_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard exponential variate.
  double next_exponential() noexcept { return -std::log1p(-next_double()); }

  /// Samples an index from an unnormalized weight vector by inverse CDF.
  std::size_t categorical(std::span<const double> weights, double total) {
    const double u = next_double() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    // numerical slack: fall back to the last positive weight
    for (std::size_t i = weights.size(); i-- > 0;)
      if (weights[i] > 0.0) return i;
    throw std::invalid_argument("Rng::categorical: all weights are zero");
  }

 private:
  std::uint64_t state_;
};

}  // namespace datascope
