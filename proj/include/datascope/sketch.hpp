#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "datascope/core.hpp"
#include "datascope/rng.hpp"

namespace datascope {

inline constexpr std::uint64_t kDefaultHashSeed = 0xDA7A5C09E5EED001ULL;

/// Canonical 12-byte key for a state-action pair: state id as 8-byte
/// big-endian, action id as 4-byte big-endian. Fixed-width and endianness
/// make sketches portable across machines.
struct SAKey {
  std::array<std::uint8_t, 12> bytes{};

  static SAKey from(std::uint64_t state, std::uint32_t action) {
    SAKey k;
    for (int i = 0; i < 8; ++i)
      k.bytes[i] = static_cast<std::uint8_t>(state >> (8 * (7 - i)));
    for (int i = 0; i < 4; ++i)
      k.bytes[8 + i] = static_cast<std::uint8_t>(action >> (8 * (3 - i)));
    return k;
  }

  std::uint64_t state() const {
    std::uint64_t s = 0;
    for (int i = 0; i < 8; ++i) s = (s << 8) | bytes[i];
    return s;
  }
  std::uint32_t action() const {
    std::uint32_t a = 0;
    for (int i = 0; i < 4; ++i) a = (a << 8) | bytes[8 + i];
    return a;
  }

  friend bool operator==(const SAKey&, const SAKey&) = default;
};

/// Seeded 64-bit hash of a state-action key. Two chained splitmix64
/// finalizer rounds give full avalanche over the 96-bit input.
inline std::uint64_t hash_sa(std::uint64_t state, std::uint32_t action,
                             std::uint64_t seed = kDefaultHashSeed) {
  std::uint64_t h = mix64(seed ^ state);
  h = mix64(h ^ (static_cast<std::uint64_t>(action) * 0x9E3779B97F4A7C15ULL));
  return h;
}

inline std::uint64_t hash_sa(const SAKey& key, std::uint64_t seed = kDefaultHashSeed) {
  return hash_sa(key.state(), key.action(), seed);
}

/// HyperLogLog sketch over state-action keys. Dense registers only; merge is
/// register-wise max. Default precision p=14 (m=16384) has a standard error
/// of 1.04/sqrt(m) ~ 0.8%.
class CardinalitySketch {
 public:
  explicit CardinalitySketch(int precision = 14,
                             std::uint64_t hash_seed = kDefaultHashSeed)
      : p_(precision), seed_(hash_seed) {
    if (p_ < 4 || p_ > 18)
      throw std::invalid_argument("CardinalitySketch: precision must be in [4, 18]");
    registers_.assign(std::size_t(1) << p_, 0);
  }

  int precision() const { return p_; }
  std::uint64_t hash_seed() const { return seed_; }
  std::size_t register_count() const { return registers_.size(); }
  const std::vector<std::uint8_t>& registers() const { return registers_; }

  void insert(std::uint64_t state, std::uint32_t action) {
    insert_hash(hash_sa(state, action, seed_));
  }
  void insert(const SAKey& key) { insert_hash(hash_sa(key, seed_)); }

  void insert_hash(std::uint64_t h) {
    const std::size_t idx = static_cast<std::size_t>(h >> (64 - p_));
    const std::uint64_t tail = h << p_;
    const std::uint8_t rho =
        tail == 0 ? static_cast<std::uint8_t>(64 - p_ + 1)
                  : static_cast<std::uint8_t>(std::countl_zero(tail) + 1);
    if (rho > registers_[idx]) registers_[idx] = rho;
  }

  /// Raw harmonic-mean estimate with the small-range linear-counting
  /// correction (applied when the raw value is <= 2.5m and a register is 0).
  double raw_estimate() const {
    const double m = static_cast<double>(registers_.size());
    double inv_sum = 0.0;
    std::size_t zeros = 0;
    for (std::uint8_t r : registers_) {
      inv_sum += std::ldexp(1.0, -static_cast<int>(r));
      if (r == 0) ++zeros;
    }
    const double est = alpha(registers_.size()) * m * m / inv_sum;
    if (est <= 2.5 * m && zeros > 0)
      return m * std::log(m / static_cast<double>(zeros));
    return est;
  }

  std::uint64_t estimate() const {
    return static_cast<std::uint64_t>(std::llround(raw_estimate()));
  }

  static CardinalitySketch merge(const CardinalitySketch& a, const CardinalitySketch& b) {
    if (a.p_ != b.p_ || a.seed_ != b.seed_)
      throw std::invalid_argument("CardinalitySketch::merge: precision/seed mismatch");
    CardinalitySketch out = a;
    for (std::size_t i = 0; i < out.registers_.size(); ++i)
      out.registers_[i] = std::max(out.registers_[i], b.registers_[i]);
    return out;
  }

  // Serialization: magic "HLL1", 1 byte p, 8 bytes seed (big-endian), then
  // m register bytes.
  std::string serialize() const {
    std::string out;
    out.reserve(4 + 1 + 8 + registers_.size());
    out += "HLL1";
    out += static_cast<char>(p_);
    for (int i = 0; i < 8; ++i)
      out += static_cast<char>((seed_ >> (8 * (7 - i))) & 0xFF);
    out.append(reinterpret_cast<const char*>(registers_.data()), registers_.size());
    return out;
  }

  static CardinalitySketch deserialize(std::string_view bytes) {
    if (bytes.size() < 13 || bytes.substr(0, 4) != "HLL1")
      throw std::invalid_argument("CardinalitySketch: bad magic");
    const int p = static_cast<std::uint8_t>(bytes[4]);
    std::uint64_t seed = 0;
    for (int i = 0; i < 8; ++i)
      seed = (seed << 8) | static_cast<std::uint8_t>(bytes[5 + i]);
    CardinalitySketch sk(p, seed);
    if (bytes.size() != 13 + sk.registers_.size())
      throw std::invalid_argument("CardinalitySketch: truncated register block");
    for (std::size_t i = 0; i < sk.registers_.size(); ++i) {
      const auto v = static_cast<std::uint8_t>(bytes[13 + i]);
      if (v > 64) throw std::invalid_argument("CardinalitySketch: register value > 64");
      sk.registers_[i] = v;
    }
    return sk;
  }

  friend bool operator==(const CardinalitySketch&, const CardinalitySketch&) = default;

 private:
  static double alpha(std::size_t m) {
    switch (m) {
      case 16: return 0.673;
      case 32: return 0.697;
      case 64: return 0.709;
      default: return 0.7213 / (1.0 + 1.079 / static_cast<double>(m));
    }
  }

  int p_;
  std::uint64_t seed_;
  std::vector<std::uint8_t> registers_;
};

/// Exact distinct (s, a) counter; the oracle the sketch is checked against.
class ExactUniqueCounter {
 public:
  void insert(std::uint64_t state, std::uint32_t action) {
    keys_.insert(Key{state, action});
  }
  void insert(const SAKey& key) { insert(key.state(), key.action()); }
  std::uint64_t count() const { return keys_.size(); }
  void clear() { keys_.clear(); }

 private:
  struct Key {
    std::uint64_t s;
    std::uint32_t a;
    friend bool operator==(const Key&, const Key&) = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return static_cast<std::size_t>(hash_sa(k.s, k.a));
    }
  };
  std::unordered_set<Key, KeyHash> keys_;
};

inline std::uint64_t exact_unique_count(const Dataset& ds) {
  ExactUniqueCounter c;
  for (const Trajectory& traj : ds.trajectories)
    for (const Transition& tr : traj.transitions) c.insert(tr.s, tr.a);
  return c.count();
}

inline std::uint64_t hll_unique_count(const Dataset& ds, int precision = 14,
                                      std::uint64_t hash_seed = kDefaultHashSeed) {
  CardinalitySketch sk(precision, hash_seed);
  for (const Trajectory& traj : ds.trajectories)
    for (const Transition& tr : traj.transitions) sk.insert(tr.s, tr.a);
  return sk.estimate();
}

}  // namespace datascope
