#pragma once

#include <cmath>
#include <cstdint>

#include "kronsketch/types.hpp"

namespace kronsketch {

/// Seed of a random stream. Identical (value, stream) always reproduces the
/// identical realization of any sketch or sample built from it, independent
/// of platform (no std::random distributions are used anywhere).
struct Seed {
  std::uint64_t value = 0;
  std::uint64_t stream = 0;

  /// Derives an independent child stream. Used to fan out per-trial,
  /// per-factor, per-repetition randomness.
  [[nodiscard]] Seed derived(std::uint64_t salt) const;
};

/// SplitMix64 finalizer. This is the mixing function behind all hashing
/// (count-sketch buckets/signs) and stream derivation.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Seed Seed::derived(std::uint64_t salt) const {
  return Seed{mix64(value ^ mix64(salt)),
              mix64(stream ^ mix64(value + 0x632be59bd9b4e019ULL + salt))};
}

/// Maps x uniformly into [0, n) without modulo bias (Lemire reduction).
inline std::uint64_t reduce_to(std::uint64_t x, std::uint64_t n) {
  return static_cast<std::uint64_t>((static_cast<__uint128_t>(x) * n) >> 64);
}

/// xoshiro256** seeded via SplitMix64. All distributions are hand-rolled so
/// results are bit-identical across standard library implementations.
class Rng {
 public:
  explicit Rng(Seed seed) {
    std::uint64_t z = seed.value ^ (0x9e3779b97f4a7c15ULL * (seed.stream + 1));
    for (auto& word : state_) word = mix64(z++);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in (0,1): never returns exactly 0 (safe for logs).
  double uniform01() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t below(std::uint64_t n) { return reduce_to(next(), n); }

  /// Standard normal via Box-Muller (pair cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  double exponential() { return -std::log(uniform01()); }

  double cauchy() {
    return std::tan(3.14159265358979323846 * (uniform01() - 0.5));
  }

  bool coin() { return (next() >> 63) != 0; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace kronsketch
