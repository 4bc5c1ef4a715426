#pragma once

#include <cmath>
#include <cstdint>

namespace mvu {

// PCG32: tiny, splittable, identical output on every platform. std::mt19937
// would also be portable, but the std distributions are not, so we roll the
// few draws we need on top of the raw generator.
class Rng {
 public:
  Rng() : Rng(0xdefa017) {}
  explicit Rng(uint64_t seed, uint64_t stream = 0) {
    state_ = 0u;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
  }

  uint64_t next_u64() {
    uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint32_t below(uint32_t n) {
    // Lemire-style rejection keeps the draw unbiased.
    uint64_t m = static_cast<uint64_t>(next_u32()) * n;
    uint32_t lo = static_cast<uint32_t>(m);
    if (lo < n) {
      uint32_t threshold = (0u - n) % n;
      while (lo < threshold) {
        m = static_cast<uint64_t>(next_u32()) * n;
        lo = static_cast<uint32_t>(m);
      }
    }
    return static_cast<uint32_t>(m >> 32);
  }

  int below_int(int n) { return static_cast<int>(below(static_cast<uint32_t>(n))); }

  // Standard normal via Box-Muller (one value per call, cached pair).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // Derive an independent stream (e.g. per worker / per subsystem).
  Rng split(uint64_t salt) const {
    uint64_t s = state_ ^ (0x9e3779b97f4a7c15ULL * (salt + 1));
    // splitmix64 finalizer decorrelates nearby salts
    s += 0x9e3779b97f4a7c15ULL;
    s = (s ^ (s >> 30)) * 0xbf58476d1ce4e5b9ULL;
    s = (s ^ (s >> 27)) * 0x94d049bb133111ebULL;
    s = s ^ (s >> 31);
    return Rng(s, salt);
  }

  uint64_t state() const { return state_; }
  uint64_t inc() const { return inc_; }
  void restore(uint64_t state, uint64_t inc) {
    state_ = state;
    inc_ = inc;
    has_cached_ = false;
  }

 private:
  uint64_t state_ = 0;
  uint64_t inc_ = 1;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace mvu
