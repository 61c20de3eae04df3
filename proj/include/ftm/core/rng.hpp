#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace ftm {

// PCG32 (O'Neill). Self-contained so that streams are bit-reproducible across
// platforms and standard library versions; std::uniform_real_distribution and
// friends are implementation-defined and would break stored-run determinism.
class Pcg32 {
 public:
  Pcg32() : Pcg32(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL) {}
  Pcg32(uint64_t seed, uint64_t stream) {
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

  // Uniform in [0, 1), 24 bits of mantissa.
  float next_float() { return static_cast<float>(next_u32() >> 8) * 0x1.0p-24f; }

  // Uniform in [0, 1), 53 bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Lemire's multiply-shift with rejection.
  uint32_t bounded(uint32_t n) {
    uint64_t m = static_cast<uint64_t>(next_u32()) * n;
    auto lo = static_cast<uint32_t>(m);
    if (lo < n) {
      uint32_t t = (-n) % n;
      while (lo < t) {
        m = static_cast<uint64_t>(next_u32()) * n;
        lo = static_cast<uint32_t>(m);
      }
    }
    return static_cast<uint32_t>(m >> 32);
  }

  // Integer in [lo, hi] inclusive.
  int range_int(int lo, int hi) { return lo + static_cast<int>(bounded(static_cast<uint32_t>(hi - lo + 1))); }

  // Uniform in [lo, hi).
  float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller (cached pair).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  // Fisher-Yates permutation of 0..n-1.
  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(bounded(static_cast<uint32_t>(i + 1)));
      std::swap(p[i], p[j]);
    }
    return p;
  }

  // Permutation with no fixed points for n > 1 (redrawn until deranged),
  // identity for n <= 1. Used to pair an image with another image's features.
  std::vector<int> derangement(int n) {
    if (n <= 1) return permutation(n);
    for (;;) {
      std::vector<int> p = permutation(n);
      bool ok = true;
      for (int i = 0; i < n; ++i) {
        if (p[i] == i) {
          ok = false;
          break;
        }
      }
      if (ok) return p;
    }
  }

 private:
  uint64_t state_ = 0;
  uint64_t inc_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent, reproducible stream for one purpose. Distinct
// purposes never share draws, so adding a consumer (e.g. layer selection)
// cannot shift the draws seen by another (e.g. input transforms).
inline Pcg32 stream_rng(uint64_t seed, std::string_view purpose, uint64_t a = 0, uint64_t b = 0) {
  uint64_t key = fnv1a(purpose);
  uint64_t s = splitmix64(seed ^ splitmix64(key + 0x632be59bd9b4e019ULL));
  uint64_t t = splitmix64(s ^ splitmix64(a + 1) ^ splitmix64(b + 0x9e3779b97f4a7c15ULL));
  return Pcg32(t, splitmix64(t));
}

}  // namespace ftm
