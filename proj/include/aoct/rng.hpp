#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace aoct {

/// splitmix64 finalizer; used to derive independent substreams from one seed.
inline uint64_t mix_seed(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  return mix_seed(seed ^ mix_seed(stream + 1));
}

/// mt19937_64 with explicit value mappings. The std distributions are
/// implementation-defined, so all mappings live here and stay stable.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n); n must be > 0. Multiply-shift mapping,
  /// bias < 2^-64 per draw.
  uint64_t bounded(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(engine_()) * n) >> 64);
  }

  /// Standard normal via Box-Muller (one value per pair; the second is cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = kTau * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// k distinct indices out of [0, n), in selection order (partial Fisher-Yates).
  std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    if (k > n) k = n;
    for (size_t i = 0; i < k; ++i) {
      const size_t j = i + static_cast<size_t>(bounded(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  static constexpr double kTau = 6.283185307179586476925286766559;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace aoct
