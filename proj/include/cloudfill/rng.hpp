#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cloudfill {

// Deterministic RNG with an explicit draw contract so tests can replay exact
// traces: uniforms come from the top 53 bits of mt19937_64, normals from
// Box-Muller with one cached value.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), eng_(seed) {}

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0,1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    double u = uniform();
    int64_t span = hi - lo + 1;
    int64_t k = static_cast<int64_t>(u * static_cast<double>(span));
    if (k >= span) k = span - 1;
    return lo + k;
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_cached_) {
      has_cached_ = false;
      return mean + stddev * cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  // Derived stream for parallel workers; splitmix-style mixing.
  Rng fork(uint64_t stream) const {
    uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

 private:
  uint64_t seed_;
  std::mt19937_64 eng_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace cloudfill
