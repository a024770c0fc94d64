#pragma once

// Deterministic RNG. The engine is std::mt19937_64 (its output sequence is
// fixed by the standard); all mappings to floats/ints are written out here
// rather than using std distributions, whose sequences are
// implementation-defined. Reproducibility contracts elsewhere depend on this.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace voxsep {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Independent substream: seed hashed with stream ids via splitmix64 steps.
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t s = seed;
    for (std::uint64_t id : ids) s = splitmix(s ^ (id + 0x9e3779b97f4a7c15ULL));
    return Rng(s);
  }

  std::uint64_t next() { return eng_(); }

  double uniform() {  // [0, 1)
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Inclusive bounds, rejection-sampled so the mapping is exact.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(next());  // full 64-bit range
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return lo + static_cast<std::int64_t>(v % span);
  }

  double normal() {  // Box-Muller, one sample per call
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  template <typename T>
  void fill_uniform(T* p, std::size_t n, T a, T b) {
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<T>(uniform(a, b));
  }

  template <typename T>
  void fill_normal(T* p, std::size_t n, T scale = T(1)) {
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<T>(scale * normal());
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 eng_;
};

}  // namespace voxsep
