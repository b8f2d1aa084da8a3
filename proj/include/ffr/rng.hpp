#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "ffr/ndarray.hpp"

namespace ffr {

/// Deterministic random source. mt19937_64 output is pinned by the standard,
/// and the distribution transforms below are written out explicitly, so
/// sequences are bit-identical across platforms and library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  Index below(Index n) { return static_cast<Index>(uniform() * static_cast<double>(n)); }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Rng fork() { return Rng(gen_() ^ 0x9e3779b97f4a7c15ull); }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0;
};

inline ArrayD random_normal(const Shape& shape, Rng& rng, double scale = 1.0) {
  ArrayD out(shape);
  for (Index i = 0; i < out.size(); ++i) out[i] = scale * rng.normal();
  return out;
}

inline ArrayD random_uniform(const Shape& shape, Rng& rng, double lo, double hi) {
  ArrayD out(shape);
  for (Index i = 0; i < out.size(); ++i) out[i] = rng.uniform(lo, hi);
  return out;
}

inline ArrayC random_complex(const Shape& shape, Rng& rng, double scale = 1.0) {
  ArrayC out(shape);
  for (Index i = 0; i < out.size(); ++i) out[i] = cdouble(scale * rng.normal(), scale * rng.normal());
  return out;
}

}  // namespace ffr
