#pragma once

// Reproducible random sampling. The engine is the standard-pinned
// mt19937_64, and the distributions are implemented here rather than taken
// from <random> because the standard leaves distribution algorithms
// implementation-defined. Given a seed, the draw sequence is identical
// across platforms and standard libraries.
//
//   uniform01 : (x >> 11) * 2^-53, in [0, 1)
//   normal    : Box-Muller on two uniforms, second value cached
//   gamma     : Marsaglia-Tsang squeeze method (shape >= 1)

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace wvcd {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
  }

  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      throw std::invalid_argument("Rng::gamma: shape < 1 not supported");
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v * scale;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
        return d * v * scale;
      }
    }
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace wvcd
