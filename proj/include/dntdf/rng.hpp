#pragma once

// Deterministic random source. Normal draws use Box-Muller on top of
// mt19937 so sequences do not depend on the standard library's
// distribution implementations.

#include <cmath>
#include <cstdint>
#include <random>

namespace dntdf {

class Rng {
 public:
  explicit Rng(std::uint32_t seed) : gen_(seed) {}

  std::uint32_t raw() { return gen_(); }

  // uniform on (0,1)
  double uniform() { return (gen_() + 0.5) * (1.0 / 4294967296.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  int below(int n) { return int(uniform() * n); }

  bool chance(double p) { return uniform() < p; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.141592653589793238462643 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dntdf
