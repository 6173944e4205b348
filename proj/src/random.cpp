#include "gcnnlp/random.hpp"

#include <cmath>
#include <numbers>

namespace gcnnlp {

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling keeps the result unbiased.
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

void Rng::unit_vector(double out[3]) {
  double n2;
  do {
    out[0] = normal();
    out[1] = normal();
    out[2] = normal();
    n2 = out[0] * out[0] + out[1] * out[1] + out[2] * out[2];
  } while (n2 < 1e-12);
  const double inv = 1.0 / std::sqrt(n2);
  for (int i = 0; i < 3; ++i) out[i] *= inv;
}

}  // namespace gcnnlp
