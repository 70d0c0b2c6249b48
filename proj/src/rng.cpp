#include "adlift/rng.hpp"

#include <cmath>

namespace adlift {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double Rng::uniform_pos() {
  for (;;) {
    const double u = uniform();
    if (u > 0.0) return u;
  }
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  cached_normal_ = v * f;
  has_cached_normal_ = true;
  return u * f;
}

double Rng::gamma(double shape) {
  if (shape < 1.0) {
    // G(k) = G(k + 1) * U^(1/k)
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform_pos(), 1.0 / shape);
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
    const double u = uniform_pos();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::uint64_t Rng::poisson(double mu) {
  if (!(mu > 0.0)) return 0;
  if (mu > 500.0) {
    const double half = 0.5 * mu;
    return poisson(half) + poisson(half);
  }
  // P(0) = e^-mu; walk the CDF.
  double p = std::exp(-mu);
  double cdf = p;
  const double u = uniform();
  std::uint64_t n = 0;
  while (u > cdf) {
    ++n;
    p *= mu / static_cast<double>(n);
    cdf += p;
    if (p < 1e-300 && static_cast<double>(n) > mu) break;
  }
  return n;
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Plain rejection; unbiased for any n.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  for (;;) {
    const std::uint64_t x = engine_();
    if (x < limit) return x % n;
  }
}

}  // namespace adlift
