#pragma once

// Portable random streams.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The std:: distributions are not (their algorithms are left to the
// library vendor), so every sampler used by the generators lives here and
// consumes raw 64-bit words in a documented way:
//
//   uniform()      (word >> 11) * 2^-53, in [0, 1)
//   exponential()  -log(1 - uniform())
//   normal()       Marsaglia polar method, second variate cached
//   gamma(k)       Marsaglia-Tsang squeeze; k < 1 boosted by U^(1/k)
//   poisson(mu)    sequential inversion, halved recursively above mu = 500
//
// Derived streams (per user, per replication) are seeded with
// splitmix64(seed ^ splitmix64(index)).

#include <cmath>
#include <cstdint>
#include <random>

namespace adlift {

std::uint64_t splitmix64(std::uint64_t x);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for a sub-entity (user, replication, block).
  static Rng derive(std::uint64_t seed, std::uint64_t index) {
    return Rng(splitmix64(seed ^ splitmix64(index)));
  }

  std::uint64_t next_u64() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform on the open interval (0, 1).
  double uniform_pos();
  double exponential() { return -std::log1p(-uniform()); }
  double normal();
  double gamma(double shape);  // unit scale
  std::uint64_t poisson(double mu);
  bool bernoulli(double p) { return uniform() < p; }
  // Index in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace adlift
