#pragma once

#include <functional>
#include <span>
#include <vector>

namespace adlift {

// Upper tail P(X > x) of a chi-square variable.
double chi_square_sf(double x, double dof);

// Kolmogorov limiting distribution, P(sqrt(n) D > lambda).
double kolmogorov_sf(double lambda);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// One-sample Kolmogorov-Smirnov test of `sample` against `cdf`, using the
// Stephens small-sample correction on the Kolmogorov tail.
KsResult ks_test(std::vector<double> sample, const std::function<double(double)>& cdf);
KsResult ks_test_exponential(std::vector<double> sample, double rate);

double mean_of(std::span<const double> xs);
// Unbiased sample variance.
double variance_of(std::span<const double> xs);
double pearson(std::span<const double> x, std::span<const double> y);
// Variance / mean.
double dispersion_index(std::span<const double> counts);

// Minimizes f over R^dim with a Nelder-Mead simplex. Stops when the simplex
// characteristic size falls below `tolerance` or after `max_evaluations`.
struct SimplexResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t evaluations = 0;
  bool converged = false;
};
SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                          std::vector<double> start, std::vector<double> step, double tolerance,
                          std::size_t max_evaluations);

}  // namespace adlift
