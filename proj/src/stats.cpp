#include "adlift/stats.hpp"

#include <gsl/gsl_cdf.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "adlift/error.hpp"

namespace adlift {

namespace {

struct GslErrorsOff {
  GslErrorsOff() { gsl_set_error_handler_off(); }
};
const GslErrorsOff g_gsl_errors_off;

struct SimplexCallback {
  const std::function<double(std::span<const double>)>* f;
  std::size_t evaluations = 0;
};

double simplex_trampoline(const gsl_vector* v, void* params) {
  auto* cb = static_cast<SimplexCallback*>(params);
  ++cb->evaluations;
  const double value = (*cb->f)(std::span<const double>(v->data, v->size));
  return std::isfinite(value) ? value : std::numeric_limits<double>::max();
}

}  // namespace

double chi_square_sf(double x, double dof) {
  if (!(dof > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  if (x <= 0.0) return 1.0;
  return gsl_cdf_chisq_Q(x, dof);
}

double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;  // series converges slowly; the tail is 1 to double precision
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? 1.0 : -1.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test(std::vector<double> sample, const std::function<double(double)>& cdf) {
  KsResult r;
  if (sample.empty()) return r;
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  r.statistic = d;
  const double sn = std::sqrt(n);
  r.p_value = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
  return r;
}

KsResult ks_test_exponential(std::vector<double> sample, double rate) {
  return ks_test(std::move(sample), [rate](double x) { return x <= 0.0 ? 0.0 : -std::expm1(-rate * x); });
}

double mean_of(std::span<const double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double variance_of(std::span<const double> xs) {
  if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mu = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return ss / static_cast<double>(xs.size() - 1);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::kDimensionMismatch, "pearson needs equal lengths >= 2");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

double dispersion_index(std::span<const double> counts) { return variance_of(counts) / mean_of(counts); }

SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> start,
                          std::vector<double> step, double tolerance, std::size_t max_evaluations) {
  const std::size_t dim = start.size();
  SimplexCallback cb{&f};
  gsl_multimin_function fn{&simplex_trampoline, dim, &cb};

  gsl_vector* x = gsl_vector_alloc(dim);
  gsl_vector* ss = gsl_vector_alloc(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    gsl_vector_set(x, i, start[i]);
    gsl_vector_set(ss, i, step[i]);
  }
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim);
  gsl_multimin_fminimizer_set(s, &fn, x, ss);

  SimplexResult result;
  while (cb.evaluations < max_evaluations) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), tolerance) == GSL_SUCCESS) {
      result.converged = true;
      break;
    }
  }
  result.x.assign(s->x->data, s->x->data + dim);
  result.value = s->fval;
  result.evaluations = cb.evaluations;

  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(ss);
  gsl_vector_free(x);
  return result;
}

}  // namespace adlift
