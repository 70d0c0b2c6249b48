#pragma once

// Gamma-Poisson (NBD) repeat-visit models.
//
// Parameterization follows the repeat-buying convention: shape k and mean m
// events per window,
//
//   P(n) = Γ(k+n) / (Γ(k) n!) (k/(k+m))^k (m/(k+m))^n,   var = m (1 + m/k).
//
// Visit data only ever shows cookies with at least one event (there is no
// notion of the total population), so fitting works on the zero-truncated
// law P(n) / (1 - P(0)), n >= 1.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adlift/error.hpp"
#include "adlift/ingest.hpp"
#include "json.hpp"

namespace adlift {

// Cookies observed with exactly n events, n >= 1. Counts are weights so that
// expected tables can be represented as well as observed ones.
struct FrequencyTable {
  std::map<std::uint64_t, double> counts;
  double window_hours = 0.0;

  double cookies() const;
  std::uint64_t max_n() const { return counts.empty() ? 0 : counts.rbegin()->first; }
  double mean() const;
  double variance() const;  // population variance of the observed counts
  FrequencyTable scaled(double factor) const;
};

// Builds a table from per-identity event counts; zeros are ignored.
FrequencyTable frequency_from_counts(std::span<const std::uint64_t> counts, double window_hours);
// Identity = cookie_id.
FrequencyTable frequency_from_events(std::span<const CookieEvent> events, double window_hours);

// CSV `n,count`.
FrequencyTable parse_frequency(std::istream& in, double window_hours = 0.0);
void write_frequency(std::ostream& out, const FrequencyTable& freq);

// Errors: kDomainError unless k > 0, m > 0.
double nbd_pmf(double shape, double mean, std::uint64_t n);
double nbd_log_pmf(double shape, double mean, std::uint64_t n);
double nbd_truncated_pmf(double shape, double mean, std::uint64_t n);  // n >= 1
// P(N >= n).
double nbd_survival(double shape, double mean, std::uint64_t n);

enum class FitMethod { kMoments, kTruncatedMle, kPoissonFallback };

struct GoodnessOfFit {
  double chi_square = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

struct NbdModel {
  double shape = 0.0;
  double mean = 0.0;
  FitMethod method = FitMethod::kTruncatedMle;
  GoodnessOfFit gof;
  double log_likelihood = 0.0;  // zero-truncated
  std::size_t evaluations = 0;

  double variance() const { return mean * (1.0 + mean / shape); }
};

// Method of moments on the observed counts, ignoring truncation.
// Errors: kDegenerateData when the variance does not exceed the mean.
NbdModel fit_nbd_moments(const FrequencyTable& freq);

// Thrown when the data are not over-dispersed relative to a zero-truncated
// Poisson; carries the Poisson fallback fit.
class DegenerateDataError : public Error {
 public:
  DegenerateDataError(const std::string& message, double poisson_mean)
      : Error(ErrorCode::kDegenerateData, message), poisson_mean_(poisson_mean) {}
  double poisson_mean() const { return poisson_mean_; }

 private:
  double poisson_mean_;
};

// Zero-truncated Poisson MLE of the per-window mean.
double fit_poisson_truncated(const FrequencyTable& freq);

inline constexpr double kFitTolerance = 1e-6;
inline constexpr std::size_t kMaxEvaluations = 10000;

// Maximizes the zero-truncated likelihood over (log k, log m) with a simplex
// search started from fit_nbd_moments. Requires >= 3 distinct n and >= 100
// cookies (kTooShort otherwise). Throws DegenerateDataError when a
// likelihood-ratio test cannot separate the NBD from a truncated Poisson,
// kNoConvergence past kMaxEvaluations.
NbdModel fit_nbd_truncated(const FrequencyTable& freq);

struct FrequencyRow {
  std::uint64_t n = 0;
  double observed = 0.0;
  double expected = 0.0;
  double residual = 0.0;  // observed - expected
};

struct PooledBin {
  std::uint64_t first_n = 0;
  std::optional<std::uint64_t> last_n;  // nullopt: open tail
  double observed = 0.0;
  double expected = 0.0;
};

struct FrequencyComparison {
  std::vector<FrequencyRow> rows;  // n = 1..max observed n
  std::vector<PooledBin> bins;     // pooled to expected >= 5
  GoodnessOfFit gof;
  double singleton_excess = 0.0;   // observed(1) - expected(1)
};

// Observed vs zero-truncated expected counts. `fitted_parameters` is
// subtracted from the chi-square degrees of freedom.
FrequencyComparison compare_frequencies(const FrequencyTable& observed, const NbdModel& model,
                                        int fitted_parameters = 2);

inline constexpr std::int64_t kDefaultGuardSeconds = 7 * 86400;

struct SurvivalRow {
  std::string browser;
  double tau_days = 0.0;
  std::uint64_t deaths = 0;
  std::uint64_t censored = 0;
  bool lower_bound = false;  // no deaths: tau is total exposure, a lower bound
  bool degenerate = false;   // all lifetimes zero
};

struct SurvivalTable {
  std::vector<SurvivalRow> rows;  // sorted by browser

  const SurvivalRow* find(std::string_view browser) const;
};

// Exponential lifetime MLE per browser with right censoring: a cookie last
// seen within `guard_seconds` of t1 is censored. Lifetime = last - first seen.
// Errors: kOutOfDomain (event outside [t0, t1)).
SurvivalTable estimate_survival(std::span<const CookieEvent> events, std::int64_t t0, std::int64_t t1,
                                std::int64_t guard_seconds = kDefaultGuardSeconds);

// CSV `browser,tau_days,deaths,censored`.
SurvivalTable parse_survival(std::istream& in);
void write_survival(std::ostream& out, const SurvivalTable& table);

struct BrowserShare {
  std::string browser;
  double share = 0.0;
};

// Shares proportional to cookies observed per browser.
std::vector<BrowserShare> browser_mix_from(const SurvivalTable& table);

struct ChurnConfig {
  std::uint64_t loyalty_threshold = 10;
  std::uint64_t seed = 42;
  std::size_t simulated_users = 100000;
};

struct ChurnAdjustment {
  double shape = 0.0;
  double mean = 0.0;
  double true_users = 0.0;           // U
  double identities_per_user = 1.0;  // visible identities per true user
  double missing_loyal = 0.0;
  double deviance = 0.0;             // G^2 of the churned fit
  NbdModel naive;                    // plain truncated fit for reference
  bool skipped = false;              // churn negligible over the window
  std::size_t evaluations = 0;
};

// Identity lifetimes of simulated users as fractions of the window. Users get
// a browser from `mix`; cookie deaths are a Poisson process of rate 1/tau_b.
// Per-user streams are derived from (seed, user index).
std::vector<double> simulate_segments(const SurvivalTable& survival, std::span<const BrowserShare> mix,
                                      double window_hours, std::size_t users, std::uint64_t seed);

// Finds the (k, m) whose churned, zero-truncated identity-count distribution
// best explains `freq` (minimum G^2 deviance, i.e. multinomial likelihood),
// then U = cookies / visible identities per user and
//   missing_loyal = Σ_{n >= n0} (U P_NBD(n | k, m) - observed(n))_+.
// Errors: kDomainError (n0 < 2), kInconsistentInputs, kNoConvergence, and
// the errors of fit_nbd_truncated.
ChurnAdjustment adjust_for_churn(const FrequencyTable& freq, const SurvivalTable& survival,
                                 std::span<const BrowserShare> mix, const ChurnConfig& config = {});

nlohmann::ordered_json nbd_to_json(const NbdModel& model);
nlohmann::ordered_json churn_to_json(const ChurnAdjustment& adj);
std::string_view fit_method_name(FitMethod method);

}  // namespace adlift
