#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "adlift/error.hpp"
#include "adlift/repeatbuy.hpp"
#include "adlift/rng.hpp"
#include "adlift/synth.hpp"

namespace adlift {
namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no adlift::Error thrown";
  return ErrorCode::kUsage;
}

double poisson_pmf(double mu, int n) { return std::exp(n * std::log(mu) - mu - std::lgamma(n + 1.0)); }

// Zero-truncated Gamma-Poisson sample of `cookies` identities.
FrequencyTable sample_truncated(double k, double m, std::size_t cookies, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint64_t> counts;
  while (counts.size() < cookies) {
    const auto n = rng.poisson(rng.gamma(k) * m / k);
    if (n > 0) counts.push_back(n);
  }
  return frequency_from_counts(counts, 168.0);
}

TEST(NbdPmf, ClosedForms) {
  EXPECT_NEAR(nbd_pmf(1.0, 1.0, 0), 0.5, 1e-15);
  EXPECT_NEAR(nbd_pmf(1.0, 1.0, 3), 1.0 / 16.0, 1e-15);
  double tv = 0.0;
  for (int n = 0; n <= 50; ++n) tv += std::abs(nbd_pmf(1e6, 2.0, n) - poisson_pmf(2.0, n));
  EXPECT_LT(tv / 2.0, 1e-4);
}

TEST(NbdPmf, MomentsBySummation) {
  double mass = 0.0, mean = 0.0, second = 0.0;
  for (int n = 0; n < 3000; ++n) {
    const double p = nbd_pmf(2.0, 3.0, n);
    mass += p;
    mean += n * p;
    second += static_cast<double>(n) * n * p;
  }
  EXPECT_NEAR(mass, 1.0, 1e-12);
  EXPECT_NEAR(mean, 3.0, 1e-8);
  EXPECT_NEAR(second - mean * mean, 3.0 * (1.0 + 3.0 / 2.0), 1e-8);
}

TEST(NbdPmf, SumsToOne) {
  for (auto [k, m] : {std::pair{0.3, 1.0}, {0.8, 2.5}, {2.0, 10.0}, {50.0, 0.5}, {0.05, 20.0}}) {
    double total = 0.0, truncated = 0.0;
    std::uint64_t n = 0;
    for (; n < 200000; ++n) {
      total += nbd_pmf(k, m, n);
      if (n >= 1) truncated += nbd_truncated_pmf(k, m, n);
      if (n > 10 && nbd_survival(k, m, n + 1) < 1e-12) break;
    }
    EXPECT_LT(nbd_survival(k, m, n + 1), 1e-10) << k << "," << m;
    EXPECT_NEAR(total, 1.0, 1e-10) << k << "," << m;
    EXPECT_NEAR(truncated, 1.0, 1e-10) << k << "," << m;
  }
}

TEST(NbdPmf, LogAndSurvivalConsistent) {
  EXPECT_NEAR(std::exp(nbd_log_pmf(0.8, 2.5, 7)), nbd_pmf(0.8, 2.5, 7), 1e-15);
  EXPECT_NEAR(std::exp(nbd_log_pmf(0.8, 2.5, 400)), nbd_pmf(0.8, 2.5, 400), 1e-300);
  double tail = 0.0;
  for (int n = 5; n < 5000; ++n) tail += nbd_pmf(0.8, 2.5, n);
  EXPECT_NEAR(nbd_survival(0.8, 2.5, 5), tail, 1e-12);
  EXPECT_EQ(nbd_survival(0.8, 2.5, 0), 1.0);
}

TEST(NbdPmf, DomainErrors) {
  EXPECT_EQ(code_of([] { nbd_pmf(0.0, 1.0, 1); }), ErrorCode::kDomainError);
  EXPECT_EQ(code_of([] { nbd_pmf(1.0, -1.0, 1); }), ErrorCode::kDomainError);
  EXPECT_EQ(code_of([] { nbd_truncated_pmf(-1.0, 1.0, 2); }), ErrorCode::kDomainError);
  EXPECT_EQ(nbd_truncated_pmf(1.0, 1.0, 0), 0.0);
}

TEST(FitNbd, RecoversGeneratingParameters) {
  const FrequencyTable freq = sample_truncated(0.8, 2.5, 100000, 1);
  const NbdModel fit = fit_nbd_truncated(freq);
  EXPECT_NEAR(fit.shape, 0.8, 0.08);
  EXPECT_NEAR(fit.mean, 2.5, 0.25);
  EXPECT_EQ(fit.method, FitMethod::kTruncatedMle);
  EXPECT_LE(fit.evaluations, kMaxEvaluations);
}

TEST(FitNbd, PoissonDataIsDegenerate) {
  Rng rng(5);
  std::vector<std::uint64_t> counts;
  while (counts.size() < 20000) {
    const auto n = rng.poisson(3.0);
    if (n > 0) counts.push_back(n);
  }
  try {
    fit_nbd_truncated(frequency_from_counts(counts, 168.0));
    FAIL() << "expected DegenerateDataError";
  } catch (const DegenerateDataError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateData);
    EXPECT_NEAR(e.poisson_mean(), 3.0, 0.1);
  }
}

TEST(FitNbd, TooShort) {
  FrequencyTable small;
  small.counts = {{1, 40}, {2, 20}, {3, 10}};
  EXPECT_EQ(code_of([&] { fit_nbd_truncated(small); }), ErrorCode::kTooShort);
  FrequencyTable narrow;
  narrow.counts = {{1, 400}, {2, 200}};
  EXPECT_EQ(code_of([&] { fit_nbd_truncated(narrow); }), ErrorCode::kTooShort);
}

TEST(FitNbd, ScaleFreeInCookies) {
  const FrequencyTable freq = sample_truncated(1.3, 4.0, 20000, 2);
  const NbdModel a = fit_nbd_truncated(freq);
  const NbdModel b = fit_nbd_truncated(freq.scaled(3.0));
  EXPECT_NEAR(a.shape / b.shape, 1.0, 1e-4);
  EXPECT_NEAR(a.mean / b.mean, 1.0, 1e-4);
}

TEST(FitNbd, SelfConsistentGoodnessOfFit) {
  const NbdModel base = fit_nbd_truncated(sample_truncated(0.8, 2.5, 100000, 3));
  int good = 0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    const NbdModel refit = fit_nbd_truncated(sample_truncated(base.shape, base.mean, 100000, splitmix64(rep)));
    good += refit.gof.p_value > 0.01;
  }
  EXPECT_GE(good, 95);
}

TEST(FitNbd, MomentsRejectUnderdispersion) {
  FrequencyTable freq;
  freq.counts = {{2, 100}, {3, 100}};
  EXPECT_EQ(code_of([&] { fit_nbd_moments(freq); }), ErrorCode::kDegenerateData);
}

TEST(CompareFrequencies, ExactExpectedGivesZero) {
  NbdModel model;
  model.shape = 0.9;
  model.mean = 3.0;
  FrequencyTable freq;
  for (std::uint64_t n = 1; n <= 1500; ++n) freq.counts[n] = 1e5 * nbd_truncated_pmf(model.shape, model.mean, n);
  const FrequencyComparison cmp = compare_frequencies(freq, model);
  EXPECT_NEAR(cmp.gof.chi_square, 0.0, 1e-6);
  EXPECT_NEAR(cmp.singleton_excess, 0.0, 1e-6);
  for (const auto& bin : cmp.bins) EXPECT_GE(bin.expected, 5.0);
  EXPECT_EQ(cmp.rows.front().n, 1u);
}

TEST(CompareFrequencies, PooledBinsCoverEverything) {
  const FrequencyTable freq = sample_truncated(0.8, 2.5, 5000, 4);
  const NbdModel fit = fit_nbd_truncated(freq);
  const FrequencyComparison cmp = compare_frequencies(freq, fit);
  double obs = 0.0, exp = 0.0;
  for (const auto& b : cmp.bins) {
    obs += b.observed;
    exp += b.expected;
  }
  EXPECT_NEAR(obs, freq.cookies(), 1e-9);
  EXPECT_NEAR(exp, freq.cookies(), 1e-6);
  EXPECT_FALSE(cmp.bins.back().last_n.has_value());
  EXPECT_EQ(cmp.gof.dof, static_cast<int>(cmp.bins.size()) - 3);
}

TEST(FrequencyFile, RoundTrip) {
  FrequencyTable freq;
  freq.counts = {{1, 10}, {2, 4}, {7, 1}};
  std::ostringstream out;
  write_frequency(out, freq);
  std::istringstream in(out.str());
  EXPECT_EQ(parse_frequency(in).counts, freq.counts);
}

// --- survival ---------------------------------------------------------------

constexpr std::int64_t kDay = 86400;

TEST(Survival, OneCookieOneDay) {
  const std::vector<CookieEvent> ev = {{"c", "chrome", 0}, {"c", "chrome", kDay}};
  const SurvivalTable t = estimate_survival(ev, 0, 30 * kDay);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(t.rows[0].tau_days, 1.0);
  EXPECT_EQ(t.rows[0].deaths, 1u);
  EXPECT_EQ(t.rows[0].censored, 0u);
}

TEST(Survival, SingleSightingsAreDegenerate) {
  const std::vector<CookieEvent> ev = {{"a", "x", 0}, {"b", "x", kDay}, {"c", "x", 2 * kDay}};
  const SurvivalTable t = estimate_survival(ev, 0, 30 * kDay);
  EXPECT_TRUE(t.rows[0].degenerate);
  EXPECT_EQ(t.rows[0].tau_days, 0.0);
}

TEST(Survival, NoDeathsIsLowerBound) {
  const std::vector<CookieEvent> ev = {{"a", "x", 0}, {"a", "x", 29 * kDay}};
  const SurvivalTable t = estimate_survival(ev, 0, 30 * kDay);
  EXPECT_TRUE(t.rows[0].lower_bound);
  EXPECT_EQ(t.rows[0].censored, 1u);
  EXPECT_DOUBLE_EQ(t.rows[0].tau_days, 29.0);
}

TEST(Survival, OutOfWindow) {
  const std::vector<CookieEvent> ev = {{"a", "x", 31 * kDay}};
  EXPECT_EQ(code_of([&] { estimate_survival(ev, 0, 30 * kDay); }), ErrorCode::kOutOfDomain);
}

TEST(Survival, CensoredExponentialMle) {
  // Births uniform over a 35-day window, lifetimes Exp(7 days): about 20% of
  // cookies are still alive at the end and are seen one minute before it.
  const std::int64_t t1 = 35 * kDay;
  Rng rng(6);
  std::vector<CookieEvent> ev;
  std::size_t alive = 0;
  for (int c = 0; c < 10000; ++c) {
    const std::string id = "c" + std::to_string(c);
    const auto born = static_cast<std::int64_t>(rng.uniform() * static_cast<double>(t1 - 3600));
    const auto death = born + static_cast<std::int64_t>(rng.exponential() * 7.0 * kDay);
    ev.push_back({id, "x", born});
    if (death >= t1 - 3600) {
      ev.push_back({id, "x", t1 - 60});
      ++alive;
    } else {
      ev.push_back({id, "x", death});
    }
  }
  const SurvivalTable t = estimate_survival(ev, 0, t1, 3600);
  EXPECT_NEAR(static_cast<double>(alive) / 10000.0, 0.2, 0.03);
  EXPECT_EQ(t.rows[0].censored, alive);
  EXPECT_NEAR(t.rows[0].tau_days, 7.0, 0.35);
}

TEST(Survival, NoCensoringIsPlainMean) {
  Rng rng(7);
  std::vector<CookieEvent> ev;
  double total = 0.0;
  for (int c = 0; c < 500; ++c) {
    const auto life = static_cast<std::int64_t>(rng.exponential() * 3.0 * kDay);
    ev.push_back({"c" + std::to_string(c), "x", 0});
    ev.push_back({"c" + std::to_string(c), "x", life});
    total += static_cast<double>(life) / kDay;
  }
  const SurvivalTable t = estimate_survival(ev, 0, 400 * kDay);
  EXPECT_EQ(t.rows[0].censored, 0u);
  EXPECT_NEAR(t.rows[0].tau_days, total / 500.0, 1e-9);
}

TEST(Survival, FileRoundTripAndMix) {
  SurvivalTable t;
  t.rows = {{"chrome", 10.0, 30, 10, false, false}, {"safari", 5.0, 10, 0, false, false}};
  std::ostringstream out;
  write_survival(out, t);
  std::istringstream in(out.str());
  const SurvivalTable back = parse_survival(in);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[1].browser, "safari");
  EXPECT_EQ(back.rows[0].tau_days, 10.0);
  const auto mix = browser_mix_from(back);
  EXPECT_DOUBLE_EQ(mix[0].share, 0.8);
  EXPECT_DOUBLE_EQ(mix[1].share, 0.2);
}

// --- churn ------------------------------------------------------------------

struct Churned {
  Population users;
  ChurnedEvents observed;
  FrequencyTable freq;
};

Churned churned(double k, double m, std::size_t users, const ChurnSpec& churn, std::uint64_t seed) {
  const PopulationSpec pop{k, m, users, 672.0, 0};
  Churned c{gen_gamma_poisson(pop, seed), {}, {}};
  c.observed = apply_churn(c.users, pop, churn, seed);
  c.freq = frequency_from_counts(c.observed.identity_counts, pop.window_hours);
  return c;
}

SurvivalTable survival_of(const ChurnSpec& churn) {
  SurvivalTable t;
  for (const auto& b : churn.browsers) t.rows.push_back({b.name, b.tau_days, 1, 0, false, false});
  return t;
}

std::vector<BrowserShare> mix_of(const ChurnSpec& churn) {
  std::vector<BrowserShare> mix;
  for (const auto& b : churn.browsers) mix.push_back({b.name, b.share});
  return mix;
}

TEST(AdjustForChurn, NoChurnLimit) {
  const ChurnSpec none{{{"x", std::numeric_limits<double>::infinity(), 1.0}}};
  const Churned c = churned(0.8, 6.0, 30000, none, 8);
  const NbdModel naive = fit_nbd_truncated(c.freq);
  const ChurnAdjustment adj = adjust_for_churn(c.freq, survival_of(none), mix_of(none));
  EXPECT_TRUE(adj.skipped);
  EXPECT_NEAR(adj.shape, naive.shape, 1e-6 * naive.shape);
  EXPECT_NEAR(adj.mean, naive.mean, 1e-6 * naive.mean);

  // Noise-free table: observed equals expected, so nothing is missing.
  FrequencyTable exact;
  exact.window_hours = 672.0;
  for (std::uint64_t n = 1; n <= 1500; ++n) exact.counts[n] = 1e5 * nbd_truncated_pmf(0.8, 6.0, n);
  const ChurnAdjustment flat = adjust_for_churn(exact, survival_of(none), mix_of(none));
  EXPECT_TRUE(flat.skipped);
  EXPECT_NEAR(flat.missing_loyal, 0.0, 1e-6 * exact.cookies());

  // Very slow but non-negligible churn runs the full search.
  const ChurnSpec slow{{{"x", 5000.0, 1.0}}};
  const ChurnAdjustment near = adjust_for_churn(c.freq, survival_of(slow), mix_of(slow));
  EXPECT_FALSE(near.skipped);
  EXPECT_NEAR(near.shape / naive.shape, 1.0, 0.02);
  EXPECT_NEAR(near.mean / naive.mean, 1.0, 0.02);
  EXPECT_LT(near.missing_loyal, 0.01 * c.freq.cookies());
}

TEST(AdjustForChurn, RecoversGeneratingParameters) {
  const ChurnSpec churn{{{"a", 4.0, 0.5}, {"b", 12.0, 0.5}}};
  const Churned c = churned(1.2, 8.0, 100000, churn, 9);
  const ChurnAdjustment adj = adjust_for_churn(c.freq, survival_of(churn), mix_of(churn));
  EXPECT_NEAR(adj.shape / 1.2, 1.0, 0.15);
  EXPECT_NEAR(adj.mean / 8.0, 1.0, 0.15);
  EXPECT_NEAR(adj.true_users / 100000.0, 1.0, 0.15);
  EXPECT_GE(adj.missing_loyal, 0.0);
}

TEST(AdjustForChurn, MissingLoyalAboveObservedRange) {
  const ChurnSpec heavy{{{"a", 2.0, 1.0}}};
  const Churned c = churned(0.8, 6.0, 20000, heavy, 10);
  ChurnConfig config;
  config.loyalty_threshold = c.freq.max_n() + 1;
  const ChurnAdjustment adj = adjust_for_churn(c.freq, survival_of(heavy), mix_of(heavy), config);
  EXPECT_GT(adj.missing_loyal, 0.0);
}

TEST(AdjustForChurn, RejectsSmallThreshold) {
  const ChurnSpec churn{{{"a", 5.0, 1.0}}};
  const Churned c = churned(0.8, 6.0, 5000, churn, 11);
  ChurnConfig config;
  config.loyalty_threshold = 1;
  EXPECT_EQ(code_of([&] { adjust_for_churn(c.freq, survival_of(churn), mix_of(churn), config); }),
            ErrorCode::kDomainError);
}

TEST(AdjustForChurn, DeterministicForSeed) {
  const ChurnSpec churn{{{"a", 5.0, 1.0}}};
  const Churned c = churned(0.8, 6.0, 5000, churn, 12);
  ChurnConfig config;
  config.simulated_users = 20000;
  const auto a = adjust_for_churn(c.freq, survival_of(churn), mix_of(churn), config);
  const auto b = adjust_for_churn(c.freq, survival_of(churn), mix_of(churn), config);
  EXPECT_EQ(a.shape, b.shape);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.missing_loyal, b.missing_loyal);
}

// Churned data vs its naive truncated fit shows more singletons than the fit.
TEST(ChurnEffect, PositiveSingletonExcess) {
  const ChurnSpec churn{{{"chrome", 10.0, 0.5}, {"firefox", 20.0, 0.2}, {"safari", 5.0, 0.3}}};
  const Churned c = churned(0.8, 6.0, 100000, churn, 2024);
  const FrequencyComparison cmp = compare_frequencies(c.freq, fit_nbd_truncated(c.freq));
  EXPECT_GT(cmp.singleton_excess, 0.0);
}

// Faster cookie death never decreases the singleton excess.
TEST(ChurnEffect, ExcessMonotoneInTau) {
  double previous = -std::numeric_limits<double>::infinity();
  for (double tau : {40.0, 20.0, 10.0, 5.0, 2.5}) {
    const ChurnSpec churn{{{"x", tau, 1.0}}};
    const Churned c = churned(0.8, 6.0, 50000, churn, 2025);
    const double excess = compare_frequencies(c.freq, fit_nbd_truncated(c.freq)).singleton_excess;
    EXPECT_GE(excess, previous) << "tau " << tau;
    previous = excess;
  }
}

TEST(Json, NbdAndChurnDocuments) {
  NbdModel m;
  m.shape = 0.5;
  m.mean = 2.0;
  const auto doc = nbd_to_json(m);
  EXPECT_EQ(doc.at("fit_method"), "truncated_mle");
  EXPECT_EQ(doc.at("shape"), 0.5);
  ChurnAdjustment adj;
  adj.naive = m;
  EXPECT_TRUE(churn_to_json(adj).contains("missing_loyal"));
}

}  // namespace
}  // namespace adlift
