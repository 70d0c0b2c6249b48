#include "adlift/repeatbuy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <unordered_map>

#include "adlift/kernels.hpp"
#include "adlift/rng.hpp"
#include "adlift/stats.hpp"

namespace adlift {

namespace {

void check_nbd_params(double shape, double mean) {
  if (!(shape > 0.0) || !(mean > 0.0) || !std::isfinite(shape) || !std::isfinite(mean)) {
    throw Error(ErrorCode::kDomainError, "NBD needs finite k > 0 and m > 0");
  }
}

// log(1 - P(0)) = log(1 - (k/(k+m))^k)
double log_visible(double shape, double mean) {
  return std::log(-std::expm1(-shape * std::log1p(mean / shape)));
}

// Zero-truncated log-likelihood of the table; counts are walked in ascending n
// so that log Γ(k+n)/Γ(k) accumulates as Σ_{j<n} log(k+j).
double truncated_log_likelihood(const FrequencyTable& freq, double shape, double mean) {
  const double log_r = std::log(mean) - std::log(shape + mean);
  const double log_p0 = -shape * std::log1p(mean / shape);
  const double log_vis = log_visible(shape, mean);
  double ll = 0.0;
  double log_rising = 0.0;
  std::uint64_t j = 0;
  for (const auto& [n, f] : freq.counts) {
    for (; j < n; ++j) log_rising += std::log(shape + static_cast<double>(j));
    const double log_p = log_rising - std::lgamma(static_cast<double>(n) + 1.0) + log_p0 +
                         static_cast<double>(n) * log_r;
    ll += f * (log_p - log_vis);
  }
  return ll;
}

double poisson_truncated_log_likelihood(const FrequencyTable& freq, double mu) {
  const double log_vis = std::log(-std::expm1(-mu));
  double ll = 0.0;
  for (const auto& [n, f] : freq.counts) {
    const double nn = static_cast<double>(n);
    ll += f * (-mu + nn * std::log(mu) - std::lgamma(nn + 1.0) - log_vis);
  }
  return ll;
}

// Half the 5% point of chi-square(1): boundary-corrected LR cut for k = inf.
constexpr double kHalfLrCut = 2.705543454095404 / 2.0;

std::vector<double> dense_observed(const FrequencyTable& freq) {
  std::vector<double> obs(freq.max_n() + 1, 0.0);
  for (const auto& [n, f] : freq.counts) obs[n] = f;
  return obs;
}

}  // namespace

double FrequencyTable::cookies() const {
  double c = 0.0;
  for (const auto& [n, f] : counts) c += f;
  return c;
}

double FrequencyTable::mean() const {
  double c = 0.0, s = 0.0;
  for (const auto& [n, f] : counts) {
    c += f;
    s += f * static_cast<double>(n);
  }
  return s / c;
}

double FrequencyTable::variance() const {
  const double mu = mean();
  double c = 0.0, ss = 0.0;
  for (const auto& [n, f] : counts) {
    c += f;
    ss += f * (static_cast<double>(n) - mu) * (static_cast<double>(n) - mu);
  }
  return ss / c;
}

FrequencyTable FrequencyTable::scaled(double factor) const {
  FrequencyTable t = *this;
  for (auto& [n, f] : t.counts) f *= factor;
  return t;
}

FrequencyTable frequency_from_counts(std::span<const std::uint64_t> counts, double window_hours) {
  FrequencyTable t;
  t.window_hours = window_hours;
  for (std::uint64_t c : counts) {
    if (c > 0) t.counts[c] += 1.0;
  }
  return t;
}

FrequencyTable frequency_from_events(std::span<const CookieEvent> events, double window_hours) {
  std::unordered_map<std::string_view, std::uint64_t> per_cookie;
  for (const auto& e : events) ++per_cookie[e.cookie_id];
  FrequencyTable t;
  t.window_hours = window_hours;
  for (const auto& [_, c] : per_cookie) t.counts[c] += 1.0;
  return t;
}

FrequencyTable parse_frequency(std::istream& in, double window_hours) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kMissingColumn, "missing header row");
  const auto header = split_line(line, ',');
  if (header.size() != 2 || header[0] != "n" || header[1] != "count") {
    throw Error(ErrorCode::kMissingColumn, "frequency header must be 'n,count'");
  }
  FrequencyTable t;
  t.window_hours = window_hours;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = split_line(line, ',');
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 2) throw Error(ErrorCode::kRaggedRow, "line " + std::to_string(line_no));
    try {
      std::size_t used_n = 0, used_c = 0;
      const unsigned long long n = std::stoull(f[0], &used_n);
      const double c = std::stod(f[1], &used_c);
      if (used_n != f[0].size() || used_c != f[1].size() || n == 0 || c < 0.0) throw std::invalid_argument("");
      t.counts[n] += c;
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kCorruptFile, "line " + std::to_string(line_no) + ": bad frequency row");
    }
  }
  return t;
}

void write_frequency(std::ostream& out, const FrequencyTable& freq) {
  out << "n,count\n";
  out.precision(12);
  for (const auto& [n, c] : freq.counts) out << n << ',' << c << '\n';
}

double nbd_log_pmf(double shape, double mean, std::uint64_t n) {
  check_nbd_params(shape, mean);
  const double nn = static_cast<double>(n);
  return std::lgamma(shape + nn) - std::lgamma(shape) - std::lgamma(nn + 1.0) -
         shape * std::log1p(mean / shape) + nn * (std::log(mean) - std::log(shape + mean));
}

double nbd_pmf(double shape, double mean, std::uint64_t n) {
  check_nbd_params(shape, mean);
  // Recurrence P(j+1) = P(j) (k+j)/(j+1) m/(k+m) is exact to rounding for
  // small n and stays accurate when k is huge (Poisson limit), where the
  // lgamma difference loses digits.
  if (n <= 64) {
    const double r = mean / (shape + mean);
    double p = std::exp(-shape * std::log1p(mean / shape));
    for (std::uint64_t j = 0; j < n; ++j) p *= (shape + static_cast<double>(j)) / static_cast<double>(j + 1) * r;
    return p;
  }
  return std::exp(nbd_log_pmf(shape, mean, n));
}

double nbd_truncated_pmf(double shape, double mean, std::uint64_t n) {
  if (n == 0) return 0.0;
  return nbd_pmf(shape, mean, n) / -std::expm1(-shape * std::log1p(mean / shape));
}

double nbd_survival(double shape, double mean, std::uint64_t n) {
  check_nbd_params(shape, mean);
  if (n == 0) return 1.0;
  const double r = mean / (shape + mean);
  double p = std::exp(-shape * std::log1p(mean / shape));
  double cdf = p;
  for (std::uint64_t j = 1; j < n; ++j) {
    p *= (shape + static_cast<double>(j - 1)) / static_cast<double>(j) * r;
    cdf += p;
  }
  return std::max(0.0, 1.0 - cdf);
}

NbdModel fit_nbd_moments(const FrequencyTable& freq) {
  const double mu = freq.mean();
  const double var = freq.variance();
  if (!(var > mu)) {
    throw DegenerateDataError("variance " + std::to_string(var) + " does not exceed mean " + std::to_string(mu),
                              mu);
  }
  NbdModel m;
  m.method = FitMethod::kMoments;
  m.mean = mu;
  m.shape = mu * mu / (var - mu);
  return m;
}

double fit_poisson_truncated(const FrequencyTable& freq) {
  const double xbar = freq.mean();
  if (!(xbar > 1.0)) return 0.0;
  // xbar = mu / (1 - e^-mu) is increasing in mu; bracket in (0, xbar].
  double lo = 0.0, hi = xbar;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double g = mid / -std::expm1(-mid);
    (g < xbar ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

NbdModel fit_nbd_truncated(const FrequencyTable& freq) {
  if (freq.counts.size() < 3 || freq.cookies() < 100.0) {
    throw Error(ErrorCode::kTooShort, "need at least 3 distinct counts and 100 cookies");
  }
  double k0 = 10.0, m0 = freq.mean();
  try {
    const NbdModel mom = fit_nbd_moments(freq);
    k0 = mom.shape;
    m0 = mom.mean;
  } catch (const DegenerateDataError&) {
  }

  const auto objective = [&](std::span<const double> x) {
    if (std::abs(x[0]) > 40.0 || std::abs(x[1]) > 40.0) return std::numeric_limits<double>::infinity();
    return -truncated_log_likelihood(freq, std::exp(x[0]), std::exp(x[1]));
  };
  const SimplexResult best = nelder_mead(objective, {std::log(k0), std::log(m0)}, {0.25, 0.25},
                                         kFitTolerance, kMaxEvaluations);
  if (!best.converged) {
    throw Error(ErrorCode::kNoConvergence,
                "truncated NBD fit did not converge in " + std::to_string(best.evaluations) + " evaluations");
  }

  NbdModel model;
  model.method = FitMethod::kTruncatedMle;
  model.shape = std::exp(best.x[0]);
  model.mean = std::exp(best.x[1]);
  model.log_likelihood = -best.value;
  model.evaluations = best.evaluations;

  const double mu = fit_poisson_truncated(freq);
  if (!(mu > 0.0) || model.log_likelihood - poisson_truncated_log_likelihood(freq, mu) < kHalfLrCut) {
    throw DegenerateDataError("counts are not over-dispersed; NBD shape not identifiable", mu);
  }
  model.gof = compare_frequencies(freq, model).gof;
  return model;
}

FrequencyComparison compare_frequencies(const FrequencyTable& observed, const NbdModel& model,
                                        int fitted_parameters) {
  check_nbd_params(model.shape, model.mean);
  FrequencyComparison out;
  const double total = observed.cookies();
  const std::uint64_t n_max = observed.max_n();
  const auto obs = dense_observed(observed);

  // Expected counts n = 1..n_max under the truncated law.
  const double vis = -std::expm1(-model.shape * std::log1p(model.mean / model.shape));
  const double r = model.mean / (model.shape + model.mean);
  std::vector<double> expected(n_max + 1, 0.0);
  double p = std::exp(-model.shape * std::log1p(model.mean / model.shape));
  for (std::uint64_t n = 1; n <= n_max; ++n) {
    p *= (model.shape + static_cast<double>(n - 1)) / static_cast<double>(n) * r;
    expected[n] = total * p / vis;
  }
  for (std::uint64_t n = 1; n <= n_max; ++n) {
    out.rows.push_back({n, obs[n], expected[n], obs[n] - expected[n]});
  }
  if (n_max >= 1) out.singleton_excess = obs[1] - expected[1];

  // Pool from n = 1 upward; the last bin is open-ended and absorbs whatever
  // remains once the remaining expected mass drops below 5.
  double remaining_expected = total;
  double remaining_observed = total;
  PooledBin current{1, std::nullopt, 0.0, 0.0};
  for (std::uint64_t n = 1; n <= n_max; ++n) {
    if (remaining_expected - current.expected < 5.0) break;
    current.observed += obs[n];
    current.expected += expected[n];
    if (current.expected >= 5.0 && remaining_expected - current.expected >= 5.0) {
      current.last_n = n;
      out.bins.push_back(current);
      remaining_expected -= current.expected;
      remaining_observed -= current.observed;
      current = PooledBin{n + 1, std::nullopt, 0.0, 0.0};
    }
  }
  current.observed = remaining_observed;
  current.expected = remaining_expected;
  current.last_n.reset();
  if (current.expected > 0.0 || current.observed > 0.0) {
    if (current.expected < 5.0 && !out.bins.empty()) {
      out.bins.back().observed += current.observed;
      out.bins.back().expected += current.expected;
      out.bins.back().last_n.reset();
    } else {
      out.bins.push_back(current);
    }
  }

  double chi2 = 0.0;
  for (const auto& b : out.bins) {
    if (b.expected > 0.0) chi2 += (b.observed - b.expected) * (b.observed - b.expected) / b.expected;
  }
  out.gof.chi_square = chi2;
  out.gof.dof = static_cast<int>(out.bins.size()) - 1 - fitted_parameters;
  out.gof.p_value = out.gof.dof > 0 ? chi_square_sf(chi2, out.gof.dof) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

const SurvivalRow* SurvivalTable::find(std::string_view browser) const {
  for (const auto& r : rows) {
    if (r.browser == browser) return &r;
  }
  return nullptr;
}

SurvivalTable estimate_survival(std::span<const CookieEvent> events, std::int64_t t0, std::int64_t t1,
                                std::int64_t guard_seconds) {
  struct Span {
    std::string_view browser;
    std::int64_t first;
    std::int64_t last;
  };
  std::unordered_map<std::string_view, Span> cookies;
  for (const auto& e : events) {
    if (e.timestamp < t0 || e.timestamp >= t1) {
      throw Error(ErrorCode::kOutOfDomain, "event of cookie '" + e.cookie_id + "' outside the window");
    }
    auto [it, inserted] = cookies.try_emplace(e.cookie_id, Span{e.browser, e.timestamp, e.timestamp});
    if (!inserted) {
      it->second.first = std::min(it->second.first, e.timestamp);
      it->second.last = std::max(it->second.last, e.timestamp);
    }
  }
  struct Acc {
    double exposure_seconds = 0.0;
    std::uint64_t deaths = 0;
    std::uint64_t censored = 0;
  };
  std::map<std::string, Acc, std::less<>> per_browser;
  for (const auto& [_, s] : cookies) {
    auto& acc = per_browser[std::string(s.browser)];
    acc.exposure_seconds += static_cast<double>(s.last - s.first);
    if (s.last >= t1 - guard_seconds) {
      ++acc.censored;
    } else {
      ++acc.deaths;
    }
  }
  SurvivalTable table;
  for (const auto& [browser, acc] : per_browser) {
    SurvivalRow row;
    row.browser = browser;
    row.deaths = acc.deaths;
    row.censored = acc.censored;
    const double exposure_days = acc.exposure_seconds / 86400.0;
    if (acc.deaths == 0) {
      row.lower_bound = true;
      row.tau_days = exposure_days;
    } else {
      row.tau_days = exposure_days / static_cast<double>(acc.deaths);
    }
    row.degenerate = acc.exposure_seconds == 0.0;
    table.rows.push_back(std::move(row));
  }
  return table;
}

SurvivalTable parse_survival(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kMissingColumn, "missing header row");
  const auto header = split_line(line, ',');
  if (header != std::vector<std::string>{"browser", "tau_days", "deaths", "censored"}) {
    throw Error(ErrorCode::kMissingColumn, "survival header must be 'browser,tau_days,deaths,censored'");
  }
  SurvivalTable t;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = split_line(line, ',');
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 4) throw Error(ErrorCode::kRaggedRow, "line " + std::to_string(line_no));
    SurvivalRow row;
    row.browser = f[0];
    try {
      row.tau_days = std::stod(f[1]);
      row.deaths = std::stoull(f[2]);
      row.censored = std::stoull(f[3]);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kCorruptFile, "line " + std::to_string(line_no) + ": bad survival row");
    }
    row.lower_bound = row.deaths == 0;
    row.degenerate = row.tau_days == 0.0;
    t.rows.push_back(std::move(row));
  }
  std::sort(t.rows.begin(), t.rows.end(), [](const auto& a, const auto& b) { return a.browser < b.browser; });
  return t;
}

void write_survival(std::ostream& out, const SurvivalTable& table) {
  out << "browser,tau_days,deaths,censored\n";
  out.precision(12);
  for (const auto& r : table.rows) out << r.browser << ',' << r.tau_days << ',' << r.deaths << ',' << r.censored << '\n';
}

std::vector<BrowserShare> browser_mix_from(const SurvivalTable& table) {
  double total = 0.0;
  for (const auto& r : table.rows) total += static_cast<double>(r.deaths + r.censored);
  std::vector<BrowserShare> mix;
  for (const auto& r : table.rows) {
    mix.push_back({r.browser, total > 0.0 ? static_cast<double>(r.deaths + r.censored) / total : 0.0});
  }
  return mix;
}

std::vector<double> simulate_segments(const SurvivalTable& survival, std::span<const BrowserShare> mix,
                                      double window_hours, std::size_t users, std::uint64_t seed) {
  // Deaths per window for each browser in mix order; 0 means immortal.
  std::vector<double> death_rate;
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& b : mix) {
    const SurvivalRow* row = survival.find(b.browser);
    if (row == nullptr) throw Error(ErrorCode::kInconsistentInputs, "browser '" + b.browser + "' has no survival row");
    death_rate.push_back(std::isinf(row->tau_days) ? 0.0 : window_hours / (24.0 * row->tau_days));
    acc += b.share;
    cumulative.push_back(acc);
  }
  std::vector<double> segments;
  segments.reserve(users + users / 2);
  for (std::size_t u = 0; u < users; ++u) {
    Rng rng = Rng::derive(seed, u);
    const double pick = rng.uniform() * acc;
    std::size_t b = 0;
    while (b + 1 < cumulative.size() && pick >= cumulative[b]) ++b;
    const double rate = death_rate[b];
    double t = 0.0;
    for (;;) {
      const double gap = rate > 0.0 ? rng.exponential() / rate : std::numeric_limits<double>::infinity();
      if (t + gap >= 1.0) {
        segments.push_back(1.0 - t);
        break;
      }
      segments.push_back(gap);
      t += gap;
    }
  }
  return segments;
}

ChurnAdjustment adjust_for_churn(const FrequencyTable& freq, const SurvivalTable& survival,
                                 std::span<const BrowserShare> mix, const ChurnConfig& config) {
  if (config.loyalty_threshold < 2) throw Error(ErrorCode::kDomainError, "loyalty threshold must be >= 2");
  if (!(freq.window_hours > 0.0)) throw Error(ErrorCode::kInconsistentInputs, "frequency window length must be positive");
  if (config.simulated_users == 0) throw Error(ErrorCode::kDomainError, "need at least one simulated user");
  double share_total = 0.0;
  double deaths_per_user = 0.0;
  for (const auto& b : mix) {
    if (!(b.share >= 0.0)) throw Error(ErrorCode::kInconsistentInputs, "negative browser share");
    const SurvivalRow* row = survival.find(b.browser);
    if (row == nullptr) throw Error(ErrorCode::kInconsistentInputs, "browser '" + b.browser + "' has no survival row");
    if (b.share > 0.0 && !(row->tau_days > 0.0)) {
      throw Error(ErrorCode::kInconsistentInputs, "browser '" + b.browser + "' has a non-positive lifetime");
    }
    share_total += b.share;
    if (!std::isinf(row->tau_days)) deaths_per_user += b.share * freq.window_hours / (24.0 * row->tau_days);
  }
  if (!(share_total > 0.0)) throw Error(ErrorCode::kInconsistentInputs, "browser mix is empty");
  deaths_per_user /= share_total;

  ChurnAdjustment adj;
  adj.naive = fit_nbd_truncated(freq);
  const double cookies = freq.cookies();
  const std::uint64_t n_max = freq.max_n();
  const std::uint64_t n0 = config.loyalty_threshold;
  const auto obs = dense_observed(freq);

  const auto missing_loyal = [&](double shape, double mean, double users) {
    double missing = 0.0;
    for (std::uint64_t n = n0; n <= n_max; ++n) missing += std::max(0.0, users * nbd_pmf(shape, mean, n) - obs[n]);
    missing += users * nbd_survival(shape, mean, std::max(n0, n_max + 1));
    return missing;
  };

  if (deaths_per_user < 1e-3) {
    // Churn is not identifiable over this window; keep the plain fit.
    adj.skipped = true;
    adj.shape = adj.naive.shape;
    adj.mean = adj.naive.mean;
    adj.identities_per_user = -std::expm1(-adj.shape * std::log1p(adj.mean / adj.shape));
    adj.true_users = cookies / adj.identities_per_user;
    adj.missing_loyal = missing_loyal(adj.shape, adj.mean, adj.true_users);
    return adj;
  }

  const auto segments = simulate_segments(survival, mix, freq.window_hours, config.simulated_users, config.seed);
  const double segment_count = static_cast<double>(segments.size());

  // -2 log-likelihood of the observed identity counts, up to a constant.
  const auto deviance = [&](double shape, double mean) {
    const ChurnExpectation e = kernels::omp::churn_expectation(segments, shape, mean, n_max);
    const double visible = segment_count - e.frequency[0];
    double g2 = 0.0;
    for (std::uint64_t n = 1; n <= n_max; ++n) {
      if (obs[n] == 0.0) continue;
      const double expected = cookies * e.frequency[n] / visible;
      g2 += 2.0 * obs[n] * std::log(obs[n] / expected);
    }
    return g2;
  };
  const auto objective = [&](std::span<const double> x) {
    if (std::abs(x[0]) > 40.0 || std::abs(x[1]) > 40.0) return std::numeric_limits<double>::infinity();
    return deviance(std::exp(x[0]), std::exp(x[1]));
  };
  const SimplexResult best = nelder_mead(objective, {std::log(adj.naive.shape), std::log(adj.naive.mean)},
                                         {0.25, 0.25}, kFitTolerance, kMaxEvaluations);
  if (!best.converged) {
    throw Error(ErrorCode::kNoConvergence,
                "churn adjustment did not converge in " + std::to_string(best.evaluations) + " evaluations");
  }
  adj.shape = std::exp(best.x[0]);
  adj.mean = std::exp(best.x[1]);
  adj.deviance = best.value;
  adj.evaluations = best.evaluations;

  const ChurnExpectation e = kernels::omp::churn_expectation(segments, adj.shape, adj.mean, n_max);
  adj.identities_per_user = (segment_count - e.frequency[0]) / static_cast<double>(config.simulated_users);
  adj.true_users = cookies / adj.identities_per_user;
  adj.missing_loyal = missing_loyal(adj.shape, adj.mean, adj.true_users);
  return adj;
}

std::string_view fit_method_name(FitMethod method) {
  switch (method) {
    case FitMethod::kMoments: return "moments";
    case FitMethod::kTruncatedMle: return "truncated_mle";
    case FitMethod::kPoissonFallback: return "poisson_fallback";
  }
  return "unknown";
}

nlohmann::ordered_json nbd_to_json(const NbdModel& model) {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  doc["fit_method"] = fit_method_name(model.method);
  doc["shape"] = model.shape;
  doc["mean"] = model.mean;
  doc["log_likelihood"] = model.log_likelihood;
  doc["evaluations"] = model.evaluations;
  doc["gof"] = {{"chi_square", model.gof.chi_square}, {"dof", model.gof.dof}, {"p_value", model.gof.p_value}};
  return doc;
}

nlohmann::ordered_json churn_to_json(const ChurnAdjustment& adj) {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  doc["shape"] = adj.shape;
  doc["mean"] = adj.mean;
  doc["true_users"] = adj.true_users;
  doc["identities_per_user"] = adj.identities_per_user;
  doc["missing_loyal"] = adj.missing_loyal;
  doc["deviance"] = adj.deviance;
  doc["skipped"] = adj.skipped;
  doc["evaluations"] = adj.evaluations;
  doc["naive"] = nbd_to_json(adj.naive);
  return doc;
}

}  // namespace adlift
