#include "adlift/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "adlift/error.hpp"
#include "adlift/rng.hpp"

namespace adlift {

namespace {

// Stream tags keep the generators of one seed independent of each other.
constexpr std::uint64_t kRequestTag = 0x7265717565737473ULL;
constexpr std::uint64_t kPopulationTag = 0x706f70756c617465ULL;
constexpr std::uint64_t kChurnTag = 0x636875726e636875ULL;
constexpr std::uint64_t kIntensityTag = 0x696e74656e736974ULL;

// Above this shape the Gamma mixing is replaced by its mean (Poisson limit).
constexpr double kPoissonLimitShape = 1e8;

std::size_t draw_categorical(Rng& rng, std::span<const double> cumulative) {
  const double u = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

std::vector<double> cumulative_of(std::span<const double> weights) {
  std::vector<double> c(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) c[i] = acc += weights[i];
  return c;
}

void bad(const std::string& what) { throw Error(ErrorCode::kBadSpec, what); }

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

std::string FactorSpec::label(std::size_t level) const {
  return labels.empty() ? name + "_" + std::to_string(level) : labels[level];
}

double IntensitySpec::at(double hour) const {
  double v = base + slope * hour;
  for (const auto& h : harmonics) v += h.amplitude * std::sin(2.0 * std::numbers::pi * hour / h.period_hours + h.phase);
  return std::max(0.0, v);
}

double IntensitySpec::envelope() const {
  double bound = std::max(base, base + slope * hours);
  for (const auto& h : harmonics) bound += std::abs(h.amplitude);
  return std::max(0.0, bound);
}

void validate(const RequestSpec& spec) {
  if (spec.factors.empty()) bad("request spec needs at least one factor");
  if (!(spec.base_rate > 0.0 && spec.base_rate < 1.0)) bad("base_rate must lie in (0, 1)");
  for (const auto& f : spec.factors) {
    if (f.name.empty()) bad("factor without a name");
    if (f.probs.empty()) bad("factor '" + f.name + "' has no levels");
    double sum = 0.0;
    for (double p : f.probs) {
      if (!(p >= 0.0)) bad("factor '" + f.name + "' has a negative probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) bad("probabilities of factor '" + f.name + "' do not sum to 1");
    if (!f.effects.empty() && f.effects.size() != f.probs.size()) bad("effects of '" + f.name + "' mismatch levels");
    if (!f.labels.empty() && f.labels.size() != f.probs.size()) bad("labels of '" + f.name + "' mismatch levels");
    for (double e : f.effects) {
      if (!std::isfinite(e)) bad("non-finite effect in '" + f.name + "'");
    }
  }
}

void validate(const PopulationSpec& spec) {
  if (!(spec.shape > 0.0)) bad("population shape k must be positive");
  if (!(spec.mean > 0.0)) bad("population mean m must be positive");
  if (spec.users == 0) bad("population needs users");
  if (!(spec.window_hours > 0.0)) bad("window must be positive");
}

void validate(const ChurnSpec& spec) {
  if (spec.browsers.empty()) bad("churn spec needs browsers");
  double total = 0.0;
  for (const auto& b : spec.browsers) {
    if (!(b.tau_days > 0.0)) bad("browser '" + b.name + "' needs tau_days > 0");
    if (!(b.share >= 0.0)) bad("browser '" + b.name + "' has a negative share");
    total += b.share;
  }
  if (!(total > 0.0)) bad("browser shares sum to zero");
}

void validate(const IntensitySpec& spec) {
  if (!(spec.hours > 0.0)) bad("intensity window must be positive");
  if (!std::isfinite(spec.base) || !std::isfinite(spec.slope)) bad("intensity coefficients must be finite");
  for (const auto& h : spec.harmonics) {
    if (!(h.period_hours > 0.0) || !std::isfinite(h.amplitude) || !std::isfinite(h.phase)) bad("bad harmonic");
  }
}

SynthSpec SynthSpec::from_json(const nlohmann::json& doc) {
  SynthSpec s;
  try {
    s.seed = get_or<std::uint64_t>(doc, "seed", 42);
    if (doc.contains("requests")) {
      const auto& r = doc.at("requests");
      RequestSpec rs;
      rs.count = r.at("count").get<std::size_t>();
      rs.base_rate = get_or<double>(r, "base_rate", 0.05);
      for (const auto& f : r.at("factors")) {
        FactorSpec fs;
        fs.name = f.at("name").get<std::string>();
        fs.probs = f.at("probs").get<std::vector<double>>();
        fs.effects = get_or<std::vector<double>>(f, "effects", {});
        fs.labels = get_or<std::vector<std::string>>(f, "labels", {});
        rs.factors.push_back(std::move(fs));
      }
      validate(rs);
      s.requests = std::move(rs);
    }
    if (doc.contains("population")) {
      const auto& p = doc.at("population");
      PopulationSpec ps;
      ps.shape = p.at("shape").get<double>();
      ps.mean = p.at("mean").get<double>();
      ps.users = p.at("users").get<std::size_t>();
      ps.window_hours = get_or<double>(p, "window_hours", 168.0);
      ps.start_time = get_or<std::int64_t>(p, "start_time", 0);
      validate(ps);
      s.population = ps;
    }
    if (doc.contains("churn")) {
      ChurnSpec cs;
      for (const auto& b : doc.at("churn").at("browsers")) {
        BrowserSpec bs;
        bs.name = b.at("name").get<std::string>();
        bs.tau_days = b.at("tau_days").is_string() && b.at("tau_days").get<std::string>() == "inf"
                          ? std::numeric_limits<double>::infinity()
                          : b.at("tau_days").get<double>();
        bs.share = b.at("share").get<double>();
        cs.browsers.push_back(std::move(bs));
      }
      validate(cs);
      s.churn = std::move(cs);
    }
    if (doc.contains("intensity")) {
      const auto& i = doc.at("intensity");
      IntensitySpec is;
      is.base = get_or<double>(i, "base", 0.0);
      is.slope = get_or<double>(i, "slope", 0.0);
      is.hours = get_or<double>(i, "hours", s.population ? s.population->window_hours : 168.0);
      is.start_time = get_or<std::int64_t>(i, "start_time", s.population ? s.population->start_time : 0);
      for (const auto& h : get_or<nlohmann::json>(i, "harmonics", nlohmann::json::array())) {
        is.harmonics.push_back({h.at("amplitude").get<double>(), h.at("period_hours").get<double>(),
                                get_or<double>(h, "phase", 0.0)});
      }
      validate(is);
      s.intensity = std::move(is);
    }
  } catch (const nlohmann::json::exception& e) {
    bad(std::string("synth spec: ") + e.what());
  }
  return s;
}

Schema schema_for(const RequestSpec& spec) {
  Schema s;
  for (const auto& f : spec.factors) s.factor_columns.push_back(f.name);
  s.label_column = "label";
  return s;
}

ParsedRequests gen_requests(const RequestSpec& spec, std::uint64_t seed) {
  validate(spec);
  const std::size_t m = spec.factors.size();
  std::vector<std::vector<double>> cumulative;
  std::vector<std::string> names;
  for (const auto& f : spec.factors) {
    cumulative.push_back(cumulative_of(f.probs));
    names.push_back(f.name);
  }
  const double base_logit = std::log(spec.base_rate / (1.0 - spec.base_rate));

  ParsedRequests out{FactorDictionary(names), {}};
  out.records.reserve(spec.count);
  // Generator level index -> dictionary id, filled on first sight.
  std::vector<std::vector<LevelId>> ids(m);
  for (std::size_t i = 0; i < m; ++i) ids[i].assign(spec.factors[i].probs.size(), kUnseenLevel);

  Rng rng(splitmix64(seed ^ kRequestTag));
  for (std::size_t r = 0; r < spec.count; ++r) {
    RequestRecord rec;
    rec.factors.resize(m);
    double logit = base_logit;
    for (std::size_t i = 0; i < m; ++i) {
      const auto& f = spec.factors[i];
      const std::size_t level = draw_categorical(rng, cumulative[i]);
      if (!f.effects.empty()) logit += f.effects[level];
      if (ids[i][level] == kUnseenLevel) ids[i][level] = out.dictionary.intern(i, f.label(level));
      rec.factors[i] = ids[i][level];
    }
    const double p = 1.0 / (1.0 + std::exp(-logit));
    rec.label = rng.bernoulli(p) ? 1 : 0;
    out.records.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::uint64_t> Population::counts() const {
  std::vector<std::uint64_t> c;
  c.reserve(event_times.size());
  for (const auto& e : event_times) c.push_back(e.size());
  return c;
}

Population gen_gamma_poisson(const PopulationSpec& spec, std::uint64_t seed, const IntensitySpec* profile) {
  validate(spec);
  if (profile != nullptr) {
    validate(*profile);
    if (!(profile->envelope() > 0.0)) bad("intensity profile is identically zero");
  }
  const double hours = spec.window_hours;
  const double origin = static_cast<double>(spec.start_time);
  const double scale = spec.mean / (spec.shape * hours);  // Gamma scale for λ per hour

  Population pop;
  pop.rates.resize(spec.users);
  pop.event_times.resize(spec.users);
  for (std::size_t u = 0; u < spec.users; ++u) {
    Rng rng = Rng::derive(seed ^ kPopulationTag, u);
    const double lambda = spec.shape > kPoissonLimitShape ? spec.mean / hours : rng.gamma(spec.shape) * scale;
    pop.rates[u] = lambda;
    const std::uint64_t n = rng.poisson(lambda * hours);
    auto& times = pop.event_times[u];
    times.reserve(n);
    for (std::uint64_t j = 0; j < n; ++j) {
      double t;
      if (profile == nullptr) {
        t = rng.uniform() * hours;
      } else {
        const double bound = profile->envelope();
        do {
          t = rng.uniform() * hours;
        } while (rng.uniform() * bound >= profile->at(t));
      }
      times.push_back(origin + t * 3600.0);
    }
    std::sort(times.begin(), times.end());
  }
  return pop;
}

ChurnedEvents apply_churn(const Population& population, const PopulationSpec& spec, const ChurnSpec& churn,
                          std::uint64_t seed) {
  validate(churn);
  std::vector<double> shares;
  for (const auto& b : churn.browsers) shares.push_back(b.share);
  const auto cumulative = cumulative_of(shares);
  const double origin = static_cast<double>(spec.start_time);
  const double end = origin + spec.window_hours * 3600.0;

  ChurnedEvents out;
  out.user_browser.reserve(population.event_times.size());
  for (std::size_t u = 0; u < population.event_times.size(); ++u) {
    Rng rng = Rng::derive(seed ^ kChurnTag, u);
    const auto& browser = churn.browsers[draw_categorical(rng, cumulative)];
    out.user_browser.push_back(browser.name);
    const double mean_life = browser.tau_days * 86400.0;
    double next_death = std::isinf(mean_life) ? end : origin + rng.exponential() * mean_life;
    std::size_t piece = 0;
    std::uint64_t in_piece = 0;
    for (double t : population.event_times[u]) {
      if (t >= next_death) {
        // Deaths inside an event-free gap leave no cookie behind; by
        // memorylessness the next death can be drawn from t.
        if (in_piece > 0) out.identity_counts.push_back(in_piece);
        in_piece = 0;
        ++piece;
        next_death = t + rng.exponential() * mean_life;
      }
      out.events.push_back({"u" + std::to_string(u) + "c" + std::to_string(piece), browser.name,
                            static_cast<std::int64_t>(std::floor(t))});
      ++in_piece;
    }
    if (in_piece > 0) out.identity_counts.push_back(in_piece);
  }
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const CookieEvent& a, const CookieEvent& b) { return a.timestamp < b.timestamp; });
  return out;
}

std::vector<double> gen_inhomogeneous_poisson(const IntensitySpec& spec, std::uint64_t seed) {
  validate(spec);
  std::vector<double> times;
  const double bound = spec.envelope();
  if (!(bound > 0.0)) return times;
  const double origin = static_cast<double>(spec.start_time);
  Rng rng(splitmix64(seed ^ kIntensityTag));
  double t = 0.0;
  for (;;) {
    t += rng.exponential() / bound;
    if (t >= spec.hours) break;
    if (rng.uniform() * bound < spec.at(t)) times.push_back(origin + t * 3600.0);
  }
  return times;
}

std::vector<double> intensity_hourly_mass(const IntensitySpec& spec) {
  validate(spec);
  constexpr int kPanels = 64;  // even
  const auto hours = static_cast<std::size_t>(std::ceil(spec.hours));
  std::vector<double> mass(hours, 0.0);
  for (std::size_t h = 0; h < hours; ++h) {
    const double a = static_cast<double>(h);
    const double b = std::min(spec.hours, a + 1.0);
    const double step = (b - a) / kPanels;
    double s = spec.at(a) + spec.at(b);
    for (int j = 1; j < kPanels; ++j) s += (j % 2 == 1 ? 4.0 : 2.0) * spec.at(a + j * step);
    mass[h] = s * step / 3.0;
  }
  return mass;
}

}  // namespace adlift
