#pragma once

// Seeded generators for every statistical object in the system. Each is a
// pure function of (spec, seed). Streams are documented in rng.hpp.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adlift/ingest.hpp"
#include "json.hpp"

namespace adlift {

struct FactorSpec {
  std::string name;
  std::vector<double> probs;        // level probabilities, sum to 1
  std::vector<double> effects;      // per-level log-odds shift; empty = none
  std::vector<std::string> labels;  // empty = "<name>_<k>"

  std::string label(std::size_t level) const;
};

struct RequestSpec {
  std::vector<FactorSpec> factors;
  double base_rate = 0.05;
  std::size_t count = 0;
};

struct PopulationSpec {
  double shape = 1.0;           // k
  double mean = 1.0;            // m, events per window
  std::size_t users = 0;        // U
  double window_hours = 168.0;  // T
  std::int64_t start_time = 0;  // epoch seconds, hour-aligned
};

struct BrowserSpec {
  std::string name;
  double tau_days = 0.0;  // +inf: cookies never die
  double share = 0.0;
};

struct ChurnSpec {
  std::vector<BrowserSpec> browsers;
};

struct Harmonic {
  double amplitude = 0.0;
  double period_hours = 24.0;
  double phase = 0.0;  // radians
};

// λ(t) = max(0, base + slope t + Σ a sin(2π t / P + φ)), t in hours.
struct IntensitySpec {
  double base = 0.0;
  double slope = 0.0;
  std::vector<Harmonic> harmonics;
  double hours = 168.0;
  std::int64_t start_time = 0;

  double at(double hour) const;
  // Bound on λ over [0, hours] used as the thinning envelope.
  double envelope() const;
};

struct SynthSpec {
  std::uint64_t seed = 42;
  std::optional<RequestSpec> requests;
  std::optional<PopulationSpec> population;
  std::optional<ChurnSpec> churn;
  std::optional<IntensitySpec> intensity;

  // Errors: kBadSpec.
  static SynthSpec from_json(const nlohmann::json& doc);
};

// Errors: kBadSpec.
void validate(const RequestSpec& spec);
void validate(const PopulationSpec& spec);
void validate(const ChurnSpec& spec);
void validate(const IntensitySpec& spec);

// Factors drawn independently; label ~ Bernoulli(logistic(logit(base) +
// Σ effects)). Levels enter the dictionary in first-seen order, as the parser
// would assign them.
ParsedRequests gen_requests(const RequestSpec& spec, std::uint64_t seed);

// Schema matching gen_requests output (factor names + "label").
Schema schema_for(const RequestSpec& spec);

struct Population {
  std::vector<double> rates;                     // λ_u, events per hour
  std::vector<std::vector<double>> event_times;  // epoch seconds, ascending
  std::vector<std::uint64_t> counts() const;
};

// λ_u ~ Gamma(k, mean m / T); events homogeneous Poisson over the window, or
// with shape given by `profile` when supplied (counts stay NBD(k, m)).
Population gen_gamma_poisson(const PopulationSpec& spec, std::uint64_t seed,
                             const IntensitySpec* profile = nullptr);

struct ChurnedEvents {
  std::vector<CookieEvent> events;             // sorted by timestamp, stable
  std::vector<std::uint64_t> identity_counts;  // events per cookie with >= 1 event
  std::vector<std::string> user_browser;       // browser of each user
};

// Each user's timeline is cut by exponential cookie deaths (mean tau of the
// user's browser); each piece gets a fresh cookie id "u<user>c<piece>".
ChurnedEvents apply_churn(const Population& population, const PopulationSpec& spec, const ChurnSpec& churn,
                          std::uint64_t seed);

// Event times (epoch seconds, ascending) by thinning against envelope().
std::vector<double> gen_inhomogeneous_poisson(const IntensitySpec& spec, std::uint64_t seed);

// ∫ λ over each hour of the spec's window (composite Simpson, 64 panels/hour).
std::vector<double> intensity_hourly_mass(const IntensitySpec& spec);

}  // namespace adlift
