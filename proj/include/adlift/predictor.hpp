#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "adlift/features.hpp"
#include "adlift/ingest.hpp"

namespace adlift {

inline constexpr double kDefaultEpsilon = 0.01;  // bits
inline constexpr double kDefaultBeta = 0.5;

// Trained MI-weighted rate estimator
//
//   p(X) = Σ_i I_i q_{i,k_i} / Σ_i I_i
//
// over factors whose importance survived the epsilon threshold and whose level
// had training data. q_{i,k} are add-beta smoothed level rates. Immutable once
// built; scoring is read-only and safe from any number of threads.
class SparseRateModel {
 public:
  std::size_t factor_count() const { return importance_.size(); }
  const FactorDictionary& dictionary() const { return dictionary_; }
  std::uint64_t fingerprint() const { return fingerprint_; }

  double importance(std::size_t factor) const { return importance_[factor]; }
  std::span<const double> importances() const { return importance_; }
  // Factors with I_i > 0, ascending.
  std::span<const std::size_t> active_factors() const { return active_; }

  bool level_seen(std::size_t factor, LevelId level) const {
    return level < dictionary_.level_count(factor) && seen_[offsets_[factor] + level] != 0;
  }
  // Smoothed rate; NaN for a level without training data.
  double rate(std::size_t factor, LevelId level) const { return rate_[offsets_[factor] + level]; }

  double epsilon() const { return epsilon_; }
  double beta() const { return beta_; }
  double global_rate() const { return global_rate_; }
  const MiParams& mi_params() const { return mi_params_; }
  // Every factor was pruned; scores fall back to global_rate.
  bool degenerate() const { return active_.empty(); }

  // Hot path used by the scoring kernels. Returns the score and writes the
  // number of contributing factors. No validation.
  double score_levels(std::span<const LevelId> levels, std::uint32_t& used) const;

  // Layout assembly, used by train() and load_model().
  static SparseRateModel assemble(FactorDictionary dictionary, std::vector<double> importance,
                                  std::vector<std::vector<double>> rates, double epsilon,
                                  double beta, double global_rate, MiParams mi_params);

 private:
  FactorDictionary dictionary_;
  std::uint64_t fingerprint_ = 0;
  std::vector<double> importance_;
  std::vector<std::size_t> active_;
  std::vector<std::size_t> offsets_;
  std::vector<double> rate_;
  std::vector<double> weight_;         // I_i for seen levels, 0 otherwise
  std::vector<double> weighted_rate_;  // I_i * q_{i,k}
  std::vector<std::uint8_t> seen_;
  double epsilon_ = kDefaultEpsilon;
  double beta_ = kDefaultBeta;
  double global_rate_ = 0.0;
  MiParams mi_params_;
};

// q_{i,k} = (n_k1 + beta) / (n_k + 2 beta); I_i zeroed where I_i <= epsilon.
// Levels with no training records are marked unseen. When every factor is
// pruned the returned model is degenerate() (scores == global_rate).
// Errors: kDimensionMismatch, kDomainError (beta <= 0 or epsilon < 0).
SparseRateModel train(const FactorTable& table, const FactorDictionary& dictionary,
                      const ImportanceVector& importance, double epsilon = kDefaultEpsilon,
                      double beta = kDefaultBeta);

inline constexpr std::uint32_t kInvalidRecord = std::numeric_limits<std::uint32_t>::max();

struct ScoredRequest {
  std::size_t index = 0;       // position in the scored stream
  double score = 0.0;
  std::uint32_t used_factors = 0;  // kInvalidRecord when the record was rejected
};

// Errors: kFingerprintMismatch, kDimensionMismatch.
ScoredRequest score(const SparseRateModel& model, const RequestRecord& record,
                    std::uint64_t dictionary_fingerprint);

struct RecordError {
  std::size_t index;
  std::string message;
};

struct BatchResult {
  std::vector<ScoredRequest> scored;  // input order; rejected records included
  std::vector<RecordError> errors;
  double seconds = 0.0;
  double requests_per_second = 0.0;
};

// Element-wise score on the OpenMP kernel. A fingerprint mismatch is fatal;
// malformed records are reported in `errors`.
BatchResult score_batch(const SparseRateModel& model, std::span<const RequestRecord> records,
                        std::uint64_t dictionary_fingerprint);

enum class Decision { kSkip, kShow };

struct PacingConfig {
  std::uint64_t block_size = 1000;
  double gamma = 0.5;
};

// Impression pacing toward a fixed total. Confined to one decision thread.
struct PacingState {
  std::uint64_t target_total = 0;
  std::uint64_t horizon_requests = 0;
  double threshold = 0.0;
  std::uint64_t shown_so_far = 0;
  std::uint64_t seen = 0;
  std::uint64_t block_seen = 0;
  std::uint64_t block_shown = 0;
  PacingConfig config;
};

PacingState make_pacing_state(std::uint64_t target_total, std::uint64_t horizon_requests,
                              double initial_threshold, PacingConfig config = {});

// Shows iff score >= threshold and the target is not yet met. After every
// block the threshold is rescaled by ((shown + 1) / (wanted + 1))^gamma,
// where `wanted` is the block share of the remaining target over the
// remaining horizon, and clamped to [0, 1].
Decision pace(PacingState& state, const ScoredRequest& scored);

// Model file: JSON document followed by a line `checksum fnv1a64 <hex>`.
void save_model(const std::string& path, const SparseRateModel& model);
std::string serialize_model(const SparseRateModel& model);
// Errors: kIoError, kCorruptFile, kVersionMismatch.
SparseRateModel load_model(const std::string& path);
SparseRateModel deserialize_model(std::string_view text);

}  // namespace adlift
