#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "adlift/ingest.hpp"
#include "json.hpp"

namespace adlift {

enum class MiMethod { kShannon, kRenyi };

inline constexpr double kDefaultRenyiAlpha = 2.0;

struct MiParams {
  MiMethod method = MiMethod::kShannon;
  double alpha = kDefaultRenyiAlpha;  // used by kRenyi only
};

// Per-factor relative influence, in bits, with a descending ranking.
struct ImportanceVector {
  MiParams params;
  std::vector<double> values;
  std::vector<std::size_t> ranking;  // factor indices, ties by ascending index
  std::vector<std::string> factor_names;
  std::uint64_t fingerprint = 0;     // dictionary the table was built with

  std::size_t size() const { return values.size(); }
};

// Shannon mutual information between a factor and the binary label, with
// 0 log 0 = 0. Errors: kEmptyTable.
double shannon_mi(const FactorTable& table, std::size_t factor);

// Order-alpha Rényi mutual information
//   (1 / (alpha - 1)) log2 Σ_k Σ_s p_ks^alpha / (p_k*^(alpha-1) p_*s^(alpha-1)),
// which is zero under empirical independence and tends to shannon_mi as
// alpha -> 1 (alpha == 1 dispatches to it). Errors: kEmptyTable, kBadAlpha,
// kZeroCellAtSmallAlpha (alpha < 1 with an empty cell in a populated row).
double renyi_mi(const FactorTable& table, std::size_t factor, double alpha);

// Computes the chosen statistic for every factor, in parallel across factors.
// Per-factor errors are rethrown with the factor name attached.
ImportanceVector rank_factors(const FactorTable& table, const MiParams& params,
                              std::span<const std::string> factor_names = {},
                              std::uint64_t fingerprint = 0);

// Sorts indices by descending value, ties by ascending index.
std::vector<std::size_t> ranking_of(std::span<const double> values);

nlohmann::ordered_json importance_to_json(const ImportanceVector& imp);
ImportanceVector importance_from_json(const nlohmann::json& doc);

struct SimilarityWeights {
  std::vector<double> w;
};

// Σ_{j : x_j != y_j} w_j. Errors: kDimensionMismatch.
double weighted_hamming(std::span<const LevelId> x, std::span<const LevelId> y,
                        const SimilarityWeights& weights);
inline double weighted_hamming(const RequestRecord& x, const RequestRecord& y,
                               const SimilarityWeights& weights) {
  return weighted_hamming(x.factors, y.factors, weights);
}

// w_j = max(I_j, floor). Errors: kDomainError when floor <= 0.
SimilarityWeights weights_from_importance(const ImportanceVector& imp, double floor);

}  // namespace adlift
