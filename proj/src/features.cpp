#include "adlift/features.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "adlift/error.hpp"
#include "adlift/kernels.hpp"

namespace adlift {

namespace {

void require_populated(const FactorTable& table, std::size_t factor) {
  if (factor >= table.factor_count()) {
    throw Error(ErrorCode::kDimensionMismatch, "factor index " + std::to_string(factor) + " out of range");
  }
  if (table.total() == 0) throw Error(ErrorCode::kEmptyTable, "table has no records");
}

// n_ks * N / (n_k* n_*s): the joint-to-product ratio of a populated cell.
double cell_ratio(double n_ks, double total, double n_k, double n_s) {
  return (n_ks * total) / (n_k * n_s);
}

const char* method_name(MiMethod m) { return m == MiMethod::kShannon ? "shannon" : "renyi"; }

}  // namespace

double shannon_mi(const FactorTable& table, std::size_t factor) {
  require_populated(table, factor);
  const double total = static_cast<double>(table.total());
  const double n_s[2] = {static_cast<double>(table.label_total(factor, 0)),
                         static_cast<double>(table.label_total(factor, 1))};
  double acc = 0.0;
  for (std::size_t k = 0; k < table.level_count(factor); ++k) {
    const double n_k = static_cast<double>(table.level_total(factor, k));
    for (int s = 0; s < 2; ++s) {
      const double n_ks = static_cast<double>(table.count(factor, k, s));
      if (n_ks == 0.0) continue;
      acc += n_ks * std::log2(cell_ratio(n_ks, total, n_k, n_s[s]));
    }
  }
  // Rounding can leave a tiny negative residue on near-independent tables.
  return std::max(0.0, acc / total);
}

double renyi_mi(const FactorTable& table, std::size_t factor, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw Error(ErrorCode::kBadAlpha, "alpha must be a positive finite number");
  }
  require_populated(table, factor);
  if (alpha == 1.0) return shannon_mi(table, factor);

  const double total = static_cast<double>(table.total());
  const double n_s[2] = {static_cast<double>(table.label_total(factor, 0)),
                         static_cast<double>(table.label_total(factor, 1))};
  const double power = alpha - 1.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < table.level_count(factor); ++k) {
    const double n_k = static_cast<double>(table.level_total(factor, k));
    if (n_k == 0.0) continue;
    for (int s = 0; s < 2; ++s) {
      if (n_s[s] == 0.0) continue;
      const double n_ks = static_cast<double>(table.count(factor, k, s));
      if (n_ks == 0.0) {
        if (alpha < 1.0) {
          throw Error(ErrorCode::kZeroCellAtSmallAlpha,
                      "empty cell (level " + std::to_string(k) + ", label " + std::to_string(s) +
                          ") with alpha < 1");
        }
        continue;
      }
      acc += n_ks * std::pow(cell_ratio(n_ks, total, n_k, n_s[s]), power);
    }
  }
  const double value = std::log2(acc / total) / power;
  return std::max(0.0, value);
}

std::vector<std::size_t> ranking_of(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return order;
}

ImportanceVector rank_factors(const FactorTable& table, const MiParams& params,
                              std::span<const std::string> factor_names, std::uint64_t fingerprint) {
  const std::size_t m = table.factor_count();
  if (!factor_names.empty() && factor_names.size() != m) {
    throw Error(ErrorCode::kDimensionMismatch, "factor name count differs from table");
  }
  if (table.total() == 0) throw Error(ErrorCode::kEmptyTable, "table has no records");
  if (params.method == MiMethod::kRenyi && !(params.alpha > 0.0)) {
    throw Error(ErrorCode::kBadAlpha, "alpha must be positive");
  }

  ImportanceVector imp;
  imp.params = params;
  imp.values.assign(m, 0.0);
  imp.fingerprint = fingerprint;
  for (std::size_t i = 0; i < m; ++i) {
    imp.factor_names.push_back(factor_names.empty() ? "f" + std::to_string(i + 1) : factor_names[i]);
  }

  std::vector<std::exception_ptr> failures(m);
  const int threads = thread_count();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    const auto f = static_cast<std::size_t>(i);
    try {
      imp.values[f] = params.method == MiMethod::kShannon ? shannon_mi(table, f)
                                                          : renyi_mi(table, f, params.alpha);
    } catch (...) {
      failures[f] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!failures[i]) continue;
    try {
      std::rethrow_exception(failures[i]);
    } catch (const Error& e) {
      throw Error(e.code(), "factor '" + imp.factor_names[i] + "': " + e.what());
    }
  }
  imp.ranking = ranking_of(imp.values);
  return imp;
}

nlohmann::ordered_json importance_to_json(const ImportanceVector& imp) {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  doc["method"] = method_name(imp.params.method);
  if (imp.params.method == MiMethod::kRenyi) doc["alpha"] = imp.params.alpha;
  doc["fingerprint"] = fingerprint_hex(imp.fingerprint);
  std::vector<std::size_t> rank_of(imp.size());
  for (std::size_t r = 0; r < imp.ranking.size(); ++r) rank_of[imp.ranking[r]] = r + 1;
  auto factors = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < imp.size(); ++i) {
    nlohmann::ordered_json f;
    f["factor"] = imp.factor_names[i];
    f["value"] = imp.values[i];
    f["rank"] = rank_of[i];
    factors.push_back(std::move(f));
  }
  doc["factors"] = std::move(factors);
  return doc;
}

ImportanceVector importance_from_json(const nlohmann::json& doc) {
  ImportanceVector imp;
  try {
    if (doc.at("version").get<int>() != 1) throw Error(ErrorCode::kVersionMismatch, "importance version must be 1");
    const auto method = doc.at("method").get<std::string>();
    if (method == "shannon") {
      imp.params.method = MiMethod::kShannon;
    } else if (method == "renyi") {
      imp.params.method = MiMethod::kRenyi;
      imp.params.alpha = doc.value("alpha", kDefaultRenyiAlpha);
    } else {
      throw Error(ErrorCode::kCorruptFile, "unknown importance method '" + method + "'");
    }
    imp.fingerprint = parse_fingerprint_hex(doc.at("fingerprint").get<std::string>());
    for (const auto& f : doc.at("factors")) {
      imp.factor_names.push_back(f.at("factor").get<std::string>());
      imp.values.push_back(f.at("value").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("importance document: ") + e.what());
  }
  imp.ranking = ranking_of(imp.values);
  return imp;
}

double weighted_hamming(std::span<const LevelId> x, std::span<const LevelId> y,
                        const SimilarityWeights& weights) {
  if (x.size() != y.size() || x.size() != weights.w.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "records and weights must have the same length");
  }
  double d = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] != y[j]) d += weights.w[j];
  }
  return d;
}

SimilarityWeights weights_from_importance(const ImportanceVector& imp, double floor) {
  if (!(floor > 0.0)) throw Error(ErrorCode::kDomainError, "weight floor must be positive");
  SimilarityWeights w;
  w.w.reserve(imp.size());
  for (double v : imp.values) w.w.push_back(std::max(v, floor));
  return w;
}

}  // namespace adlift
