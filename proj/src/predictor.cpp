#include "adlift/predictor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "adlift/error.hpp"
#include "adlift/kernels.hpp"

namespace adlift {

namespace {

constexpr int kModelVersion = 1;
constexpr std::string_view kChecksumPrefix = "checksum fnv1a64 ";

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

SparseRateModel SparseRateModel::assemble(FactorDictionary dictionary, std::vector<double> importance,
                                          std::vector<std::vector<double>> rates, double epsilon,
                                          double beta, double global_rate, MiParams mi_params) {
  SparseRateModel m;
  m.fingerprint_ = dictionary.fingerprint();
  m.dictionary_ = std::move(dictionary);
  m.importance_ = std::move(importance);
  m.epsilon_ = epsilon;
  m.beta_ = beta;
  m.global_rate_ = global_rate;
  m.mi_params_ = mi_params;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < m.importance_.size(); ++i) {
    m.offsets_.push_back(offset);
    offset += rates[i].size();
    if (m.importance_[i] > 0.0) m.active_.push_back(i);
  }
  m.offsets_.push_back(offset);
  m.rate_.reserve(offset);
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const double imp = m.importance_[i];
    for (double q : rates[i]) {
      const bool seen = !std::isnan(q);
      m.rate_.push_back(q);
      m.seen_.push_back(seen ? 1 : 0);
      m.weight_.push_back(seen ? imp : 0.0);
      m.weighted_rate_.push_back(seen ? imp * q : 0.0);
    }
  }
  return m;
}

double SparseRateModel::score_levels(std::span<const LevelId> levels, std::uint32_t& used) const {
  double weight = 0.0;
  double weighted = 0.0;
  double lo = 1.0;
  double hi = 0.0;
  std::uint32_t n = 0;
  for (const std::size_t i : active_) {
    const LevelId k = levels[i];
    const std::size_t begin = offsets_[i];
    if (k >= offsets_[i + 1] - begin) continue;
    const std::size_t at = begin + k;
    if (seen_[at] == 0) continue;
    weight += weight_[at];
    weighted += weighted_rate_[at];
    lo = std::min(lo, rate_[at]);
    hi = std::max(hi, rate_[at]);
    ++n;
  }
  used = n;
  if (n == 0) return global_rate_;
  // Rounding can step one ulp outside the hull of the combined rates.
  return std::clamp(weighted / weight, lo, hi);
}

SparseRateModel train(const FactorTable& table, const FactorDictionary& dictionary,
                      const ImportanceVector& importance, double epsilon, double beta) {
  const std::size_t m = table.factor_count();
  if (importance.size() != m || dictionary.factor_count() != m) {
    throw Error(ErrorCode::kDimensionMismatch, "table, dictionary and importance must share m");
  }
  if (importance.fingerprint != 0 && importance.fingerprint != dictionary.fingerprint()) {
    throw Error(ErrorCode::kFingerprintMismatch, "importance was computed on a different dictionary");
  }
  if (m == 0) throw Error(ErrorCode::kDimensionMismatch, "no factors to train on");
  if (!(beta > 0.0)) throw Error(ErrorCode::kDomainError, "beta must be positive");
  if (!(epsilon >= 0.0)) throw Error(ErrorCode::kDomainError, "epsilon must be non-negative");

  std::vector<double> kept(m);
  std::vector<std::vector<double>> rates(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (table.level_count(i) != dictionary.level_count(i)) {
      throw Error(ErrorCode::kDimensionMismatch, "level count of factor " + dictionary.factor_name(i));
    }
    kept[i] = importance.values[i] > epsilon ? importance.values[i] : 0.0;
    for (std::size_t k = 0; k < table.level_count(i); ++k) {
      const double n1 = static_cast<double>(table.count(i, k, 1));
      const double n = static_cast<double>(table.level_total(i, k));
      rates[i].push_back(n > 0.0 ? (n1 + beta) / (n + 2.0 * beta)
                                 : std::numeric_limits<double>::quiet_NaN());
    }
  }
  const double positives = static_cast<double>(table.label_total(0, 1));
  const double global = (positives + beta) / (static_cast<double>(table.total()) + 2.0 * beta);
  return SparseRateModel::assemble(dictionary, std::move(kept), std::move(rates), epsilon, beta, global,
                                   importance.params);
}

ScoredRequest score(const SparseRateModel& model, const RequestRecord& record,
                    std::uint64_t dictionary_fingerprint) {
  if (dictionary_fingerprint != model.fingerprint()) {
    throw Error(ErrorCode::kFingerprintMismatch, "request dictionary " + fingerprint_hex(dictionary_fingerprint) +
                                                     " differs from model " + fingerprint_hex(model.fingerprint()));
  }
  if (record.factors.size() != model.factor_count()) {
    throw Error(ErrorCode::kDimensionMismatch, "record has " + std::to_string(record.factors.size()) +
                                                   " factors, model has " + std::to_string(model.factor_count()));
  }
  ScoredRequest out;
  out.score = model.score_levels(record.factors, out.used_factors);
  return out;
}

BatchResult score_batch(const SparseRateModel& model, std::span<const RequestRecord> records,
                        std::uint64_t dictionary_fingerprint) {
  if (dictionary_fingerprint != model.fingerprint()) {
    throw Error(ErrorCode::kFingerprintMismatch, "request dictionary differs from model");
  }
  BatchResult result;
  result.scored.resize(records.size());
  const auto start = std::chrono::steady_clock::now();
  kernels::omp::score_batch(model, records, result.scored);
  const auto stop = std::chrono::steady_clock::now();
  result.seconds = std::chrono::duration<double>(stop - start).count();
  result.requests_per_second =
      result.seconds > 0.0 ? static_cast<double>(records.size()) / result.seconds : 0.0;
  for (const auto& s : result.scored) {
    if (s.used_factors == kInvalidRecord) {
      result.errors.push_back({s.index, "record " + std::to_string(s.index) + " has " +
                                            std::to_string(records[s.index].factors.size()) +
                                            " factors, model has " + std::to_string(model.factor_count())});
    }
  }
  return result;
}

PacingState make_pacing_state(std::uint64_t target_total, std::uint64_t horizon_requests,
                              double initial_threshold, PacingConfig config) {
  if (config.block_size == 0) throw Error(ErrorCode::kDomainError, "pacing block size must be positive");
  PacingState s;
  s.target_total = target_total;
  s.horizon_requests = horizon_requests;
  s.threshold = std::clamp(initial_threshold, 0.0, 1.0);
  s.config = config;
  return s;
}

Decision pace(PacingState& state, const ScoredRequest& scored) {
  const bool show = state.shown_so_far < state.target_total && scored.score >= state.threshold;
  ++state.seen;
  ++state.block_seen;
  if (show) {
    ++state.shown_so_far;
    ++state.block_shown;
  }
  if (state.block_seen == state.config.block_size) {
    // Pace that would exhaust the remaining target exactly at the horizon.
    const double remaining_target = static_cast<double>(state.target_total - state.shown_so_far);
    const double remaining_requests =
        state.horizon_requests > state.seen ? static_cast<double>(state.horizon_requests - state.seen) : 0.0;
    if (remaining_requests > 0.0) {
      const double wanted = remaining_target / remaining_requests * static_cast<double>(state.block_seen);
      const double ratio = (static_cast<double>(state.block_shown) + 1.0) / (wanted + 1.0);
      state.threshold = std::clamp(state.threshold * std::pow(ratio, state.config.gamma), 0.0, 1.0);
    }
    state.block_seen = 0;
    state.block_shown = 0;
  }
  return show ? Decision::kShow : Decision::kSkip;
}

std::string serialize_model(const SparseRateModel& model) {
  nlohmann::ordered_json doc;
  doc["version"] = kModelVersion;
  doc["method"] = model.mi_params().method == MiMethod::kShannon ? "shannon" : "renyi";
  if (model.mi_params().method == MiMethod::kRenyi) doc["alpha"] = model.mi_params().alpha;
  doc["epsilon"] = model.epsilon();
  doc["beta"] = model.beta();
  doc["global_rate"] = model.global_rate();
  doc["degenerate"] = model.degenerate();
  doc["fingerprint"] = fingerprint_hex(model.fingerprint());
  auto factors = nlohmann::ordered_json::array();
  const auto& dict = model.dictionary();
  for (std::size_t i = 0; i < model.factor_count(); ++i) {
    nlohmann::ordered_json f;
    f["name"] = dict.factor_name(i);
    f["importance"] = model.importance(i);
    nlohmann::ordered_json levels = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < dict.level_count(i); ++k) {
      const auto level = static_cast<LevelId>(k);
      const std::string& label = dict.level_label(i, level);
      if (model.level_seen(i, level)) {
        levels[label] = model.rate(i, level);
      } else {
        levels[label] = nullptr;
      }
    }
    f["levels"] = std::move(levels);
    factors.push_back(std::move(f));
  }
  doc["factors"] = std::move(factors);
  std::string text = doc.dump(2);
  text.push_back('\n');
  const std::uint64_t sum = fnv1a(text);
  text += kChecksumPrefix;
  text += fingerprint_hex(sum);
  text.push_back('\n');
  return text;
}

void save_model(const std::string& path, const SparseRateModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path + "'");
  out << serialize_model(model);
  if (!out) throw Error(ErrorCode::kIoError, "write failed for '" + path + "'");
}

SparseRateModel deserialize_model(std::string_view text) {
  // Last non-empty line is the checksum.
  std::string_view trimmed = text;
  while (!trimmed.empty() && (trimmed.back() == '\n' || trimmed.back() == '\r')) trimmed.remove_suffix(1);
  const std::size_t nl = trimmed.rfind('\n');
  if (nl == std::string_view::npos) throw Error(ErrorCode::kCorruptFile, "model file has no checksum line");
  const std::string_view body = text.substr(0, nl + 1);
  const std::string_view check = trimmed.substr(nl + 1);
  if (check.substr(0, kChecksumPrefix.size()) != kChecksumPrefix) {
    throw Error(ErrorCode::kCorruptFile, "model file has no checksum line");
  }
  std::uint64_t expected = 0;
  try {
    expected = parse_fingerprint_hex(check.substr(kChecksumPrefix.size()));
  } catch (const Error&) {
    throw Error(ErrorCode::kCorruptFile, "malformed checksum line");
  }
  if (fnv1a(body) != expected) throw Error(ErrorCode::kCorruptFile, "model checksum mismatch");

  try {
    const auto doc = nlohmann::ordered_json::parse(body);
    if (doc.at("version").get<int>() != kModelVersion) {
      throw Error(ErrorCode::kVersionMismatch, "model version " + doc.at("version").dump() + " not supported");
    }
    MiParams params;
    params.method = doc.at("method").get<std::string>() == "renyi" ? MiMethod::kRenyi : MiMethod::kShannon;
    if (params.method == MiMethod::kRenyi) params.alpha = doc.at("alpha").get<double>();
    std::vector<std::string> names;
    for (const auto& f : doc.at("factors")) names.push_back(f.at("name").get<std::string>());
    FactorDictionary dict(names);
    std::vector<double> importance;
    std::vector<std::vector<double>> rates;
    std::size_t i = 0;
    for (const auto& f : doc.at("factors")) {
      importance.push_back(f.at("importance").get<double>());
      auto& r = rates.emplace_back();
      for (const auto& [label, q] : f.at("levels").items()) {
        dict.intern(i, label);
        r.push_back(q.is_null() ? std::numeric_limits<double>::quiet_NaN() : q.get<double>());
      }
      ++i;
    }
    auto model = SparseRateModel::assemble(std::move(dict), std::move(importance), std::move(rates),
                                           doc.at("epsilon").get<double>(), doc.at("beta").get<double>(),
                                           doc.at("global_rate").get<double>(), params);
    if (fingerprint_hex(model.fingerprint()) != doc.at("fingerprint").get<std::string>()) {
      throw Error(ErrorCode::kCorruptFile, "model fingerprint does not match its levels");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("model document: ") + e.what());
  }
}

SparseRateModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace adlift
