#include "adlift/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "adlift/error.hpp"
#include "adlift/predictor.hpp"

namespace adlift {

namespace {

int g_threads = 0;  // 0: OpenMP default

std::vector<std::size_t> level_counts_of(const FactorDictionary& dictionary) {
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < dictionary.factor_count(); ++i) counts.push_back(dictionary.level_count(i));
  return counts;
}

void count_factor(std::span<const RequestRecord> records, std::size_t factor, FactorTable& table) {
  auto row = table.factor_counts(factor);
  for (const auto& rec : records) row[2 * rec.factors[factor] + rec.label] += 1;
}

void score_one(const SparseRateModel& model, std::span<const RequestRecord> records, std::size_t i,
               ScoredRequest& out) {
  out.index = i;
  const auto& rec = records[i];
  if (rec.factors.size() != model.factor_count()) {
    out.score = std::numeric_limits<double>::quiet_NaN();
    out.used_factors = kInvalidRecord;
    return;
  }
  out.score = model.score_levels(rec.factors, out.used_factors);
}

// Accumulates the NBD pmf of every segment in [begin, end) into `freq`
// (n = 0..n_max) and the remaining mass into `tail`.
void churn_block(std::span<const double> fractions, std::size_t begin, std::size_t end, double shape,
                 double mean, std::size_t n_max, double* freq, double& tail) {
  for (std::size_t j = begin; j < end; ++j) {
    const double mu = mean * fractions[j];
    if (!(mu > 0.0)) {
      freq[0] += 1.0;
      continue;
    }
    const double r = mu / (shape + mu);
    double p = std::exp(-shape * std::log1p(mu / shape));
    double cdf = p;
    freq[0] += p;
    for (std::size_t n = 1; n <= n_max; ++n) {
      p *= (shape + static_cast<double>(n - 1)) / static_cast<double>(n) * r;
      freq[n] += p;
      cdf += p;
    }
    tail += std::max(0.0, 1.0 - cdf);
  }
}

void check_churn_args(double shape, double mean) {
  if (!(shape > 0.0) || !(mean >= 0.0) || !std::isfinite(shape) || !std::isfinite(mean)) {
    throw Error(ErrorCode::kDomainError, "churn expectation needs shape > 0 and mean >= 0");
  }
}

ChurnExpectation combine_blocks(const std::vector<double>& partial, const std::vector<double>& tails,
                                std::size_t n_max) {
  ChurnExpectation out;
  out.frequency.assign(n_max + 1, 0.0);
  const std::size_t stride = n_max + 1;
  for (std::size_t b = 0; b < tails.size(); ++b) {
    for (std::size_t n = 0; n <= n_max; ++n) out.frequency[n] += partial[b * stride + n];
    out.tail += tails[b];
  }
  return out;
}

}  // namespace

int thread_count() { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

void set_thread_count(int threads) { g_threads = std::max(0, threads); }

int configure_threads_from_env() {
  if (const char* env = std::getenv("ADLIFT_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
      throw Error(ErrorCode::kUsage, std::string("ADLIFT_THREADS must be a positive integer, got '") + env + "'");
    }
    set_thread_count(static_cast<int>(v));
  }
  return thread_count();
}

namespace kernels {
namespace serial {

FactorTable build_factor_table(std::span<const RequestRecord> records, const FactorDictionary& dictionary) {
  const auto levels = level_counts_of(dictionary);
  FactorTable table(levels);
  for (std::size_t i = 0; i < levels.size(); ++i) count_factor(records, i, table);
  table.set_total(records.size());
  return table;
}

void score_batch(const SparseRateModel& model, std::span<const RequestRecord> records,
                 std::span<ScoredRequest> out) {
  for (std::size_t i = 0; i < records.size(); ++i) score_one(model, records, i, out[i]);
}

ChurnExpectation churn_expectation(std::span<const double> segment_fractions, double shape, double mean,
                                   std::size_t n_max) {
  check_churn_args(shape, mean);
  const std::size_t blocks = (segment_fractions.size() + kReductionBlock - 1) / kReductionBlock;
  std::vector<double> partial(blocks * (n_max + 1), 0.0);
  std::vector<double> tails(blocks, 0.0);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t begin = b * kReductionBlock;
    const std::size_t end = std::min(segment_fractions.size(), begin + kReductionBlock);
    churn_block(segment_fractions, begin, end, shape, mean, n_max, &partial[b * (n_max + 1)], tails[b]);
  }
  return combine_blocks(partial, tails, n_max);
}

}  // namespace serial

namespace omp {

FactorTable build_factor_table(std::span<const RequestRecord> records, const FactorDictionary& dictionary) {
  const auto levels = level_counts_of(dictionary);
  FactorTable table(levels);
  const auto m = static_cast<std::ptrdiff_t>(levels.size());
  // One factor per task: every row is written by exactly one thread.
#pragma omp parallel for schedule(dynamic) num_threads(thread_count())
  for (std::ptrdiff_t i = 0; i < m; ++i) count_factor(records, static_cast<std::size_t>(i), table);
  table.set_total(records.size());
  return table;
}

void score_batch(const SparseRateModel& model, std::span<const RequestRecord> records,
                 std::span<ScoredRequest> out) {
  const auto n = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    score_one(model, records, static_cast<std::size_t>(i), out[static_cast<std::size_t>(i)]);
  }
}

ChurnExpectation churn_expectation(std::span<const double> segment_fractions, double shape, double mean,
                                   std::size_t n_max) {
  check_churn_args(shape, mean);
  const std::size_t blocks = (segment_fractions.size() + kReductionBlock - 1) / kReductionBlock;
  std::vector<double> partial(blocks * (n_max + 1), 0.0);
  std::vector<double> tails(blocks, 0.0);
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(blocks); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    const std::size_t begin = b * kReductionBlock;
    const std::size_t end = std::min(segment_fractions.size(), begin + kReductionBlock);
    churn_block(segment_fractions, begin, end, shape, mean, n_max, &partial[b * (n_max + 1)], tails[b]);
  }
  return combine_blocks(partial, tails, n_max);
}

}  // namespace omp
}  // namespace kernels
}  // namespace adlift
