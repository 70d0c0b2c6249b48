#pragma once

// Data-parallel kernels. Each kernel has a serial reference in
// `kernels::serial` and an OpenMP version in `kernels::omp`; the two are
// required to agree bit-for-bit, independent of thread count. Reductions in
// the OpenMP versions are performed over a fixed block partition and then
// combined in block order, so floating-point results do not depend on how
// blocks were scheduled.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "adlift/ingest.hpp"

namespace adlift {

class SparseRateModel;
struct ScoredRequest;

// Number of worker threads the parallel kernels use. Defaults to the OpenMP
// runtime default (available parallelism); set_thread_count(0) restores it.
int thread_count();
void set_thread_count(int threads);
// Applies ADLIFT_THREADS if set. Returns the resulting thread count.
int configure_threads_from_env();

// Fixed partition size used by every blocked reduction.
inline constexpr std::size_t kReductionBlock = 4096;

// Expected frequency of identities with exactly n events, n = 0..n_max, under
// the churn model: Σ_segments NBD(n; k, mean * length). `tail` receives the
// expected number of identities with more than n_max events.
struct ChurnExpectation {
  std::vector<double> frequency;  // index n = 0..n_max
  double tail = 0.0;
};

namespace kernels {
namespace serial {

FactorTable build_factor_table(std::span<const RequestRecord> records,
                               const FactorDictionary& dictionary);
void score_batch(const SparseRateModel& model, std::span<const RequestRecord> records,
                 std::span<ScoredRequest> out);
// `segment_fractions` are identity lifetimes inside the window as fractions
// of the window length.
ChurnExpectation churn_expectation(std::span<const double> segment_fractions, double shape,
                                   double mean, std::size_t n_max);

}  // namespace serial

namespace omp {

FactorTable build_factor_table(std::span<const RequestRecord> records,
                               const FactorDictionary& dictionary);
void score_batch(const SparseRateModel& model, std::span<const RequestRecord> records,
                 std::span<ScoredRequest> out);
ChurnExpectation churn_expectation(std::span<const double> segment_fractions, double shape,
                                   double mean, std::size_t n_max);

}  // namespace omp
}  // namespace kernels
}  // namespace adlift
