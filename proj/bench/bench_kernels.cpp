// Serial reference vs OpenMP kernels. Thread count follows ADLIFT_THREADS.

#include <benchmark/benchmark.h>

#include "adlift/features.hpp"
#include "adlift/kernels.hpp"
#include "adlift/predictor.hpp"
#include "adlift/rng.hpp"
#include "adlift/synth.hpp"

namespace {

using namespace adlift;

struct Fixture {
  ParsedRequests data;
  SparseRateModel model;
  std::vector<double> segments;

  Fixture() {
    RequestSpec spec;
    spec.count = 1 << 18;
    spec.base_rate = 0.05;
    for (int j = 0; j < 10; ++j) {
      FactorSpec f;
      f.name = "f" + std::to_string(j);
      f.probs = {0.4, 0.3, 0.2, 0.05, 0.05};
      f.effects = {0.0, 0.2, -0.2, 0.5, j == 0 ? 0.8 : 0.0};
      spec.factors.push_back(f);
    }
    data = gen_requests(spec, 1);
    const FactorTable table = kernels::serial::build_factor_table(data.records, data.dictionary);
    const auto imp = rank_factors(table, MiParams{}, data.dictionary.factor_names(), data.dictionary.fingerprint());
    model = train(table, data.dictionary, imp, 0.0);
    Rng rng(2);
    segments.resize(100000);
    for (auto& s : segments) s = rng.uniform_pos();
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

template <auto Kernel>
void BM_FactorTable(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(f.data.records, f.data.dictionary));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.data.records.size()));
}

template <auto Kernel>
void BM_ScoreBatch(benchmark::State& state) {
  const auto& f = fixture();
  std::vector<ScoredRequest> out(f.data.records.size());
  for (auto _ : state) {
    Kernel(f.model, f.data.records, out);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(out.size()));
}

template <auto Kernel>
void BM_ChurnExpectation(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(f.segments, 0.8, 6.0, 60));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.segments.size()));
}

BENCHMARK(BM_FactorTable<kernels::serial::build_factor_table>)->Name("factor_table/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FactorTable<kernels::omp::build_factor_table>)->Name("factor_table/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreBatch<kernels::serial::score_batch>)->Name("score_batch/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreBatch<kernels::omp::score_batch>)->Name("score_batch/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ChurnExpectation<kernels::serial::churn_expectation>)->Name("churn_expectation/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ChurnExpectation<kernels::omp::churn_expectation>)->Name("churn_expectation/omp")->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  adlift::configure_threads_from_env();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
