#include <benchmark/benchmark.h>

#include "strata/dgp.hpp"

using namespace strata;

static void BM_genpop_serial(benchmark::State& state) {
  const ParameterSet params = scenario_params(2);
  const size_t n = static_cast<size_t>(state.range(0));
  for (auto _ : state) {
    PopulationTable t = generate_population_serial(params, n, 91);
    benchmark::DoNotOptimize(t.v.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n));
}
BENCHMARK(BM_genpop_serial)->Arg(100000)->Arg(1000000)->Unit(benchmark::kMillisecond);

static void BM_genpop_parallel(benchmark::State& state) {
  const ParameterSet params = scenario_params(2);
  const size_t n = static_cast<size_t>(state.range(0));
  for (auto _ : state) {
    PopulationTable t = generate_population(params, n, 91);
    benchmark::DoNotOptimize(t.v.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n));
}
BENCHMARK(BM_genpop_parallel)->Arg(100000)->Arg(1000000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
