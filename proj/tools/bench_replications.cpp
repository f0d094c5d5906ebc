// Serial reference vs the OpenMP replication loop on one desk-sized design.

#include <benchmark/benchmark.h>

#include "chi2sets/simulate.hpp"

using namespace chi2sets;

namespace {

const ExperimentContext& context() {
  static const ExperimentContext ctx = [] {
    ExperimentConfig cfg;
    cfg.n = 200;
    cfg.p = 100;
    cfg.J = {0, 2, 3};
    cfg.replications = 32;
    cfg.base_seed = 20240611;
    cfg.has_seed = true;
    cfg.lambda_msrl.kind = MsrlLambdaRule::Kind::Explicit;
    cfg.lambda_msrl.value = 0.3;
    return prepare_experiment(cfg);
  }();
  return ctx;
}

void BM_serial(benchmark::State& state) {
  const auto& ctx = context();
  for (auto _ : state) benchmark::DoNotOptimize(run_replications_serial(ctx));
  state.SetItemsProcessed(state.iterations() * ctx.config.replications);
}

void BM_parallel(benchmark::State& state) {
  const auto& ctx = context();
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_replications_parallel(ctx, threads));
  state.SetItemsProcessed(state.iterations() * ctx.config.replications);
}

}  // namespace

BENCHMARK(BM_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_parallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
