#include "cosim/task.hpp"

#include <benchmark/benchmark.h>

using namespace cosim;

namespace {

void BM_ScheduleRun(benchmark::State& state) {
    const auto n = state.range(0);
    for (auto _ : state) {
        Simulator sim;
        for (std::int64_t i = 0; i < n; ++i) sim.schedule(Duration{i % 97}, [] {});
        benchmark::DoNotOptimize(sim.run_to_completion(n + 1));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ScheduleRun)->Arg(1 << 10)->Arg(1 << 16);

Operation<> sleeper(Duration d) { co_await sleep(d); }

void BM_SpawnSleep(benchmark::State& state) {
    const auto n = state.range(0);
    for (auto _ : state) {
        Simulator sim;
        for (std::int64_t i = 0; i < n; ++i) spawn(sim, sleeper(Duration{i % 97})).release();
        benchmark::DoNotOptimize(sim.run_to_completion(4 * n + 1));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SpawnSleep)->Arg(1 << 10)->Arg(1 << 16);

}  // namespace
BENCHMARK_MAIN();
