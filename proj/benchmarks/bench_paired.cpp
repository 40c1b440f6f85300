#include "cosim/allreduce.hpp"
#include "cosim/fetch_send.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace cosim;
using namespace cosim::literals;

namespace {

// Arg 0: coroutine form, 1: callback form.
void BM_FetchSend(benchmark::State& state) {
    demo::FetchSendConfig cfg;
    cfg.rounds = static_cast<std::uint32_t>(state.range(1));
    cfg.data_bytes = 1500;
    for (auto _ : state) {
        Simulator sim;
        Network net(sim, Topology::build(demo::fetch_send_topology(LinkConfig{2_us, 10'000'000'000})));
        const demo::FetchSendNodes nodes{net.topology().node("client"), net.topology().node("store"),
                                         net.topology().node("sink")};
        Operation<demo::FetchSendResult> op;
        if (state.range(0) == 0) {
            op = demo::fetch_and_send(net, nodes, cfg);
        } else {
            demo::fetch_and_send_callbacks(net, nodes, cfg, [](demo::FetchSendResult) {});
        }
        benchmark::DoNotOptimize(sim.run_to_completion(100'000'000));
    }
    state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_FetchSend)->ArgNames({"callback", "rounds"})->Args({0, 2000})->Args({1, 2000})->Unit(benchmark::kMillisecond);

void BM_RingAllreduce(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(1));
    const std::size_t length = n * 64;
    std::mt19937_64 rng(1);
    std::vector<allreduce::Vector> inputs(n, allreduce::Vector(length));
    for (auto& v : inputs)
        for (auto& x : v) x = static_cast<std::int64_t>(rng() % 1000);
    for (auto _ : state) {
        Simulator sim;
        Network net(sim, Topology::build(TopologySpec::ring(n, LinkConfig{1_us, 100'000'000'000})));
        allreduce::World world;
        for (std::size_t r = 0; r < n; ++r) world.ranks.push_back(NodeId{static_cast<std::uint32_t>(r)});
        world.length = length;
        std::vector<Operation<allreduce::Vector>> ops;
        if (state.range(0) == 0) {
            ops = allreduce::ring_allreduce(net, world, inputs, allreduce::ReduceOp::sum());
        } else {
            allreduce::ring_allreduce_callbacks(net, world, inputs, allreduce::ReduceOp::sum(), {},
                                                [](std::size_t, allreduce::Vector) {});
        }
        benchmark::DoNotOptimize(sim.run_to_completion(100'000'000));
    }
}
BENCHMARK(BM_RingAllreduce)->ArgNames({"callback", "ranks"})->Args({0, 16})->Args({1, 16})->Args({0, 64})->Args({1, 64});

}  // namespace
