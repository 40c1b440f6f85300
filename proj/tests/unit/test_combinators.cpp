#include "cosim/combinators.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

using namespace cosim;
using namespace cosim::literals;

namespace {

Operation<int> value_after(Duration d, int v) {
    co_await sleep(d);
    co_return v;
}

Operation<int> fail_after(Duration d) {
    co_await sleep(d);
    throw std::runtime_error("input failed");
}

template <class T>
Operation<> capture(Operation<T> op, std::optional<T>* out, std::exception_ptr* err, Simulator* sim,
                    std::uint64_t* at) {
    try {
        T v = co_await std::move(op);
        *out = std::move(v);
    } catch (...) {
        *err = std::current_exception();
    }
    *at = sim->now().ticks;
}

struct Harness {
    Simulator sim;
    std::vector<Operation<int>> views;

    std::vector<Operation<int>> make(std::initializer_list<std::int64_t> times) {
        std::vector<Operation<int>> ops;
        int v = 0;
        for (auto t : times) {
            ops.push_back(spawn(sim, value_after(Duration{t}, v++)));
            views.push_back(ops.back().retain());
        }
        return ops;
    }
};

}  // namespace

TEST(Any, FirstCompletionWinsAndLosersAbort) {
    Harness h;
    std::optional<RaceOutcome<int>> out;
    std::exception_ptr err;
    std::uint64_t at = 0;
    auto c = spawn(h.sim, capture(any(h.make({3, 5, 7})), &out, &err, &h.sim, &at));
    h.sim.run_to_completion(100);
    ASSERT_TRUE(out.has_value());
    EXPECT_EQ(out->winner_index, 0u);
    EXPECT_EQ(out->value, 0);
    EXPECT_EQ(at, 3u);
    EXPECT_EQ(h.views[1].state(), TaskState::Aborted);
    EXPECT_EQ(h.views[2].state(), TaskState::Aborted);
    EXPECT_EQ(h.sim.now().ticks, 3u);
}

TEST(Any, SameInstantTieGoesToLowerIndex) {
    Simulator sim;
    std::vector<Operation<int>> ops;
    ops.push_back(value_after(5_ns, 10));
    ops.push_back(value_after(5_ns, 11));
    std::optional<RaceOutcome<int>> out;
    std::exception_ptr err;
    std::uint64_t at = 0;
    auto c = spawn(sim, capture(any(std::move(ops)), &out, &err, &sim, &at));
    sim.run_to_completion(100);
    ASSERT_TRUE(out.has_value());
    EXPECT_EQ(out->winner_index, 0u);
    EXPECT_EQ(out->value, 10);
}

TEST(Any, SingleInputBehavesAsAwait) {
    Harness h;
    std::optional<RaceOutcome<int>> out;
    std::exception_ptr err;
    std::uint64_t at = 0;
    auto c = spawn(h.sim, capture(any(h.make({9})), &out, &err, &h.sim, &at));
    h.sim.run_to_completion(100);
    ASSERT_TRUE(out.has_value());
    EXPECT_EQ(out->winner_index, 0u);
    EXPECT_EQ(at, 9u);
}

TEST(Any, EmptyListRejected) { EXPECT_THROW((void)any(std::vector<Operation<int>>{}), std::invalid_argument); }

TEST(Any, NonOwningInputRejected) {
    Simulator sim;
    auto op = spawn(sim, value_after(1_ns, 1));
    std::vector<Operation<int>> ops;
    ops.push_back(op.retain());
    EXPECT_THROW((void)any(std::move(ops)), ContractViolation);
}

TEST(Any, FailuresAreSkippedUntilSomethingCompletes) {
    Simulator sim;
    std::vector<Operation<int>> ops;
    ops.push_back(fail_after(1_ns));
    ops.push_back(value_after(4_ns, 7));
    std::optional<RaceOutcome<int>> out;
    std::exception_ptr err;
    std::uint64_t at = 0;
    auto c = spawn(sim, capture(any(std::move(ops)), &out, &err, &sim, &at));
    sim.run_to_completion(100);
    ASSERT_TRUE(out.has_value());
    EXPECT_EQ(out->winner_index, 1u);
    EXPECT_EQ(at, 4u);
}

TEST(Any, AllFailingRaisesAggregate) {
    Simulator sim;
    std::vector<Operation<int>> ops;
    ops.push_back(fail_after(1_ns));
    ops.push_back(fail_after(2_ns));
    std::optional<RaceOutcome<int>> out;
    std::exception_ptr err;
    std::uint64_t at = 0;
    auto c = spawn(sim, capture(any(std::move(ops)), &out, &err, &sim, &at));
    sim.run_to_completion(100);
    ASSERT_TRUE(err);
    try {
        std::rethrow_exception(err);
    } catch (const AggregateError& e) {
        EXPECT_EQ(e.errors().size(), 2u);
    }
    EXPECT_EQ(at, 2u);
}

TEST(Any, AbortingCallerAbortsInputs) {
    Harness h;
    std::optional<RaceOutcome<int>> out;
    std::exception_ptr err;
    std::uint64_t at = 0;
    auto race = spawn(h.sim, any(h.make({3, 5})));
    EXPECT_EQ(h.sim.live_event_count(), 2u);
    race.abort();
    EXPECT_EQ(h.sim.live_event_count(), 0u);
    EXPECT_EQ(h.views[0].state(), TaskState::Aborted);
    EXPECT_EQ(h.views[1].state(), TaskState::Aborted);
}

TEST(All, CompletesAtMaxTimeWithInputOrderedValues) {
    Harness h;
    std::optional<std::vector<int>> out;
    std::exception_ptr err;
    std::uint64_t at = 0;
    auto c = spawn(h.sim, capture(all(h.make({9, 4})), &out, &err, &h.sim, &at));
    h.sim.run_to_completion(100);
    ASSERT_TRUE(out.has_value());
    EXPECT_EQ(*out, (std::vector<int>{0, 1}));
    EXPECT_EQ(at, 9u);
}

TEST(All, FailureAbortsPendingInputs) {
    Simulator sim;
    std::vector<Operation<int>> ops;
    ops.push_back(fail_after(2_ns));
    ops.push_back(value_after(10_ns, 1));
    auto pending = ops[1].retain();
    std::optional<std::vector<int>> out;
    std::exception_ptr err;
    std::uint64_t at = 0;
    auto c = spawn(sim, capture(all(std::move(ops)), &out, &err, &sim, &at));
    sim.run_to_completion(100);
    EXPECT_FALSE(out.has_value());
    ASSERT_TRUE(err);
    EXPECT_THROW(std::rethrow_exception(err), std::runtime_error);
    EXPECT_EQ(at, 2u);
    EXPECT_EQ(pending.state(), TaskState::Aborted);
    EXPECT_EQ(sim.now().ticks, 2u);
}

TEST(All, AlreadyCompletedInputsDoNotSuspend) {
    Simulator sim;
    std::vector<Operation<int>> ops;
    ops.push_back(pure(1));
    ops.push_back(pure(2));
    auto j = spawn(sim, all(std::move(ops)));
    EXPECT_EQ(j.state(), TaskState::Completed);
    EXPECT_EQ(j.result(), (std::vector<int>{1, 2}));
    EXPECT_EQ(sim.stats().events_scheduled, 0u);
}

TEST(All, HeterogeneousTuple) {
    Simulator sim;
    auto j = spawn(sim, all(value_after(3_ns, 4), sleep(6_ns)));
    sim.run_to_completion(100);
    ASSERT_EQ(j.state(), TaskState::Completed);
    EXPECT_EQ(std::get<0>(j.result()), 4);
    EXPECT_EQ(sim.now().ticks, 6u);
}

TEST(All, EmptyListRejected) { EXPECT_THROW((void)all(std::vector<Operation<int>>{}), std::invalid_argument); }

TEST(WithTimeout, FinishesBeforeDeadlineAndCancelsTimer) {
    Simulator sim;
    std::optional<TimeoutOutcome<int>> out;
    std::exception_ptr err;
    std::uint64_t at = 0;
    auto c = spawn(sim, capture(with_timeout(value_after(5_ns, 3), 10_ns), &out, &err, &sim, &at));
    sim.run_to_completion(100);
    ASSERT_TRUE(out.has_value());
    ASSERT_TRUE(out->finished());
    EXPECT_EQ(*out->value, 3);
    EXPECT_EQ(at, 5u);
    EXPECT_EQ(sim.stats().events_cancelled, 1u);
    EXPECT_EQ(sim.now().ticks, 5u);
}

TEST(WithTimeout, DeadlineAbortsSlowOperation) {
    Simulator sim;
    auto inner = value_after(20_ns, 3);
    auto view = inner.retain();
    std::optional<TimeoutOutcome<int>> out;
    std::exception_ptr err;
    std::uint64_t at = 0;
    auto c = spawn(sim, capture(with_timeout(std::move(inner), 10_ns), &out, &err, &sim, &at));
    sim.run_to_completion(100);
    ASSERT_TRUE(out.has_value());
    EXPECT_TRUE(out->timed_out());
    EXPECT_EQ(at, 10u);
    EXPECT_EQ(view.state(), TaskState::Aborted);
    EXPECT_EQ(sim.live_event_count(), 0u);
    EXPECT_EQ(sim.now().ticks, 10u);
}

TEST(WithTimeout, ZeroDeadlineLosesToCompletedOperation) {
    Simulator sim;
    auto t = spawn(sim, with_timeout(pure(8), 0_ns));
    ASSERT_EQ(t.state(), TaskState::Completed);
    EXPECT_TRUE(t.result().finished());
    EXPECT_EQ(sim.live_event_count(), 0u);
}

TEST(WithTimeout, InnerFailurePropagates) {
    Simulator sim;
    auto t = spawn(sim, with_timeout(fail_after(1_ns), 10_ns));
    sim.run_to_completion(100);
    EXPECT_EQ(t.state(), TaskState::Failed);
    EXPECT_THROW(t.result(), std::runtime_error);
}

TEST(WithTimeout, NegativeDeadlineRejected) {
    EXPECT_THROW((void)with_timeout(pure(1), Duration{-1}), std::invalid_argument);
}

TEST(Chain, PureStage) {
    Simulator sim;
    auto c = spawn(sim, chain(pure(2), [](int x) { return x + 3; }));
    ASSERT_EQ(c.state(), TaskState::Completed);
    EXPECT_EQ(c.result(), 5);
}

TEST(Chain, LazyUntilAwaited) {
    Simulator sim;
    int runs = 0;
    {
        auto c = chain(pure(1), [&runs](int x) {
                     ++runs;
                     return x;
                 }).then([&runs](int x) {
            ++runs;
            return x * 2;
        });
        EXPECT_FALSE(c.materialized());
    }
    EXPECT_EQ(runs, 0);
    auto c = chain(pure(1), [&runs](int x) {
        ++runs;
        return x;
    });
    EXPECT_EQ(runs, 0);
    auto h = spawn(sim, std::move(c));
    EXPECT_EQ(runs, 1);
}

TEST(Chain, StageMayReturnOperation) {
    Simulator sim;
    auto c = spawn(sim, chain(value_after(3_ns, 2), [](int x) { return value_after(4_ns, x * 10); }));
    sim.run_to_completion(100);
    EXPECT_EQ(c.result(), 20);
    EXPECT_EQ(sim.now().ticks, 7u);
}

TEST(Chain, FailingStageSkipsRest) {
    Simulator sim;
    int later = 0;
    auto c = spawn(sim, chain(pure(1), [](int) -> int { throw std::runtime_error("stage"); }).then([&later](int x) {
        ++later;
        return x;
    }));
    EXPECT_EQ(c.state(), TaskState::Failed);
    EXPECT_EQ(later, 0);
}

// Random races: winner is the argmin completion time (ties by index), every
// loser is aborted, and no loser timer survives.
TEST(CombinatorProperty, RaceSoundness) {
    std::mt19937_64 rng(3);
    for (int round = 0; round < 300; ++round) {
        Simulator sim;
        const int n = 1 + static_cast<int>(rng() % 6);
        std::vector<std::int64_t> times;
        std::vector<Operation<int>> ops, views;
        for (int i = 0; i < n; ++i) {
            times.push_back(static_cast<std::int64_t>(rng() % 8));
            ops.push_back(value_after(Duration{times.back()}, i));
            views.push_back(ops.back().retain());
        }
        auto race = spawn(sim, any(std::move(ops)));
        sim.run_to_completion(1000);
        const auto expect = static_cast<std::size_t>(std::min_element(times.begin(), times.end()) - times.begin());
        ASSERT_EQ(race.state(), TaskState::Completed);
        EXPECT_EQ(race.result().winner_index, expect);
        for (int i = 0; i < n; ++i) {
            if (static_cast<std::size_t>(i) != expect) EXPECT_EQ(views[i].state(), TaskState::Aborted);
        }
        EXPECT_EQ(sim.now().ticks, static_cast<std::uint64_t>(times[expect]));
        EXPECT_EQ(sim.live_event_count(), 0u);
    }
}

TEST(CombinatorProperty, JoinTiming) {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 300; ++round) {
        Simulator sim;
        const int n = 1 + static_cast<int>(rng() % 6);
        std::vector<std::int64_t> times;
        std::vector<Operation<int>> ops;
        for (int i = 0; i < n; ++i) {
            times.push_back(static_cast<std::int64_t>(rng() % 50));
            ops.push_back(value_after(Duration{times.back()}, i * i));
        }
        auto join = spawn(sim, all(std::move(ops)));
        sim.run_to_completion(1000);
        ASSERT_EQ(join.state(), TaskState::Completed);
        EXPECT_EQ(sim.now().ticks, static_cast<std::uint64_t>(*std::max_element(times.begin(), times.end())));
        for (int i = 0; i < n; ++i) EXPECT_EQ(join.result()[i], i * i);
    }
}

TEST(CombinatorProperty, ChainAssociativityAndFusion) {
    std::mt19937_64 rng(9);
    auto make_stage = [&rng]() -> std::function<std::int64_t(std::int64_t)> {
        const auto a = static_cast<std::int64_t>(rng() % 7) - 3;
        const auto b = static_cast<std::int64_t>(rng() % 11) - 5;
        return [a, b](std::int64_t x) { return a * x + b; };
    };
    for (int round = 0; round < 1000; ++round) {
        Simulator sim;
        const auto x0 = static_cast<std::int64_t>(rng() % 100);
        auto f = make_stage();
        auto g = make_stage();
        auto left = spawn(sim, chain(chain(pure(x0), f), g));
        auto right = spawn(sim, chain(pure(x0), [f, g](std::int64_t x) { return g(f(x)); }));
        EXPECT_EQ(left.result(), right.result());
        EXPECT_EQ(left.result(), g(f(x0)));
    }
}
