#include "cosim/combinators.hpp"
#include "cosim/interop.hpp"
#include "cosim/sync.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>

using namespace cosim;
using namespace cosim::literals;

namespace {

// Registrar that fires `value` after `delay` through a kernel event.
CallbackRegistrar<int> fires_at(Simulator& sim, Duration delay, int value) {
    return [&sim, delay, value](Callback<int> cb) { sim.schedule(delay, [cb, value] { cb(value); }); };
}

Operation<> await_int(Operation<int> op, int* out, std::uint64_t* at, Simulator* sim) {
    *out = co_await std::move(op);
    *at = sim->now().ticks;
}

Operation<int> original_body() {
    int x = 1;
    co_await sleep(10_ns);
    co_return x + 1;
}

Operation<int> original_zero_delay() {
    int x = 4;
    co_await sleep(0_ns);
    co_return x * 3;
}

Operation<int> original_fails_early() {
    throw std::runtime_error("pre");
    co_await sleep(10_ns);
    co_return 0;
}

}  // namespace

TEST(WrapImmediate, CompletesWithoutSuspending) {
    Simulator sim;
    auto op = spawn(sim, wrap_immediate([] { return 9; }));
    EXPECT_EQ(op.state(), TaskState::Completed);
    EXPECT_EQ(op.result(), 9);
    EXPECT_EQ(sim.stats().events_scheduled, 0u);
}

TEST(WrapImmediate, TraceMatchesDirectCall) {
    auto run = [](bool wrapped) {
        Simulator sim;
        sim.tracer().enable_default();
        int total = 0;
        auto f = [&sim, &total] {
            total += 1;
            sim.schedule(5_ns, [] {});
            return total;
        };
        std::vector<Operation<int>> keep;
        sim.schedule(1_ns, [&] {
            if (wrapped) {
                keep.push_back(spawn(sim, wrap_immediate(f)));
            } else {
                f();
            }
        });
        sim.run_to_completion(100);
        return sim.tracer().records();
    };
    EXPECT_FALSE(diff_traces(run(true), run(false)).has_value());
}

TEST(WrapImmediate, FailureCarriesSameError) {
    Simulator sim;
    auto op = spawn(sim, wrap_immediate([]() -> int { throw std::domain_error("nope"); }));
    EXPECT_EQ(op.state(), TaskState::Failed);
    EXPECT_THROW(op.result(), std::domain_error);
}

TEST(FromCallback, ResumesWhenCallbackFires) {
    Simulator sim;
    int v = 0;
    std::uint64_t at = 0;
    auto h = spawn(sim, await_int(from_callback(fires_at(sim, 12_ns, 3)), &v, &at, &sim));
    sim.run_to_completion(100);
    EXPECT_EQ(v, 3);
    EXPECT_EQ(at, 12u);
}

TEST(FromCallback, NeverFiringStaysSuspendedUntilTimeout) {
    Simulator sim;
    auto op = from_callback<int>([](Callback<int>) {});
    auto view = op.retain();
    auto t = spawn(sim, with_timeout(std::move(op), 50_ns));
    sim.run_until(SimTime{10});
    EXPECT_EQ(view.state(), TaskState::Suspended);
    sim.run_to_completion(100);
    EXPECT_TRUE(t.result().timed_out());
    EXPECT_EQ(view.state(), TaskState::Aborted);
}

TEST(FromCallback, DoubleFireIsContractViolation) {
    Simulator sim;
    std::optional<Callback<int>> saved;
    auto op = spawn(sim, from_callback<int>([&](Callback<int> cb) { saved.emplace(cb); }));
    (*saved)(1);
    EXPECT_EQ(op.result(), 1);
    EXPECT_THROW((*saved)(2), ContractViolation);
}

TEST(FromCallback, SynchronousFireCompletesInline) {
    Simulator sim;
    auto op = spawn(sim, from_callback<int>([](Callback<int> cb) { cb(4); }));
    EXPECT_EQ(op.state(), TaskState::Completed);
    EXPECT_EQ(op.result(), 4);
}

TEST(FromCallback, ErrorCallbackFailsOperation) {
    Simulator sim;
    auto op = spawn(sim, from_callback<int>([&sim](Callback<int> cb) {
        sim.schedule(2_ns, [cb] { cb.fail(std::make_exception_ptr(std::runtime_error("io"))); });
    }));
    sim.run_to_completion(10);
    EXPECT_EQ(op.state(), TaskState::Failed);
    EXPECT_THROW(op.result(), std::runtime_error);
}

TEST(FromCallback, AbortDeactivatesCallback) {
    Simulator sim;
    std::optional<Callback<int>> saved;
    auto op = spawn(sim, from_callback<int>([&](Callback<int> cb) { saved.emplace(cb); }));
    EXPECT_TRUE(saved->active());
    op.abort();
    EXPECT_FALSE(saved->active());
    EXPECT_NO_THROW((*saved)(1));
    EXPECT_EQ(op.state(), TaskState::Aborted);
}

TEST(ToCallback, DeliversAtCompletionInstant) {
    Simulator sim;
    int got = 0;
    std::uint64_t at = 0;
    to_callback<int>(
        sim, from_callback(fires_at(sim, 8_ns, 5)),
        [&](int v) {
            got = v;
            at = sim.now().ticks;
        },
        [](std::exception_ptr) { FAIL(); });
    sim.run_to_completion(100);
    EXPECT_EQ(got, 5);
    EXPECT_EQ(at, 8u);
}

TEST(ToCallback, AbortedOperationReportsErrorOnce) {
    Simulator sim;
    int errors = 0;
    auto op = spawn(sim, sleep(100_ns));
    auto view = op.retain();
    auto* frame = op.frame();
    to_callback<Unit>(
        sim, std::move(op), [](Unit) { FAIL(); },
        [&](std::exception_ptr e) {
            ++errors;
            EXPECT_THROW(std::rethrow_exception(e), OperationAborted);
        });
    sim.schedule(5_ns, [frame] { frame->abort(); });
    sim.run_to_completion(100);
    EXPECT_EQ(errors, 1);
}

TEST(ToCallback, AlreadyCompletedDeliversThroughEvent) {
    Simulator sim;
    std::string order;
    sim.schedule(0_ns, [&] { order += 'q'; });
    to_callback<int>(sim, pure(3), [&](int) { order += 'c'; }, [](std::exception_ptr) {});
    EXPECT_EQ(order, "");
    sim.run_to_completion(100);
    EXPECT_EQ(order, "qc");
    EXPECT_EQ(sim.now().ticks, 0u);
}

// Random registrars: routing the callbacks through from_callback and
// to_callback yields the same (outcome, value, instant) as direct use.
TEST(InteropProperty, RoundTripFidelity) {
    std::mt19937_64 rng(21);
    for (int round = 0; round < 200; ++round) {
        const auto delay = Duration{static_cast<std::int64_t>(rng() % 20)};
        const int value = static_cast<int>(rng() % 1000);
        const bool fail = rng() % 4 == 0;
        const bool sync = rng() % 5 == 0;
        auto make = [=](Simulator& sim) -> CallbackRegistrar<int> {
            return [=, &sim](Callback<int> cb) {
                auto fire = [cb, value, fail] {
                    if (fail) {
                        cb.fail(std::make_exception_ptr(std::runtime_error("e" + std::to_string(value))));
                    } else {
                        cb(value);
                    }
                };
                if (sync) {
                    fire();
                } else {
                    sim.schedule(delay, fire);
                }
            };
        };
        struct Seen {
            std::string what;
            std::uint64_t at = 0;
            int calls = 0;
            bool operator==(const Seen&) const = default;
        };
        auto observe = [](Simulator& sim, Seen& seen) {
            auto ok = [&sim, &seen](int v) {
                seen.what = "ok" + std::to_string(v);
                seen.at = sim.now().ticks;
                ++seen.calls;
            };
            auto err = [&sim, &seen](std::exception_ptr e) {
                seen.what = "err:" + detail::error_text(e);
                seen.at = sim.now().ticks;
                ++seen.calls;
            };
            return std::make_pair(ok, err);
        };

        Seen direct, round_trip;
        {
            Simulator sim;
            auto [ok, err] = observe(sim, direct);
            make(sim)(Callback<int>::direct(ok, err));
            sim.run_to_completion(100);
        }
        {
            Simulator sim;
            auto [ok, err] = observe(sim, round_trip);
            to_callback<int>(sim, from_callback(make(sim)), ok, err);
            sim.run_to_completion(100);
        }
        EXPECT_EQ(direct, round_trip) << "round " << round;
        EXPECT_EQ(round_trip.calls, 1);
    }
}

TEST(Rip, SingleSuspensionTracesMatch) {
    RippedPair<int, int> pair{[] { return 1; }, 10_ns, [](int x) { return x + 1; }};
    auto report = check_rip<int, int>(original_body, pair);
    EXPECT_TRUE(report.equivalent());
    ASSERT_FALSE(report.original.empty());
    const auto& last = report.original.back();
    EXPECT_EQ(last.kind, TraceKind::Mark);
    EXPECT_EQ(last.time.ticks, 10u);
    EXPECT_EQ(*last.find("detail"), "2");
}

TEST(Rip, ZeroDelayKeepsSameInstantOrder) {
    RippedPair<int, int> pair{[] { return 4; }, 0_ns, [](int x) { return x * 3; }};
    auto background = [](Simulator& sim) {
        sim.schedule(0_ns, [] {});
        sim.schedule(0_ns, [&sim] { sim.schedule(0_ns, [] {}); });
    };
    auto report = check_rip<int, int>(original_zero_delay, pair, background);
    EXPECT_TRUE(report.equivalent());
}

TEST(Rip, PreStageFailureNeverSchedulesPost) {
    int post_runs = 0;
    RippedPair<int, int> pair{[]() -> int { throw std::runtime_error("pre"); }, 10_ns, [&post_runs](int x) {
                                  ++post_runs;
                                  return x;
                              }};
    auto report = check_rip<int, int>(original_fails_early, pair);
    EXPECT_TRUE(report.equivalent());
    EXPECT_EQ(post_runs, 0);
    // Only the harness's start event is ever scheduled.
    auto schedules = std::count_if(report.original.begin(), report.original.end(),
                                   [](const TraceRecord& r) { return r.kind == TraceKind::Schedule; });
    EXPECT_EQ(schedules, 1);
}

TEST(Rip, DivergenceIsReported) {
    RippedPair<int, int> pair{[] { return 1; }, 11_ns, [](int x) { return x + 1; }};
    auto report = check_rip<int, int>(original_body, pair);
    ASSERT_FALSE(report.equivalent());
    EXPECT_TRUE(report.divergence->left.has_value());
}

TEST(Mailbox, BufferedAndWaitingReceivers) {
    Simulator sim;
    Mailbox<int> box;
    box.send(1);
    auto a = spawn(sim, box.recv());
    EXPECT_EQ(a.result(), 1);
    auto b = spawn(sim, box.recv());
    auto c = spawn(sim, box.recv());
    box.send(2);
    box.send(3);
    EXPECT_EQ(b.result(), 2);
    EXPECT_EQ(c.result(), 3);
}

TEST(Mailbox, AbortedReceiverDoesNotLoseItem) {
    Simulator sim;
    Mailbox<int> box;
    auto a = spawn(sim, box.recv());
    auto b = spawn(sim, box.recv());
    a.abort();
    box.send(7);
    EXPECT_EQ(b.result(), 7);
    EXPECT_EQ(box.buffered(), 0u);
}

TEST(Signal, WakesCurrentWaitersOnly) {
    Simulator sim;
    Signal sig;
    auto a = spawn(sim, sig.wait());
    EXPECT_EQ(sig.notify_all(), 1u);
    EXPECT_EQ(a.state(), TaskState::Completed);
    auto b = spawn(sim, sig.wait());
    EXPECT_EQ(b.state(), TaskState::Suspended);
}
