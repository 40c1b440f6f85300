#include "cosim/pfc.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace cosim;
using namespace cosim::literals;
using namespace cosim::pfc;

namespace {

constexpr std::uint64_t kGbps = 1'000'000'000;

Packet plain(NodeId src, NodeId dst, std::uint32_t size, std::uint8_t prio) {
    Packet p;
    p.src = src;
    p.dst = dst;
    p.size_bytes = size;
    p.priority = prio;
    return p;
}

std::vector<std::uint64_t> times_of(const std::vector<GuardEvent>& log, std::initializer_list<GuardAction> actions) {
    std::vector<std::uint64_t> out;
    for (const auto& e : log) {
        if (std::find(actions.begin(), actions.end(), e.action) != actions.end()) out.push_back(e.at.ticks);
    }
    return out;
}

bool is_tx_on(const TraceRecord& r, std::string_view node, std::string_view iface, std::string_view prio) {
    return r.kind == TraceKind::Tx && *r.find("node") == node && *r.find("iface") == iface && *r.find("prio") == prio;
}

struct GuardRig {
    Simulator sim;
    Network net{sim, Topology::build(TopologySpec{{"a", "b"}, {{"a", "b", {50_ns, kGbps}, 0}}})};
    PauseGuard guard{net};
    GuardKey key{NodeId{0}, IfaceId{0}, 3};

    GuardRig() { sim.tracer().enable_default(); }

    void frame_at(std::int64_t t, std::int64_t quanta) {
        sim.schedule(Duration{t}, [this, quanta] { guard.on_frame(key, Duration{quanta}); });
    }
    void packet_at(std::int64_t t, std::uint32_t size = 100) {
        sim.schedule(Duration{t}, [this, size] { net.send_cb(key.node, key.iface, plain(NodeId{0}, NodeId{1}, size, key.prio), {}); });
    }
    std::vector<std::uint64_t> tx_times() const {
        std::vector<std::uint64_t> out;
        for (const auto& r : sim.tracer().records()) {
            if (is_tx_on(r, "a", "0", "3")) out.push_back(r.time.ticks);
        }
        return out;
    }
};

}  // namespace

TEST(PfcConfig, Validation) {
    EXPECT_NO_THROW((PfcConfig{8, 4, 100_ns}.validate()));
    EXPECT_THROW((PfcConfig{8, 8, 100_ns}.validate()), std::invalid_argument);
    EXPECT_THROW((PfcConfig{4, 8, 100_ns}.validate()), std::invalid_argument);
    EXPECT_THROW((PfcConfig{8, 4, 0_ns}.validate()), std::invalid_argument);
}

TEST(PauseGuard, SinglePauseResumesAfterQuanta) {
    GuardRig rig;
    rig.frame_at(0, 100);
    rig.packet_at(1);
    rig.sim.run_to_completion(100);
    EXPECT_EQ(times_of(rig.guard.log(), {GuardAction::Expire, GuardAction::Resume}), (std::vector<std::uint64_t>{100}));
    EXPECT_EQ(rig.tx_times(), (std::vector<std::uint64_t>{100}));
    EXPECT_EQ(rig.guard.live_timers(), 0u);
}

TEST(PauseGuard, RefreshReplacesPendingTimer) {
    GuardRig rig;
    rig.frame_at(0, 100);
    rig.frame_at(60, 100);
    rig.packet_at(1);
    rig.sim.run_to_completion(100);
    EXPECT_EQ(times_of(rig.guard.log(), {GuardAction::Expire, GuardAction::Resume}), (std::vector<std::uint64_t>{160}));
    EXPECT_EQ(times_of(rig.guard.log(), {GuardAction::Refresh}), (std::vector<std::uint64_t>{60}));
    EXPECT_EQ(rig.guard.timers_aborted(), 1u);
    EXPECT_EQ(rig.tx_times(), (std::vector<std::uint64_t>{160}));
    // Nothing resumes the queue at t=100.
    for (const auto& r : rig.sim.tracer().records()) {
        if (r.kind == TraceKind::Resume) EXPECT_EQ(r.time.ticks, 160u);
    }
}

TEST(PauseGuard, ZeroFrameResumesImmediately) {
    GuardRig rig;
    rig.frame_at(0, 100);
    rig.frame_at(30, 0);
    rig.packet_at(1);
    rig.sim.run_to_completion(100);
    EXPECT_EQ(times_of(rig.guard.log(), {GuardAction::Expire, GuardAction::Resume}), (std::vector<std::uint64_t>{30}));
    EXPECT_EQ(rig.tx_times(), (std::vector<std::uint64_t>{30}));
    EXPECT_EQ(rig.guard.timers_aborted(), 1u);
}

TEST(PauseGuard, FreeFunctionFormAndNegativeQuanta) {
    GuardRig rig;
    pfc_guard(rig.guard, rig.key.node, rig.key.iface, rig.key.prio, 40_ns);
    EXPECT_TRUE(rig.net.paused(rig.key.node, rig.key.iface, rig.key.prio));
    EXPECT_EQ(rig.guard.live_timers(rig.key), 1u);
    EXPECT_THROW(rig.guard.on_frame(rig.key, Duration{-1}), std::invalid_argument);
    rig.sim.run_to_completion(10);
    EXPECT_FALSE(rig.net.paused(rig.key.node, rig.key.iface, rig.key.prio));
}

TEST(PauseGuardProperty, RandomizedPauseRefreshSchedules) {
    std::mt19937_64 rng(4242);
    for (int round = 0; round < 1000; ++round) {
        GuardRig rig;
        struct Frame {
            std::int64_t t;
            std::int64_t q;
        };
        std::vector<Frame> frames;
        const int nframes = 1 + static_cast<int>(rng() % 25);
        for (int i = 0; i < nframes; ++i) {
            // Frames on even instants, traffic on odd ones.
            const std::int64_t t = 2 * static_cast<std::int64_t>(rng() % 10'000);
            const std::int64_t q = rng() % 7 == 0 ? 0 : 1 + static_cast<std::int64_t>(rng() % 3000);
            frames.push_back({t, q});
        }
        std::stable_sort(frames.begin(), frames.end(), [](const Frame& a, const Frame& b) { return a.t < b.t; });
        for (const auto& f : frames) rig.frame_at(f.t, f.q);
        const int npkts = static_cast<int>(rng() % 40);
        for (int i = 0; i < npkts; ++i) {
            rig.packet_at(1 + 2 * static_cast<std::int64_t>(rng() % 12'000), 10 + static_cast<std::uint32_t>(rng() % 200));
        }
        ASSERT_EQ(rig.sim.run_to_completion(1'000'000).outcome, RunOutcome::Completed);

        // Oracle: a zero frame resumes at its instant; a positive frame
        // resumes at t + q unless another frame arrives no later than that.
        std::vector<std::uint64_t> expected;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            if (frames[i].q == 0) {
                expected.push_back(static_cast<std::uint64_t>(frames[i].t));
                continue;
            }
            const std::int64_t end = frames[i].t + frames[i].q;
            if (i + 1 == frames.size() || frames[i + 1].t > end) expected.push_back(static_cast<std::uint64_t>(end));
        }
        ASSERT_EQ(times_of(rig.guard.log(), {GuardAction::Expire, GuardAction::Resume}), expected) << "round " << round;

        auto paused_at = [&](std::int64_t x) {
            const Frame* last = nullptr;
            for (const auto& f : frames) {
                if (f.t <= x) last = &f;
            }
            return last && last->q > 0 && last->t + last->q > x;
        };
        for (auto tx : rig.tx_times()) {
            ASSERT_FALSE(paused_at(static_cast<std::int64_t>(tx))) << "dequeue at " << tx << " in round " << round;
        }
        EXPECT_EQ(static_cast<int>(rig.tx_times().size()), npkts);
        EXPECT_LE(rig.guard.max_live_per_key(), 1u);
        EXPECT_TRUE(rig.guard.consistent());
        EXPECT_EQ(rig.guard.live_timers(), 0u);
    }
}

namespace {

// h0 --(100 Gb/s)-- s --(1 Gb/s)-- h1; 1000-byte packets take 80 ns in and
// 8000 ns out of the switch.
struct Dumbbell {
    Simulator sim;
    Network net;
    Fabric fab;

    explicit Dumbbell(PfcConfig cfg)
        : net(sim, Topology::build(TopologySpec{{"h0", "s", "h1"},
                                                {{"h0", "s", {100_ns, 100 * kGbps}, 0},
                                                 {"s", "h1", {100_ns, kGbps}, 0}}})),
          fab(net, cfg, {NodeId{1}}) {
        fab.start();
    }

    void burst(std::int64_t at, int count, std::uint8_t prio) {
        sim.schedule(Duration{at}, [this, count, prio] {
            for (int i = 0; i < count; ++i) net.send_cb(NodeId{0}, IfaceId{0}, plain(NodeId{0}, NodeId{2}, 1000, prio), {});
        });
    }

    std::vector<PfcEmission> emitted(bool pauses) const {
        std::vector<PfcEmission> out;
        for (const auto& e : fab.emissions()) {
            if ((e.quanta.ticks > 0) == pauses) out.push_back(e);
        }
        return out;
    }
};

}  // namespace

TEST(PfcSwitch, ReachingXoffEmitsExactlyOnePause) {
    Dumbbell d(PfcConfig{8, 4, 10_us});
    d.burst(0, 8, 3);
    d.sim.run_to_completion(10'000);
    const auto pauses = d.emitted(true);
    ASSERT_EQ(pauses.size(), 1u);
    // Eighth arrival: 100 ns latency + 8 * 80 ns serialization.
    EXPECT_EQ(pauses[0].at.ticks, 740u);
    EXPECT_EQ(pauses[0].prio, 3);
    EXPECT_EQ(pauses[0].node, NodeId{1});
    EXPECT_EQ(pauses[0].iface, IfaceId{0});
    EXPECT_EQ(d.emitted(false).size(), 1u);
    EXPECT_EQ(d.fab.upward_crossings().at(GuardKey{NodeId{1}, IfaceId{0}, 3}), 1u);
    EXPECT_EQ(d.fab.occupancy(NodeId{1}, IfaceId{0}, 3), 0u);
}

TEST(PfcSwitch, BelowXoffEmitsNothing) {
    Dumbbell d(PfcConfig{8, 4, 10_us});
    d.burst(0, 7, 3);
    d.sim.run_to_completion(10'000);
    EXPECT_TRUE(d.fab.emissions().empty());
}

TEST(PfcSwitch, SustainedCongestionPausesOnce) {
    Dumbbell d(PfcConfig{8, 4, 10_us});
    d.burst(0, 12, 3);
    d.sim.run_to_completion(10'000);
    EXPECT_EQ(d.emitted(true).size(), 1u);
    EXPECT_EQ(d.emitted(false).size(), 1u);
    // The host egress was held by its guard in between.
    const auto& log = d.fab.guard().log();
    ASSERT_GE(log.size(), 2u);
    EXPECT_EQ(log.front().action, GuardAction::Pause);
    EXPECT_EQ(log.front().key.node, NodeId{0});
}

TEST(PfcSwitch, OscillationAcrossXoffPausesOnEveryUpwardCrossing) {
    // A 1 ns quanta keeps the host from being held across paced sends.
    Dumbbell d(PfcConfig{8, 4, 1_ns});
    d.burst(0, 8, 3);
    // Occupancy falls 8 -> 7 at 8180 + 8000 j; each paced packet lands
    // 4000 ns later and lifts it back to 8.
    const int paced = 5;
    for (int j = 0; j < paced; ++j) d.burst(12'180 - 180 + 8'000 * j, 1, 3);
    d.sim.run_to_completion(100'000);
    const auto pauses = d.emitted(true);
    ASSERT_EQ(pauses.size(), static_cast<std::size_t>(1 + paced));
    EXPECT_EQ(pauses[0].at.ticks, 740u);
    for (int j = 0; j < paced; ++j) EXPECT_EQ(pauses[1 + j].at.ticks, 12'180u + 8'000u * j);
    EXPECT_EQ(d.emitted(false).size(), 1u);
}

TEST(PfcSwitch, PrioritiesArePausedIndependently) {
    Dumbbell d(PfcConfig{8, 4, 10_us});
    d.burst(0, 8, 2);
    d.burst(0, 8, 3);
    d.sim.run_to_completion(10'000);
    const auto pauses = d.emitted(true);
    ASSERT_EQ(pauses.size(), 2u);
    std::vector<int> prios{pauses[0].prio, pauses[1].prio};
    std::sort(prios.begin(), prios.end());
    EXPECT_EQ(prios, (std::vector<int>{2, 3}));
    EXPECT_EQ(d.fab.upward_crossings().at(GuardKey{NodeId{1}, IfaceId{0}, 2}), 1u);
    EXPECT_EQ(d.fab.upward_crossings().at(GuardKey{NodeId{1}, IfaceId{0}, 3}), 1u);
    // Each host priority got its own guard timer.
    EXPECT_EQ(d.fab.guard().max_live_per_key(), 1u);
}

TEST(PfcSwitch, SwitchNeedsTwoInterfaces) {
    Simulator sim;
    Network net(sim, Topology::build(TopologySpec::line(2, {10_ns, kGbps})));
    Fabric fab(net, PfcConfig{}, {NodeId{0}});
    EXPECT_THROW(fab.start(), std::invalid_argument);
}

namespace {

struct FlowRig {
    Simulator sim;
    Network net;
    Fabric fab;

    // Hosts h0..h(k-1) and sink d all hang off switch s. Host links are
    // `fast`, the switch-to-sink link is `slow`.
    FlowRig(int hosts, std::uint64_t fast, std::uint64_t slow, SenderParams params = {})
        : net(sim, Topology::build(spec(hosts, fast, slow))), fab(net, PfcConfig{8, 4, 10_us}, {NodeId{0}}, params) {
        fab.start();
    }

    static TopologySpec spec(int hosts, std::uint64_t fast, std::uint64_t slow) {
        TopologySpec s;
        s.nodes = {"s", "d"};
        s.links.push_back({"s", "d", {200_ns, slow}, 0});
        for (int i = 0; i < hosts; ++i) {
            s.nodes.push_back("h" + std::to_string(i));
            s.links.push_back({"h" + std::to_string(i), "s", {200_ns, fast}, 0});
        }
        return s;
    }

    FlowSpec flow(int host, std::uint64_t id, std::uint64_t bytes, std::uint64_t w0) const {
        return FlowSpec{id, NodeId{static_cast<std::uint32_t>(2 + host)}, NodeId{1}, bytes, {w0, 0}, 3};
    }
};

void expect_sender_safety(const FlowReport& r, std::uint32_t mtu) {
    for (const auto& d : r.decisions) {
        EXPECT_LE(d.inflight, d.window);
        EXPECT_GE(d.window, mtu);
    }
    for (const auto& w : r.windows) EXPECT_GE(w.window, mtu);
    std::uint64_t sent = 0;
    for (const auto& d : r.decisions) sent += d.bytes;
    EXPECT_EQ(sent, r.bytes);
}

}  // namespace

TEST(WindowedSender, UncongestedWindowGrowsMonotonically) {
    FlowRig rig(1, 10 * kGbps, 10 * kGbps);
    auto op = rig.fab.start_flow(rig.flow(0, 1, 50'000, 1000));
    rig.sim.run_to_completion(1'000'000);
    ASSERT_EQ(op.state(), TaskState::Completed);
    const FlowReport& r = op.result();
    ASSERT_FALSE(r.windows.empty());
    for (std::size_t i = 1; i < r.windows.size(); ++i) EXPECT_GT(r.windows[i].window, r.windows[i - 1].window);
    EXPECT_EQ(r.windows.size(), 50u);
    expect_sender_safety(r, 1000);
}

TEST(WindowedSender, CongestedWindowShrinksButNotBelowOneMtu) {
    FlowRig rig(2, 100 * kGbps, kGbps);
    auto a = rig.fab.start_flow(rig.flow(0, 1, 200'000, 16'000));
    auto b = rig.fab.start_flow(rig.flow(1, 2, 200'000, 16'000));
    rig.sim.run_to_completion(10'000'000);
    ASSERT_EQ(a.state(), TaskState::Completed);
    ASSERT_EQ(b.state(), TaskState::Completed);
    for (auto* op : {&a, &b}) {
        const FlowReport& r = op->result();
        expect_sender_safety(r, 1000);
        const auto min_w = std::min_element(r.windows.begin(), r.windows.end(), [](auto& x, auto& y) {
            return x.window < y.window;
        });
        EXPECT_LT(min_w->window, 16'000u);
        bool halved = false;
        for (const auto& w : r.windows) halved |= w.telemetry > rig.fab.sender_params().high_mark;
        EXPECT_TRUE(halved);
    }
}

TEST(WindowedSender, RejectsBadFlows) {
    FlowRig rig(1, kGbps, kGbps);
    EXPECT_THROW(rig.fab.start_flow(rig.flow(0, 1, 0, 1000)), std::invalid_argument);
    EXPECT_THROW(rig.fab.start_flow(rig.flow(0, 1, 10, 999)), std::invalid_argument);
    auto f = rig.flow(0, 1, 10, 1000);
    f.priority = kAckPriority;
    EXPECT_THROW(rig.fab.start_flow(f), std::invalid_argument);
}

TEST(WindowedSenderProperty, SafetyAndCompletionAcrossConfigs) {
    std::mt19937_64 rng(31337);
    for (int round = 0; round < 60; ++round) {
        const int hosts = 1 + static_cast<int>(rng() % 4);
        const std::uint64_t fast = (1 + rng() % 100) * kGbps;
        const std::uint64_t slow = (1 + rng() % 10) * kGbps;
        SenderParams params;
        params.mtu = 500 + static_cast<std::uint32_t>(rng() % 1500);
        params.low_mark = rng() % 4;
        params.high_mark = params.low_mark + rng() % 8;
        FlowRig rig(hosts, fast, slow, params);
        std::vector<Operation<FlowReport>> flows;
        for (int h = 0; h < hosts; ++h) {
            const std::uint64_t bytes = 1 + rng() % 80'000;
            const std::uint64_t w0 = params.mtu * (1 + rng() % 16);
            flows.push_back(rig.fab.start_flow(rig.flow(h, static_cast<std::uint64_t>(h + 1), bytes, w0)));
        }
        ASSERT_EQ(rig.sim.run_to_completion(50'000'000).outcome, RunOutcome::Completed);
        for (auto& f : flows) {
            ASSERT_EQ(f.state(), TaskState::Completed) << "round " << round;
            expect_sender_safety(f.result(), params.mtu);
        }
        EXPECT_LE(rig.fab.guard().max_live_per_key(), 1u);
        EXPECT_TRUE(rig.fab.guard().consistent());
        const auto& c = rig.net.counters();
        EXPECT_EQ(c.queued + c.in_flight, 0u);
    }
}
