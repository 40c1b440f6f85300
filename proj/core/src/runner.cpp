#include "cosim/runner.hpp"

#include "cosim/allreduce.hpp"
#include "cosim/fetch_send.hpp"
#include "cosim/pfc.hpp"
#include "cosim/rip.hpp"

#include <algorithm>
#include <deque>
#include <memory>
#include <random>

namespace cosim {

namespace {

std::string describe(const std::exception_ptr& e) {
    try {
        std::rethrow_exception(e);
    } catch (const std::exception& ex) {
        return ex.what();
    } catch (...) {
        return "unknown error";
    }
}

// Awaiting through a non-owning handle resumes inline, so the watcher adds
// no kernel events and both paired styles stay event-for-event equal.
template <class T>
Operation<> note_finish(Operation<T> watched, std::optional<SimTime>* out) {
    co_await watched;
    Simulator& sim = co_await current_simulation();
    *out = sim.now();
}

Operation<pfc::FlowReport> delayed_flow(pfc::Fabric* fab, pfc::FlowSpec flow, Duration start) {
    co_await sleep(start);
    auto op = pfc::windowed_sender(*fab, flow);
    pfc::FlowReport report = co_await std::move(op);
    co_return report;
}

struct Rig {
    Simulator sim;
    std::unique_ptr<Network> net;
    std::vector<Operation<>> watchers;

    NodeId node(const std::string& name) const { return net->topology().node(name); }
};

void collect_queues(const Network& net, RunReport& report) {
    const auto& topo = net.topology();
    for (std::uint32_t n = 0; n < topo.node_count(); ++n) {
        const NodeId node{n};
        for (std::uint32_t i = 0; i < topo.ifaces(node).size(); ++i) {
            for (int p = 0; p < kPriorities; ++p) {
                const auto depth = net.max_queue_depth(node, IfaceId{i}, static_cast<std::uint8_t>(p));
                if (depth > 0) report.queues.push_back({topo.name(node), i, static_cast<std::uint8_t>(p), depth});
            }
        }
    }
}

void fail(RunReport& report, std::string message) {
    if (report.ok) report.error = std::move(message);
    report.ok = false;
}

class ProtocolRun {
public:
    virtual ~ProtocolRun() = default;
    virtual void finish(RunReport& report) = 0;
};

class AllreduceRun final : public ProtocolRun {
public:
    AllreduceRun(Rig& rig, const AllreduceParams& p, std::uint64_t seed) : rig_(rig), p_(p) {
        allreduce::World world;
        for (const auto& name : p.ranks) world.ranks.push_back(rig.node(name));
        world.length = p.length;
        std::vector<allreduce::Vector> inputs;
        if (p.inputs) {
            inputs = *p.inputs;
        } else {
            std::mt19937_64 rng(seed);
            std::uniform_int_distribution<std::int64_t> value(-1000, 1000);
            for (std::size_t r = 0; r < p.ranks.size(); ++r) {
                allreduce::Vector v(p.length);
                for (auto& x : v) x = value(rng);
                inputs.push_back(std::move(v));
            }
        }
        expected_ = allreduce::naive_allreduce_oracle(inputs, p.op);
        finished_.resize(p.ranks.size());
        results_.resize(p.ranks.size());
        if (p.style == Style::Coroutine) {
            ops_ = allreduce::ring_allreduce(*rig.net, world, std::move(inputs), p.op, p.message);
            for (std::size_t r = 0; r < ops_.size(); ++r) {
                rig.watchers.push_back(spawn(rig.sim, note_finish(ops_[r].retain(), &finished_[r])));
            }
        } else {
            allreduce::ring_allreduce_callbacks(*rig.net, world, std::move(inputs), p.op, p.message,
                                                [this](std::size_t rank, allreduce::Vector v) {
                                                    finished_[rank] = rig_.sim.now();
                                                    results_[rank] = std::move(v);
                                                });
        }
    }

    void finish(RunReport& report) override {
        for (std::size_t r = 0; r < finished_.size(); ++r) {
            if (!ops_.empty()) {
                if (ops_[r].state() == TaskState::Completed) {
                    results_[r] = ops_[r].take_result();
                } else if (ops_[r].state() == TaskState::Failed) {
                    fail(report, "rank " + p_.ranks[r] + ": " + describe(ops_[r].error()));
                }
            }
            if (results_[r] && *results_[r] != expected_) fail(report, "rank " + p_.ranks[r] + " disagrees with the fold");
            report.completions.push_back({p_.ranks[r], finished_[r]});
        }
    }

private:
    Rig& rig_;
    const AllreduceParams& p_;
    allreduce::Vector expected_;
    std::vector<Operation<allreduce::Vector>> ops_;
    std::vector<std::optional<SimTime>> finished_;
    std::vector<std::optional<allreduce::Vector>> results_;
};

class HpccRun final : public ProtocolRun {
public:
    HpccRun(Rig& rig, const HpccPfcParams& p) {
        std::vector<NodeId> switches;
        for (const auto& name : p.switches) switches.push_back(rig.node(name));
        fabric_ = std::make_unique<pfc::Fabric>(*rig.net, p.pfc, std::move(switches), p.sender);
        fabric_->start();
        for (const auto& f : p.flows) {
            pfc::FlowSpec spec;
            spec.flow_id = f.id;
            spec.src = rig.node(f.src);
            spec.dst = rig.node(f.dst);
            spec.bytes = f.bytes;
            spec.initial.window_bytes = f.window;
            spec.priority = f.priority;
            names_.push_back("flow " + std::to_string(f.id));
            flows_.push_back(f.start.ticks == 0 ? fabric_->start_flow(spec)
                                                : spawn(rig.sim, delayed_flow(fabric_.get(), spec, f.start)));
        }
    }

    void finish(RunReport& report) override {
        for (std::size_t i = 0; i < flows_.size(); ++i) {
            std::optional<SimTime> finished;
            if (flows_[i].state() == TaskState::Completed) {
                finished = flows_[i].result().finished;
            } else if (flows_[i].state() == TaskState::Failed) {
                fail(report, names_[i] + ": " + describe(flows_[i].error()));
            }
            report.completions.push_back({names_[i], finished});
        }
    }

private:
    std::unique_ptr<pfc::Fabric> fabric_;
    std::vector<Operation<pfc::FlowReport>> flows_;
    std::vector<std::string> names_;
};

class RipRun final : public ProtocolRun {
public:
    RipRun(Rig& rig, const RipParams& p) : rig_(rig) {
        rip_ = std::make_unique<rip::Rip>(*rig.net, p.timers);
        rip_->start_all();
        for (const auto& f : p.failures) {
            const LinkId link{static_cast<std::uint32_t>(f.link)};
            rip_->inject_link_failure(link, SimTime{0} + f.at);
            if (f.repair_at) rip_->repair_link(link, SimTime{0} + *f.repair_at);
        }
    }

    void finish(RunReport& report) override {
        const Network& net = *rig_.net;
        const auto& topo = net.topology();
        const std::size_t n = topo.node_count();
        std::vector<std::vector<NodeId>> adj(n);
        for (std::uint32_t l = 0; l < topo.link_count(); ++l) {
            if (!net.link_up(LinkId{l})) continue;
            const auto& link = topo.link(LinkId{l});
            adj[link.a.index()].push_back(link.b);
            adj[link.b.index()].push_back(link.a);
        }
        RipSummary summary;
        summary.converged_at = rip_->last_change();
        summary.periodic_updates = rip_->stats().periodic_updates;
        summary.triggered_updates = rip_->stats().triggered_updates;
        summary.matches_oracle = true;
        for (std::uint32_t u = 0; u < n; ++u) {
            std::vector<std::uint32_t> dist(n, UINT32_MAX);
            std::deque<std::size_t> queue{u};
            dist[u] = 0;
            while (!queue.empty()) {
                const auto x = queue.front();
                queue.pop_front();
                for (NodeId y : adj[x]) {
                    if (dist[y.index()] == UINT32_MAX) {
                        dist[y.index()] = dist[x] + 1;
                        queue.push_back(y.index());
                    }
                }
            }
            const auto table = rip_->routing_table(NodeId{u});
            std::vector<std::uint32_t> have(n, UINT32_MAX);
            for (const auto& e : table) {
                have[e.dest.index()] = e.metric;
                if (e.metric < rip::kInfinity) ++summary.routes;
            }
            for (std::size_t v = 0; v < n; ++v) {
                const bool reachable = dist[v] < rip::kInfinity;
                const bool ok = reachable ? have[v] == dist[v] : (have[v] == UINT32_MAX || have[v] == rip::kInfinity);
                if (!ok) summary.matches_oracle = false;
            }
        }
        report.rip = summary;
        report.completion = summary.converged_at;
    }

private:
    Rig& rig_;
    std::unique_ptr<rip::Rip> rip_;
};

class FetchSendRun final : public ProtocolRun {
public:
    FetchSendRun(Rig& rig, const FetchSendParams& p, std::uint64_t seed) : rig_(rig), cfg_(p.config) {
        cfg_.seed = seed;
        const demo::FetchSendNodes nodes{rig.node(p.client), rig.node(p.store), rig.node(p.sink)};
        if (p.style == Style::Coroutine) {
            op_ = demo::fetch_and_send(*rig.net, nodes, cfg_);
            rig.watchers.push_back(spawn(rig.sim, note_finish(op_.retain(), &finished_)));
        } else {
            demo::fetch_and_send_callbacks(*rig.net, nodes, cfg_, [this](demo::FetchSendResult r) {
                finished_ = rig_.sim.now();
                result_ = std::move(r);
            });
        }
    }

    void finish(RunReport& report) override {
        if (op_.valid()) {
            if (op_.state() == TaskState::Completed) {
                result_ = op_.take_result();
            } else if (op_.state() == TaskState::Failed) {
                fail(report, describe(op_.error()));
            }
        }
        if (result_) {
            std::uint64_t expected = 0xcbf29ce484222325ULL;
            for (std::uint32_t r = 0; r < cfg_.rounds; ++r) expected = demo::detail::fnv1a(demo::fetch_send_data(cfg_, r), expected);
            report.checksum = result_->checksum;
            if (result_->checksum != expected) fail(report, "sink checksum disagrees with the store's data");
            for (std::size_t r = 0; r < result_->round_done.size(); ++r) {
                report.completions.push_back({"round " + std::to_string(r), result_->round_done[r]});
            }
        }
        for (std::size_t r = report.completions.size(); r < cfg_.rounds; ++r) {
            report.completions.push_back({"round " + std::to_string(r), std::nullopt});
        }
    }

private:
    Rig& rig_;
    demo::FetchSendConfig cfg_;
    Operation<demo::FetchSendResult> op_;
    std::optional<SimTime> finished_;
    std::optional<demo::FetchSendResult> result_;
};

}  // namespace

RunReport run_scenario(const Scenario& s, const RunOptions& opts) {
    RunReport report;
    report.scenario = s.name;
    report.protocol = s.protocol;
    report.seed = opts.seed.value_or(s.seed);

    Rig rig;
    auto& tracer = rig.sim.tracer();
    tracer.enable_default();
    tracer.keep_records(opts.keep_records);
    tracer.stream_to(opts.trace);
    rig.net = std::make_unique<Network>(rig.sim, Topology::build(s.topology.build(report.seed)));

    std::unique_ptr<ProtocolRun> run;
    switch (s.protocol) {
        case Protocol::Allreduce: run = std::make_unique<AllreduceRun>(rig, *s.allreduce, report.seed); break;
        case Protocol::HpccPfc: run = std::make_unique<HpccRun>(rig, *s.hpcc_pfc); break;
        case Protocol::Rip: run = std::make_unique<RipRun>(rig, *s.rip); break;
        case Protocol::FetchSend: run = std::make_unique<FetchSendRun>(rig, *s.fetch_send, report.seed); break;
    }

    const auto until = opts.until ? opts.until : s.until ? std::optional<SimTime>(SimTime{0} + *s.until) : std::nullopt;
    const auto max_events = opts.max_events.value_or(s.max_events);
    try {
        const RunResult result = until ? rig.sim.run(*until, max_events) : rig.sim.run_to_completion(max_events);
        report.outcome = result.outcome;
    } catch (const SimulationError& e) {
        fail(report, e.what());
    }
    report.stats = rig.sim.stats();

    run->finish(report);
    if (s.protocol != Protocol::Rip) {
        const bool all_done = std::all_of(report.completions.begin(), report.completions.end(),
                                          [](const Completion& c) { return c.finished.has_value(); });
        if (all_done && !report.completions.empty()) {
            report.completion = std::max_element(report.completions.begin(), report.completions.end(),
                                                 [](const Completion& a, const Completion& b) {
                                                     return *a.finished < *b.finished;
                                                 })->finished;
        }
    }
    collect_queues(*rig.net, report);
    report.digest = tracer.digest().hex();
    report.trace_records = tracer.emitted();
    if (opts.keep_records) report.records = tracer.records();
    return report;
}

}  // namespace cosim
