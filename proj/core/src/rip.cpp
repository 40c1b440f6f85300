#include "cosim/rip.hpp"

#include "cosim/combinators.hpp"

#include <algorithm>
#include <stdexcept>

namespace cosim::rip {

namespace {

constexpr std::uint32_t kHeaderBytes = 4;
constexpr std::uint32_t kEntryBytes = 20;

Operation<> router_body(std::vector<Operation<>> tasks) { co_await all(std::move(tasks)); }

std::string_view to_string(RouteChange c) {
    switch (c) {
        case RouteChange::Learned: return "learned";
        case RouteChange::Updated: return "updated";
        case RouteChange::TimedOut: return "timeout";
        case RouteChange::Collected: return "gc";
    }
    return "?";
}

}  // namespace

void RipTimers::validate() const {
    if (update_period.ticks <= 0 || route_timeout.ticks <= 0 || gc_timeout.ticks <= 0) {
        throw std::invalid_argument("rip timers must be positive");
    }
    if (route_timeout <= update_period) throw std::invalid_argument("rip route_timeout must exceed update_period");
}

Rip::Rip(Network& net, RipTimers timers) : net_(net), timers_(timers) {
    timers_.validate();
    const auto n = net_.topology().node_count();
    for (std::size_t i = 0; i < n; ++i) {
        auto r = std::make_unique<Router>();
        r->self = NodeId{static_cast<std::uint32_t>(i)};
        RouteEntry self;
        self.dest = r->self;
        self.next_hop = r->self;
        self.metric = 0;
        r->table.emplace(r->self.value, self);
        routers_.push_back(std::move(r));
    }
}

Operation<> advertiser(Rip* rip, Rip::Router* r) {
    Simulator& sim = rip->net_.simulation();
    SimTime next_periodic = sim.now();
    for (;;) {
        const SimTime now = sim.now();
        if (now >= next_periodic) {
            r->dirty = false;
            ++rip->stats_.periodic_updates;
            rip->advertise(*r);
            next_periodic = now + rip->timers_.update_period;
            continue;
        }
        if (!r->dirty) {
            co_await with_timeout(r->trigger.wait(), next_periodic - now);
            continue;
        }
        if (r->last_triggered == now) {
            // One triggered update per instant; the rest go out one tick later.
            co_await sleep(Duration{1});
            continue;
        }
        // Let every change made at this instant land first.
        co_await yield_now();
        r->dirty = false;
        r->last_triggered = sim.now();
        ++rip->stats_.triggered_updates;
        rip->advertise(*r);
    }
}

Operation<> receiver(Rip* rip, Rip::Router* r, IfaceId iface) {
    for (;;) {
        Packet pkt = co_await rip->net_.recv(r->self, iface);
        if (pkt.kind == kRipKind) rip->absorb(*r, iface, pkt);
    }
}

Operation<> sweeper(Rip* rip, Rip::Router* r) {
    Simulator& sim = rip->net_.simulation();
    for (;;) {
        const auto next = rip->sweep(*r);
        if (next) {
            co_await with_timeout(r->changed.wait(), *next - sim.now());
        } else {
            co_await r->changed.wait();
        }
    }
}

Operation<> Rip::start_rip(NodeId node) {
    Router& r = *routers_.at(node.index());
    if (r.started) throw ContractViolation("rip already running on " + net_.topology().name(node));
    r.started = true;
    std::vector<Operation<>> tasks;
    tasks.push_back(advertiser(this, &r));
    const auto ifaces = net_.topology().ifaces(node);
    for (std::size_t i = 0; i < ifaces.size(); ++i) {
        tasks.push_back(receiver(this, &r, IfaceId{static_cast<std::uint32_t>(i)}));
    }
    tasks.push_back(sweeper(this, &r));
    return spawn(net_.simulation(), router_body(std::move(tasks)));
}

void Rip::start_all() {
    for (std::size_t i = 0; i < routers_.size(); ++i) {
        running_.push_back(start_rip(NodeId{static_cast<std::uint32_t>(i)}));
    }
}

void Rip::advertise(Router& r) {
    const auto& topo = net_.topology();
    const auto ifaces = topo.ifaces(r.self);
    for (std::size_t i = 0; i < ifaces.size(); ++i) {
        const NodeId neighbour = ifaces[i].peer;
        PayloadWriter w;
        w.u32(static_cast<std::uint32_t>(r.table.size()));
        for (const auto& [dest, e] : r.table) {
            const bool poisoned = e.dest != r.self && e.next_hop == neighbour;
            w.u32(e.dest.value).u32(poisoned ? kInfinity : e.metric);
        }
        Packet pkt;
        pkt.src = r.self;
        pkt.dst = neighbour;
        pkt.size_bytes = kHeaderBytes + kEntryBytes * static_cast<std::uint32_t>(r.table.size());
        pkt.priority = kControlPriority;
        pkt.kind = kRipKind;
        pkt.payload = w.take();
        Operation<TxDone> send = spawn(net_.simulation(), net_.send(r.self, IfaceId{static_cast<std::uint32_t>(i)}, std::move(pkt)));
        (void)send;
    }
}

void Rip::absorb(Router& r, IfaceId iface, const Packet& pkt) {
    ++stats_.messages_received;
    const NodeId from = net_.topology().iface(r.self, iface).peer;
    const SimTime now = net_.simulation().now();
    PayloadReader in(pkt.payload);
    const std::uint32_t count = in.u32();
    bool changed = false;
    for (std::uint32_t k = 0; k < count; ++k) {
        const NodeId dest{in.u32()};
        const std::uint32_t metric = std::min(in.u32() + 1, kInfinity);
        if (dest == r.self || dest.index() >= routers_.size()) continue;
        auto it = r.table.find(dest.value);
        if (it == r.table.end()) {
            if (metric >= kInfinity) continue;
            RouteEntry e{dest, from, metric, now, std::nullopt};
            r.table.emplace(dest.value, e);
            note(r, e, RouteChange::Learned);
            changed = true;
            continue;
        }
        RouteEntry& e = it->second;
        if (e.next_hop == from) {
            if (metric < kInfinity) e.last_refresh = now;
            if (metric == e.metric) continue;
            e.metric = metric;
            e.gc_deadline = metric >= kInfinity ? std::optional<SimTime>(now + timers_.gc_timeout) : std::nullopt;
            note(r, e, RouteChange::Updated);
            changed = true;
        } else if (metric < e.metric) {
            e.next_hop = from;
            e.metric = metric;
            e.last_refresh = now;
            e.gc_deadline.reset();
            note(r, e, RouteChange::Updated);
            changed = true;
        }
    }
    if (changed) mark_changed(r);
}

std::optional<SimTime> Rip::sweep(Router& r) {
    const SimTime now = net_.simulation().now();
    bool changed = false;
    std::optional<SimTime> next;
    for (auto it = r.table.begin(); it != r.table.end();) {
        RouteEntry& e = it->second;
        if (e.dest == r.self) {
            ++it;
            continue;
        }
        if (e.metric < kInfinity && now >= e.last_refresh + timers_.route_timeout) {
            e.metric = kInfinity;
            e.gc_deadline = now + timers_.gc_timeout;
            note(r, e, RouteChange::TimedOut);
            changed = true;
        } else if (e.metric >= kInfinity && e.gc_deadline && now >= *e.gc_deadline) {
            note(r, e, RouteChange::Collected);
            it = r.table.erase(it);
            continue;
        }
        const SimTime due = e.metric < kInfinity ? e.last_refresh + timers_.route_timeout : *e.gc_deadline;
        if (!next || due < *next) next = due;
        ++it;
    }
    if (changed) {
        r.dirty = true;
        r.trigger.notify_all();
    }
    return next;
}

void Rip::mark_changed(Router& r) {
    r.dirty = true;
    r.trigger.notify_all();
    r.changed.notify_all();
}

void Rip::note(Router& r, const RouteEntry& e, RouteChange change) {
    const SimTime now = net_.simulation().now();
    log_.push_back(RouteEvent{now, r.self, e.dest, change, e.metric, e.next_hop});
    const auto& topo = net_.topology();
    net_.simulation()
        .tracer()
        .record(now, TraceKind::RouteUpdate)
        .attr("node", topo.name(r.self))
        .attr("dest", topo.name(e.dest))
        .attr("metric", e.metric)
        .attr("via", topo.name(e.next_hop))
        .attr("change", to_string(change));
}

void Rip::inject_link_failure(LinkId link, SimTime at) {
    net_.topology().link(link);
    const SimTime now = net_.simulation().now();
    if (at < now) throw std::invalid_argument("link failure scheduled in the past");
    net_.simulation().schedule(at - now, [this, link] { net_.set_link_up(link, false); });
}

void Rip::repair_link(LinkId link, SimTime at) {
    net_.topology().link(link);
    const SimTime now = net_.simulation().now();
    if (at < now) throw std::invalid_argument("link repair scheduled in the past");
    net_.simulation().schedule(at - now, [this, link] { net_.set_link_up(link, true); });
}

std::vector<RouteEntry> Rip::routing_table(NodeId node) const {
    const Router& r = *routers_.at(node.index());
    std::vector<RouteEntry> out;
    out.reserve(r.table.size());
    for (const auto& [dest, e] : r.table) out.push_back(e);
    return out;
}

std::optional<NodeId> Rip::forward_next_hop(NodeId node, NodeId dest) const {
    const Router& r = *routers_.at(node.index());
    auto it = r.table.find(dest.value);
    if (it == r.table.end() || it->second.metric >= kInfinity) return std::nullopt;
    return it->second.next_hop;
}

std::optional<SimTime> Rip::last_change() const {
    if (log_.empty()) return std::nullopt;
    return log_.back().at;
}

}  // namespace cosim::rip
