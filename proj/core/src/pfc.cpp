#include "cosim/pfc.hpp"

#include "cosim/combinators.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>

namespace cosim::pfc {

namespace {

template <class T>
void detach(Operation<T> op) {
    (void)op;
}

struct DataHeader {
    std::uint64_t flow_id = 0;
    std::uint64_t seq = 0;
    std::uint32_t bytes = 0;
    std::uint64_t telemetry = 0;
};

Bytes encode(const DataHeader& h) {
    return PayloadWriter{}.u64(h.flow_id).u64(h.seq).u32(h.bytes).u64(h.telemetry).take();
}

DataHeader decode(const Bytes& b) {
    PayloadReader r(b);
    DataHeader h;
    h.flow_id = r.u64();
    h.seq = r.u64();
    h.bytes = r.u32();
    h.telemetry = r.u64();
    return h;
}

Operation<> loops_body(std::vector<Operation<>> loops) { co_await all(std::move(loops)); }

}  // namespace

void PfcConfig::validate() const {
    if (xon_threshold >= xoff_threshold) throw std::invalid_argument("pfc: xon_threshold must be below xoff_threshold");
    if (pause_quanta.ticks <= 0) throw std::invalid_argument("pfc: pause_quanta must be positive");
}

void SenderParams::validate() const {
    if (mtu == 0) throw std::invalid_argument("sender: mtu must be positive");
    if (low_mark > high_mark) throw std::invalid_argument("sender: low_mark must not exceed high_mark");
}

// --- PauseGuard -------------------------------------------------------------

Operation<> guard_timer(PauseGuard* guard, GuardKey key, Duration quanta) {
    co_await sleep(quanta);
    guard->expire(key);
}

void PauseGuard::on_frame(GuardKey key, Duration quanta) {
    if (quanta.negative()) throw std::invalid_argument("pause frame with negative quanta");
    Slot& slot = slots_[key];
    const bool was_live = slot.live > 0;
    if (was_live) {
        slot.timer.abort();
        --slot.live;
        ++aborted_;
    }
    if (quanta.ticks == 0) {
        net_.release_priority(key.node, key.iface, key.prio);
        note(key, GuardAction::Resume);
        return;
    }
    if (!was_live) net_.hold_priority(key.node, key.iface, key.prio);
    note(key, was_live ? GuardAction::Refresh : GuardAction::Pause);
    slot.timer = spawn(net_.simulation(), guard_timer(this, key, quanta));
    ++slot.live;
    max_live_ = std::max(max_live_, slot.live);
}

void PauseGuard::expire(GuardKey key) {
    Slot& slot = slots_.at(key);
    --slot.live;
    net_.release_priority(key.node, key.iface, key.prio);
    note(key, GuardAction::Expire);
}

void PauseGuard::note(GuardKey key, GuardAction action) {
    log_.push_back(GuardEvent{net_.simulation().now(), key, action});
}

std::size_t PauseGuard::live_timers() const {
    std::size_t n = 0;
    for (const auto& [key, slot] : slots_) n += slot.live;
    return n;
}

std::size_t PauseGuard::live_timers(GuardKey key) const {
    auto it = slots_.find(key);
    return it == slots_.end() ? 0 : it->second.live;
}

bool PauseGuard::consistent() const {
    for (const auto& [key, slot] : slots_) {
        if (slot.live > 1) return false;
        const bool running = slot.timer.valid() && !slot.timer.done();
        if (running != (slot.live == 1)) return false;
    }
    return true;
}

void pfc_guard(PauseGuard& guard, NodeId node, IfaceId iface, std::uint8_t prio, Duration quanta) {
    guard.on_frame(GuardKey{node, iface, prio}, quanta);
}

// --- Fabric -----------------------------------------------------------------

Fabric::Fabric(Network& net, PfcConfig cfg, std::vector<NodeId> switches, SenderParams sender)
    : net_(net), cfg_(cfg), sender_(sender), guard_(net) {
    cfg_.validate();
    sender_.validate();
    const auto& topo = net_.topology();
    const std::size_t n = topo.node_count();
    is_switch_.assign(n, false);
    for (NodeId s : switches) is_switch_.at(s.index()) = true;

    // BFS from every destination; the next hop is the lowest interface whose
    // peer is one hop closer.
    next_hop_.assign(n, std::vector<std::optional<IfaceId>>(n));
    for (std::size_t d = 0; d < n; ++d) {
        std::vector<std::uint32_t> dist(n, UINT32_MAX);
        std::deque<std::size_t> frontier{d};
        dist[d] = 0;
        while (!frontier.empty()) {
            const std::size_t u = frontier.front();
            frontier.pop_front();
            for (const auto& ifc : topo.ifaces(NodeId{static_cast<std::uint32_t>(u)})) {
                if (dist[ifc.peer.index()] != UINT32_MAX) continue;
                dist[ifc.peer.index()] = dist[u] + 1;
                frontier.push_back(ifc.peer.index());
            }
        }
        for (std::size_t u = 0; u < n; ++u) {
            if (u == d || dist[u] == UINT32_MAX) continue;
            const auto ifcs = topo.ifaces(NodeId{static_cast<std::uint32_t>(u)});
            for (std::size_t i = 0; i < ifcs.size(); ++i) {
                if (dist[ifcs[i].peer.index()] + 1 == dist[u]) {
                    next_hop_[u][d] = IfaceId{static_cast<std::uint32_t>(i)};
                    break;
                }
            }
        }
    }
}

IfaceId Fabric::next_hop(NodeId from, NodeId dst) const {
    const auto& hop = next_hop_.at(from.index()).at(dst.index());
    if (!hop) {
        const auto& topo = net_.topology();
        throw TopologyError("no route from " + topo.name(from) + " to " + topo.name(dst));
    }
    return *hop;
}

void Fabric::start() {
    if (started_) throw ContractViolation("fabric already started");
    started_ = true;
    Simulator& sim = net_.simulation();
    for (std::size_t i = 0; i < net_.topology().node_count(); ++i) {
        const NodeId node{static_cast<std::uint32_t>(i)};
        if (net_.topology().ifaces(node).empty()) continue;
        loops_.push_back(spawn(sim, is_switch(node) ? run_switch(*this, node) : run_host(*this, node)));
    }
}

Operation<FlowReport> Fabric::start_flow(const FlowSpec& flow) {
    if (!started_) throw ContractViolation("start the fabric before its flows");
    return spawn(net_.simulation(), windowed_sender(*this, flow));
}

std::uint32_t Fabric::occupancy(NodeId sw, IfaceId ingress, std::uint8_t prio) const {
    auto it = occupancy_.find(GuardKey{sw, ingress, prio});
    return it == occupancy_.end() ? 0 : it->second;
}

Mailbox<Fabric::Ack>& Fabric::ack_box(std::uint64_t flow_id) {
    auto& slot = acks_[flow_id];
    if (!slot) slot = std::make_unique<Mailbox<Ack>>();
    return *slot;
}

Operation<> node_loop(Fabric* fab, NodeId node, IfaceId iface) {
    for (;;) {
        Packet pkt = co_await fab->net_.recv(node, iface);
        fab->handle(node, iface, std::move(pkt));
    }
}

Operation<> forward(Fabric* fab, NodeId node, IfaceId ingress, IfaceId egress, Packet pkt) {
    const std::uint8_t prio = pkt.priority;
    co_await fab->net_.send(node, egress, std::move(pkt));
    fab->on_depart(node, ingress, prio);
}

void Fabric::handle(NodeId node, IfaceId iface, Packet pkt) {
    Simulator& sim = net_.simulation();
    if (pkt.kind == kPauseKind) {
        PayloadReader r(pkt.payload);
        const auto prio = static_cast<std::uint8_t>(r.u32());
        const Duration quanta{r.i64()};
        guard_.on_frame(GuardKey{node, iface, prio}, quanta);
        return;
    }
    if (pkt.dst == node) {
        if (pkt.kind == kDataKind) {
            const DataHeader h = decode(pkt.payload);
            Packet ack;
            ack.src = node;
            ack.dst = pkt.src;
            ack.size_bytes = kControlBytes;
            ack.priority = kAckPriority;
            ack.kind = kAckKind;
            ack.payload = encode(h);
            detach(spawn(sim, net_.send(node, next_hop(node, pkt.src), std::move(ack))));
        } else if (pkt.kind == kAckKind) {
            const DataHeader h = decode(pkt.payload);
            ack_box(h.flow_id).send(Ack{h.seq, h.bytes, h.telemetry});
        }
        return;
    }
    const IfaceId egress = next_hop(node, pkt.dst);
    if (!is_switch(node)) {
        detach(spawn(sim, net_.send(node, egress, std::move(pkt))));
        return;
    }
    if (pkt.kind == kDataKind) {
        DataHeader h = decode(pkt.payload);
        h.telemetry = std::max<std::uint64_t>(h.telemetry, net_.queue_depth(node, egress, pkt.priority));
        pkt.payload = encode(h);
    }
    on_admit(node, iface, pkt.priority);
    detach(spawn(sim, forward(this, node, iface, egress, std::move(pkt))));
}

void Fabric::on_admit(NodeId sw, IfaceId ingress, std::uint8_t prio) {
    const GuardKey key{sw, ingress, prio};
    if (++occupancy_[key] == cfg_.xoff_threshold) {
        ++crossings_[key];
        asserted_[key] = true;
        send_frame(sw, ingress, prio, cfg_.pause_quanta);
    }
}

void Fabric::on_depart(NodeId sw, IfaceId ingress, std::uint8_t prio) {
    const GuardKey key{sw, ingress, prio};
    const std::uint32_t occ = --occupancy_[key];
    if (occ < cfg_.xon_threshold && asserted_[key]) {
        asserted_[key] = false;
        send_frame(sw, ingress, prio, Duration{0});
    }
}

void Fabric::send_frame(NodeId node, IfaceId iface, std::uint8_t prio, Duration quanta) {
    Packet frame;
    frame.src = node;
    frame.dst = net_.topology().iface(node, iface).peer;
    frame.size_bytes = kControlBytes;
    frame.priority = kControlPriority;
    frame.kind = kPauseKind;
    frame.payload = PayloadWriter{}.u32(prio).i64(quanta.ticks).take();
    emissions_.push_back(PfcEmission{net_.simulation().now(), node, iface, prio, quanta});
    detach(spawn(net_.simulation(), net_.send(node, iface, std::move(frame))));
}

Operation<> run_switch(Fabric& fab, NodeId node) {
    const auto ifaces = fab.network().topology().ifaces(node);
    if (ifaces.size() < 2) throw std::invalid_argument("a switch needs at least two interfaces");
    std::vector<Operation<>> loops;
    for (std::size_t i = 0; i < ifaces.size(); ++i) {
        loops.push_back(node_loop(&fab, node, IfaceId{static_cast<std::uint32_t>(i)}));
    }
    return loops_body(std::move(loops));
}

Operation<> run_host(Fabric& fab, NodeId node) {
    const auto ifaces = fab.network().topology().ifaces(node);
    std::vector<Operation<>> loops;
    for (std::size_t i = 0; i < ifaces.size(); ++i) {
        loops.push_back(node_loop(&fab, node, IfaceId{static_cast<std::uint32_t>(i)}));
    }
    return loops_body(std::move(loops));
}

// --- Sender -----------------------------------------------------------------

Operation<FlowReport> sender_body(Fabric* fab, FlowSpec flow) {
    Network& net = fab->net_;
    Simulator& sim = net.simulation();
    const SenderParams& params = fab->sender_;
    const IfaceId out = fab->next_hop(flow.src, flow.dst);
    auto& acks = fab->ack_box(flow.flow_id);

    FlowReport report;
    report.flow_id = flow.flow_id;
    report.bytes = flow.bytes;
    report.started = sim.now();
    std::uint64_t window = flow.initial.window_bytes;
    std::uint64_t inflight = flow.initial.inflight_bytes;
    std::uint64_t next = 0;
    std::uint64_t acked = 0;

    while (acked < flow.bytes) {
        while (next < flow.bytes) {
            const auto seg = static_cast<std::uint32_t>(std::min<std::uint64_t>(params.mtu, flow.bytes - next));
            if (inflight + seg > window) break;
            inflight += seg;
            report.decisions.push_back(SendDecision{sim.now(), next, seg, inflight, window});
            Packet pkt;
            pkt.src = flow.src;
            pkt.dst = flow.dst;
            pkt.size_bytes = seg;
            pkt.priority = flow.priority;
            pkt.kind = kDataKind;
            pkt.payload = encode(DataHeader{flow.flow_id, next, seg, 0});
            next += seg;
            co_await net.send(flow.src, out, std::move(pkt));
        }
        const Fabric::Ack ack = co_await acks.recv();
        inflight -= ack.bytes;
        acked += ack.bytes;
        if (ack.telemetry > params.high_mark) {
            window = std::max<std::uint64_t>(params.mtu, window / 2);
        } else if (ack.telemetry < params.low_mark) {
            window += params.mtu;
        }
        report.windows.push_back(WindowSample{sim.now(), window, ack.telemetry});
    }
    report.finished = sim.now();
    co_return report;
}

Operation<FlowReport> windowed_sender(Fabric& fab, const FlowSpec& flow) {
    if (flow.bytes == 0) throw std::invalid_argument("flow size must be positive");
    if (flow.initial.window_bytes < fab.sender_params().mtu) {
        throw std::invalid_argument("initial window must be at least one MTU");
    }
    if (flow.initial.inflight_bytes != 0) throw std::invalid_argument("a new flow starts with nothing in flight");
    if (flow.priority >= kAckPriority) throw std::invalid_argument("flow priority collides with control traffic");
    return sender_body(&fab, flow);
}

}  // namespace cosim::pfc
