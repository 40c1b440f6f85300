#include "cosim/net.hpp"

#include <algorithm>
#include <stdexcept>

namespace cosim {

namespace {
__extension__ typedef unsigned __int128 u128;
}  // namespace

Duration serialization_time(std::uint64_t size_bytes, std::uint64_t bandwidth_bps) {
    if (bandwidth_bps == 0) throw std::invalid_argument("bandwidth must be positive");
    const u128 bits_ns = static_cast<u128>(size_bytes) * 8u * 1'000'000'000u;
    const u128 ticks = (bits_ns + bandwidth_bps - 1) / bandwidth_bps;
    return Duration{static_cast<std::int64_t>(ticks)};
}

Network::Network(Simulator& sim, Topology topology)
    : sim_(sim), topo_(std::move(topology)), ports_(topo_.port_count()), link_up_(topo_.link_count(), true) {
    for (std::size_t n = 0; n < topo_.node_count(); ++n) {
        const NodeId node{static_cast<std::uint32_t>(n)};
        for (std::size_t i = 0; i < topo_.ifaces(node).size(); ++i) {
            const IfaceId iface{static_cast<std::uint32_t>(i)};
            auto& p = ports_[topo_.port_index(node, iface)];
            p.node = node;
            p.iface = iface;
        }
    }
}

Network::Port& Network::port(NodeId node, IfaceId iface) {
    topo_.iface(node, iface);
    return ports_[topo_.port_index(node, iface)];
}

const Network::Port& Network::port(NodeId node, IfaceId iface) const {
    topo_.iface(node, iface);
    return ports_[topo_.port_index(node, iface)];
}

void Network::send_cb(NodeId node, IfaceId iface, Packet pkt, std::function<void(TxDone)> done) {
    if (pkt.priority >= kPriorities) throw std::invalid_argument("packet priority out of range");
    if (pkt.size_bytes == 0) throw std::invalid_argument("packet size must be at least one byte");
    Port& p = port(node, iface);
    pkt.id = next_packet_id_++;
    ++counters_.sent;
    auto& q = p.queues[pkt.priority];
    if (capacity_ && q.size() >= *capacity_) {
        ++counters_.dropped;
        sim_.tracer()
            .record(sim_.now(), TraceKind::Drop)
            .attr("node", topo_.name(node))
            .attr("iface", iface.value)
            .attr("pkt", pkt.id)
            .attr("reason", "overflow");
        if (done) done(TxDone{sim_.now(), pkt.id, true});
        return;
    }
    const std::uint8_t prio = pkt.priority;
    q.push_back(Pending{std::move(pkt), std::move(done)});
    ++counters_.queued;
    p.max_depth[prio] = std::max(p.max_depth[prio], q.size());
    notify_depth(p, prio);
    try_start(p);
}

void Network::recv_cb(NodeId node, IfaceId iface, std::function<void(Packet)> on_packet) {
    Port& p = port(node, iface);
    Callback<Packet> cb = Callback<Packet>::direct(std::move(on_packet), {});
    if (!p.rx.empty()) {
        Packet pkt = std::move(p.rx.front());
        p.rx.pop_front();
        cb(std::move(pkt));
        return;
    }
    p.receivers.push_back(std::move(cb));
}

Operation<TxDone> Network::send(NodeId node, IfaceId iface, Packet pkt) {
    return from_callback<TxDone>([this, node, iface, pkt = std::move(pkt)](Callback<TxDone> cb) mutable {
        send_cb(node, iface, std::move(pkt), [cb](TxDone d) { cb(d); });
    });
}

Operation<Packet> Network::recv(NodeId node, IfaceId iface) {
    return from_callback<Packet>([this, node, iface](Callback<Packet> cb) {
        Port& p = port(node, iface);
        if (!p.rx.empty()) {
            Packet pkt = std::move(p.rx.front());
            p.rx.pop_front();
            cb(std::move(pkt));
            return;
        }
        p.receivers.push_back(std::move(cb));
    });
}

void Network::try_start(Port& p) {
    if (p.busy) return;
    const SimTime now = sim_.now();
    for (int prio = kPriorities - 1; prio >= 0; --prio) {
        auto& q = p.queues[prio];
        if (q.empty() || p.paused_until[prio] > now) continue;
        Pending item = std::move(q.front());
        q.pop_front();
        --counters_.queued;
        ++counters_.in_flight;
        p.busy = true;
        p.busy_since = now;
        const auto& link = topo_.link(topo_.iface(p.node, p.iface).link);
        const Duration ser = serialization_time(item.pkt.size_bytes, link.config.bandwidth_bps);
        sim_.tracer()
            .record(now, TraceKind::Tx)
            .attr("node", topo_.name(p.node))
            .attr("iface", p.iface.value)
            .attr("prio", prio)
            .attr("pkt", item.pkt.id)
            .attr("size", item.pkt.size_bytes)
            .attr("proto", std::uint32_t{item.pkt.kind});
        notify_depth(p, static_cast<std::uint8_t>(prio));
        sim_.schedule(ser, [this, &p, item = std::move(item), ser]() mutable { finish_tx(p, std::move(item), ser); });
        return;
    }
}

void Network::finish_tx(Port& p, Pending item, Duration ser) {
    p.busy = false;
    p.busy_ticks += static_cast<std::uint64_t>(ser.ticks);
    const auto& ifc = topo_.iface(p.node, p.iface);
    const auto latency = topo_.link(ifc.link).config.latency;
    const TxDone done{sim_.now(), item.pkt.id, false};
    sim_.schedule(latency, [this, peer = ifc.peer, peer_iface = ifc.peer_iface, link = ifc.link,
                            pkt = std::move(item.pkt)]() mutable { arrive(peer, peer_iface, link, std::move(pkt)); });
    if (item.done) item.done(done);
    try_start(p);
}

void Network::arrive(NodeId node, IfaceId iface, LinkId link, Packet pkt) {
    --counters_.in_flight;
    if (!link_up_[link.index()]) {
        ++counters_.dropped;
        sim_.tracer()
            .record(sim_.now(), TraceKind::Drop)
            .attr("node", topo_.name(node))
            .attr("iface", iface.value)
            .attr("pkt", pkt.id)
            .attr("reason", "link-down");
        return;
    }
    ++counters_.delivered;
    sim_.tracer()
        .record(sim_.now(), TraceKind::Rx)
        .attr("node", topo_.name(node))
        .attr("iface", iface.value)
        .attr("pkt", pkt.id)
        .attr("src", topo_.name(pkt.src))
        .attr("dst", topo_.name(pkt.dst));
    Port& p = port(node, iface);
    while (!p.receivers.empty()) {
        Callback<Packet> cb = std::move(p.receivers.front());
        p.receivers.pop_front();
        if (cb.active()) {
            cb(std::move(pkt));
            return;
        }
    }
    p.rx.push_back(std::move(pkt));
}

void Network::pause_priority(NodeId node, IfaceId iface, std::uint8_t prio, Duration d) {
    if (prio >= kPriorities) throw std::invalid_argument("priority out of range");
    if (d.negative()) throw std::invalid_argument("negative pause duration");
    Port& p = port(node, iface);
    p.paused_until[prio] = sim_.now() + d;
    cancel_wake(p, prio);
    if (d.ticks == 0) {
        trace_pause(p, prio, TraceKind::Resume);
        try_start(p);
        return;
    }
    trace_pause(p, prio, TraceKind::Pause);
    p.wake[prio] = sim_.schedule(d, [this, &p, prio] {
        p.wake[prio].reset();
        trace_pause(p, prio, TraceKind::Resume);
        try_start(p);
    });
}

void Network::hold_priority(NodeId node, IfaceId iface, std::uint8_t prio) {
    if (prio >= kPriorities) throw std::invalid_argument("priority out of range");
    Port& p = port(node, iface);
    p.paused_until[prio] = SimTime::max();
    cancel_wake(p, prio);
    trace_pause(p, prio, TraceKind::Pause);
}

void Network::release_priority(NodeId node, IfaceId iface, std::uint8_t prio) {
    if (prio >= kPriorities) throw std::invalid_argument("priority out of range");
    Port& p = port(node, iface);
    p.paused_until[prio] = sim_.now();
    cancel_wake(p, prio);
    trace_pause(p, prio, TraceKind::Resume);
    try_start(p);
}

void Network::cancel_wake(Port& p, std::uint8_t prio) {
    if (auto& w = p.wake[prio]) {
        sim_.cancel(*w);
        w.reset();
    }
}

void Network::trace_pause(const Port& p, std::uint8_t prio, TraceKind kind) {
    auto rec = sim_.tracer().record(sim_.now(), kind);
    rec.attr("node", topo_.name(p.node)).attr("iface", p.iface.value).attr("prio", std::uint32_t{prio});
    if (kind != TraceKind::Pause) return;
    if (p.paused_until[prio] == SimTime::max()) {
        rec.attr("until", "held");
    } else {
        rec.attr("until", p.paused_until[prio].ticks);
    }
}

bool Network::paused(NodeId node, IfaceId iface, std::uint8_t prio) const {
    return paused_until(node, iface, prio) > sim_.now();
}

SimTime Network::paused_until(NodeId node, IfaceId iface, std::uint8_t prio) const {
    return port(node, iface).paused_until.at(prio);
}

std::size_t Network::queue_depth(NodeId node, IfaceId iface, std::uint8_t prio) const {
    return port(node, iface).queues.at(prio).size();
}

std::size_t Network::max_queue_depth(NodeId node, IfaceId iface, std::uint8_t prio) const {
    return port(node, iface).max_depth.at(prio);
}

std::size_t Network::rx_buffered(NodeId node, IfaceId iface) const { return port(node, iface).rx.size(); }

std::uint64_t Network::busy_ticks(const Port& p) const {
    std::uint64_t t = p.busy_ticks;
    if (p.busy) t += sim_.now().ticks - p.busy_since.ticks;
    return t;
}

double Network::link_utilization(LinkId link, NodeId from) const {
    const auto& l = topo_.link(link);
    if (from != l.a && from != l.b) throw TopologyError("node is not an endpoint of the link");
    const Port& p = from == l.a ? port(l.a, l.a_iface) : port(l.b, l.b_iface);
    const auto now = sim_.now().ticks;
    if (now == 0) return 0.0;
    return static_cast<double>(busy_ticks(p)) / static_cast<double>(now);
}

double Network::link_utilization(LinkId link) const {
    const auto& l = topo_.link(link);
    return std::max(link_utilization(link, l.a), link_utilization(link, l.b));
}

void Network::set_link_up(LinkId link, bool up) { link_up_.at(link.index()) = up; }

void Network::notify_depth(const Port& p, std::uint8_t prio) {
    if (listener_) listener_(p.node, p.iface, prio, p.queues[prio].size());
}

}  // namespace cosim
