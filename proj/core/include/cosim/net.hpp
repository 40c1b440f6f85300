#pragma once

#include "cosim/interop.hpp"
#include "cosim/payload.hpp"
#include "cosim/topology.hpp"

#include <array>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

namespace cosim {

inline constexpr int kPriorities = 8;
/// Control traffic class; never paused by the protocols in this library.
inline constexpr std::uint8_t kControlPriority = 7;

struct Packet {
    NodeId src;
    NodeId dst;
    std::uint32_t size_bytes = 1;
    std::uint8_t priority = 0;
    /// Protocol tag.
    std::uint16_t kind = 0;
    Bytes payload;
    /// Assigned by the network when the packet is sent.
    std::uint64_t id = 0;
};

struct TxDone {
    SimTime at;
    std::uint64_t packet_id = 0;
    bool dropped = false;
};

/// Counters for the conservation identity
/// sent == queued + in_flight + delivered + dropped.
struct NetCounters {
    std::uint64_t sent = 0;
    std::uint64_t queued = 0;
    /// Serializing or propagating.
    std::uint64_t in_flight = 0;
    std::uint64_t delivered = 0;
    std::uint64_t dropped = 0;
};

/// ceil(size_bytes * 8e9 / bandwidth_bps) ticks.
Duration serialization_time(std::uint64_t size_bytes, std::uint64_t bandwidth_bps);

/// Packet-level network over a Topology: per-interface egress with eight
/// strict-priority FIFO classes, one packet serializing per direction,
/// propagation latency, per-interface receive buffers.
///
/// Each transmitted packet costs two kernel events: serialization complete
/// (TxDone delivered inline) and arrival at the peer. The operation forms
/// send()/recv() are the callback forms lifted with from_callback, so both
/// styles execute the same events.
class Network {
public:
    using QueueListener = std::function<void(NodeId, IfaceId, std::uint8_t prio, std::size_t depth)>;

    Network(Simulator& sim, Topology topology);
    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    Simulator& simulation() { return sim_; }
    const Topology& topology() const { return topo_; }

    /// Enqueues `pkt`; `done` runs when its last bit leaves the interface,
    /// or immediately with dropped=true if the class is at capacity.
    void send_cb(NodeId node, IfaceId iface, Packet pkt, std::function<void(TxDone)> done);
    /// One-shot: `on_packet` gets the oldest buffered packet now, or the
    /// next arrival. Pending receivers are served in call order.
    void recv_cb(NodeId node, IfaceId iface, std::function<void(Packet)> on_packet);

    /// Lazy: the packet is enqueued when the operation starts.
    Operation<TxDone> send(NodeId node, IfaceId iface, Packet pkt);
    Operation<Packet> recv(NodeId node, IfaceId iface);

    /// Suppresses dequeue of `prio` on the egress until now + d, replacing
    /// any earlier pause. d == 0 resumes at once.
    void pause_priority(NodeId node, IfaceId iface, std::uint8_t prio, Duration d);
    /// Pauses `prio` until release_priority(), replacing any timed pause.
    void hold_priority(NodeId node, IfaceId iface, std::uint8_t prio);
    /// Ends any pause of `prio` now and restarts the egress.
    void release_priority(NodeId node, IfaceId iface, std::uint8_t prio);
    bool paused(NodeId node, IfaceId iface, std::uint8_t prio) const;
    SimTime paused_until(NodeId node, IfaceId iface, std::uint8_t prio) const;

    /// Packets waiting in the class (excluding one being serialized).
    std::size_t queue_depth(NodeId node, IfaceId iface, std::uint8_t prio) const;
    std::size_t max_queue_depth(NodeId node, IfaceId iface, std::uint8_t prio) const;
    std::size_t rx_buffered(NodeId node, IfaceId iface) const;

    /// Fraction of [0, now] the busier direction of the link spent serializing.
    double link_utilization(LinkId link) const;
    /// Same, for the direction leaving `from`.
    double link_utilization(LinkId link, NodeId from) const;

    /// Limits each class on every egress to `packets` waiting packets.
    void set_queue_capacity(std::optional<std::size_t> packets) { capacity_ = packets; }
    /// A down link drops every packet whose arrival falls while it is down.
    void set_link_up(LinkId link, bool up);
    bool link_up(LinkId link) const { return link_up_.at(link.index()); }

    /// Called after every enqueue and dequeue with the new class depth.
    void set_queue_listener(QueueListener listener) { listener_ = std::move(listener); }

    const NetCounters& counters() const { return counters_; }

private:
    struct Pending {
        Packet pkt;
        std::function<void(TxDone)> done;
    };
    struct Port {
        NodeId node;
        IfaceId iface;
        std::array<std::deque<Pending>, kPriorities> queues;
        std::array<SimTime, kPriorities> paused_until{};
        std::array<std::optional<EventId>, kPriorities> wake{};
        std::array<std::size_t, kPriorities> max_depth{};
        bool busy = false;
        SimTime busy_since;
        std::uint64_t busy_ticks = 0;
        std::deque<Packet> rx;
        std::deque<Callback<Packet>> receivers;
    };

    Port& port(NodeId node, IfaceId iface);
    const Port& port(NodeId node, IfaceId iface) const;
    void try_start(Port& p);
    void finish_tx(Port& p, Pending item, Duration ser);
    void arrive(NodeId node, IfaceId iface, LinkId link, Packet pkt);
    void notify_depth(const Port& p, std::uint8_t prio);
    void cancel_wake(Port& p, std::uint8_t prio);
    void trace_pause(const Port& p, std::uint8_t prio, TraceKind kind);
    std::uint64_t busy_ticks(const Port& p) const;

    Simulator& sim_;
    Topology topo_;
    std::vector<Port> ports_;
    std::vector<bool> link_up_;
    std::optional<std::size_t> capacity_;
    QueueListener listener_;
    NetCounters counters_;
    std::uint64_t next_packet_id_ = 1;
};

}  // namespace cosim
