#pragma once

#include "cosim/net.hpp"
#include "cosim/sync.hpp"

#include <map>
#include <memory>
#include <optional>
#include <tuple>
#include <vector>

namespace cosim::pfc {

inline constexpr std::uint16_t kDataKind = 0x20;
inline constexpr std::uint16_t kAckKind = 0x21;
inline constexpr std::uint16_t kPauseKind = 0x22;

inline constexpr std::uint8_t kAckPriority = 6;
inline constexpr std::uint32_t kControlBytes = 64;

struct PfcConfig {
    /// Ingress occupancy (packets) at which a pause frame goes upstream.
    std::uint32_t xoff_threshold = 8;
    /// Occupancy below which a resume frame follows an earlier pause.
    std::uint32_t xon_threshold = 4;
    Duration pause_quanta{10'000};

    /// Throws std::invalid_argument unless xon < xoff and quanta > 0.
    void validate() const;
};

struct SenderWindow {
    std::uint64_t window_bytes = 0;
    std::uint64_t inflight_bytes = 0;
};

struct SenderParams {
    std::uint32_t mtu = 1000;
    /// Telemetry depth (packets) above which the window halves.
    std::uint64_t high_mark = 6;
    /// Telemetry depth below which the window grows by one MTU.
    std::uint64_t low_mark = 2;

    void validate() const;
};

struct FlowSpec {
    std::uint64_t flow_id = 0;
    NodeId src;
    NodeId dst;
    std::uint64_t bytes = 0;
    SenderWindow initial{};
    std::uint8_t priority = 3;
};

struct SendDecision {
    SimTime at;
    std::uint64_t seq = 0;
    std::uint32_t bytes = 0;
    /// Inflight and window right after the decision.
    std::uint64_t inflight = 0;
    std::uint64_t window = 0;
};

struct WindowSample {
    SimTime at;
    std::uint64_t window = 0;
    std::uint64_t telemetry = 0;
};

struct FlowReport {
    std::uint64_t flow_id = 0;
    std::uint64_t bytes = 0;
    SimTime started;
    SimTime finished;
    std::vector<SendDecision> decisions;
    /// One sample per ACK, after the window update.
    std::vector<WindowSample> windows;
};

struct GuardKey {
    NodeId node;
    IfaceId iface;
    std::uint8_t prio = 0;

    friend auto operator<=>(const GuardKey&, const GuardKey&) = default;
};

enum class GuardAction : std::uint8_t { Pause, Refresh, Expire, Resume };

struct GuardEvent {
    SimTime at;
    GuardKey key;
    GuardAction action;
};

/// Timed pause recovery per (node, egress iface, priority). A pause frame
/// holds the egress and starts a sleep whose completion releases it; a
/// newer frame aborts that sleep and starts another; a zero-quanta frame
/// aborts it and releases at once.
class PauseGuard {
public:
    explicit PauseGuard(Network& net) : net_(net) {}
    PauseGuard(const PauseGuard&) = delete;
    PauseGuard& operator=(const PauseGuard&) = delete;

    void on_frame(GuardKey key, Duration quanta);

    std::size_t live_timers() const;
    std::size_t live_timers(GuardKey key) const;
    /// Highest live-timer count ever observed on one key.
    std::size_t max_live_per_key() const { return max_live_; }
    std::uint64_t timers_aborted() const { return aborted_; }
    const std::vector<GuardEvent>& log() const { return log_; }

    /// Checks that every slot's bookkeeping matches its timer's state.
    bool consistent() const;

private:
    struct Slot {
        Operation<> timer;
        std::size_t live = 0;
    };
    friend Operation<> guard_timer(PauseGuard* guard, GuardKey key, Duration quanta);

    void expire(GuardKey key);
    void note(GuardKey key, GuardAction action);

    Network& net_;
    std::map<GuardKey, Slot> slots_;
    std::size_t max_live_ = 0;
    std::uint64_t aborted_ = 0;
    std::vector<GuardEvent> log_;
};

/// Convenience form of PauseGuard::on_frame.
void pfc_guard(PauseGuard& guard, NodeId node, IfaceId iface, std::uint8_t prio, Duration quanta);

/// One pause (quanta > 0) or resume (quanta == 0) frame sent by a switch.
struct PfcEmission {
    SimTime at;
    NodeId node;
    IfaceId iface;
    std::uint8_t prio = 0;
    Duration quanta;
};

/// Hosts and PFC switches over one Network. Switches forward by shortest
/// path (lowest interface on ties), stamp data packets with the egress
/// depth they see, and track per-(ingress, priority) occupancy: crossing
/// xoff upward sends a pause frame out of that ingress; falling below xon
/// after a pause sends a resume frame. Every node runs a PauseGuard for
/// frames it receives. Hosts acknowledge data on kAckPriority.
class Fabric {
public:
    Fabric(Network& net, PfcConfig cfg, std::vector<NodeId> switches, SenderParams sender = {});
    Fabric(const Fabric&) = delete;
    Fabric& operator=(const Fabric&) = delete;

    /// Starts the receive loops of every node.
    void start();
    /// Starts a windowed sender for `flow`; `start()` must have run.
    Operation<FlowReport> start_flow(const FlowSpec& flow);

    Network& network() { return net_; }
    PauseGuard& guard() { return guard_; }
    const PfcConfig& config() const { return cfg_; }
    const SenderParams& sender_params() const { return sender_; }
    bool is_switch(NodeId n) const { return is_switch_.at(n.index()); }
    /// Throws TopologyError when `dst` is unreachable from `from`.
    IfaceId next_hop(NodeId from, NodeId dst) const;

    const std::vector<PfcEmission>& emissions() const { return emissions_; }
    /// Upward xoff crossings observed, per (switch, ingress, priority).
    const std::map<GuardKey, std::uint64_t>& upward_crossings() const { return crossings_; }
    std::uint32_t occupancy(NodeId sw, IfaceId ingress, std::uint8_t prio) const;

private:
    struct Ack {
        std::uint64_t seq = 0;
        std::uint32_t bytes = 0;
        std::uint64_t telemetry = 0;
    };
    friend Operation<> node_loop(Fabric* fab, NodeId node, IfaceId iface);
    friend Operation<> forward(Fabric* fab, NodeId node, IfaceId ingress, IfaceId egress, Packet pkt);
    friend Operation<FlowReport> sender_body(Fabric* fab, FlowSpec flow);

    void handle(NodeId node, IfaceId iface, Packet pkt);
    void on_admit(NodeId sw, IfaceId ingress, std::uint8_t prio);
    void on_depart(NodeId sw, IfaceId ingress, std::uint8_t prio);
    void send_frame(NodeId node, IfaceId iface, std::uint8_t prio, Duration quanta);
    Mailbox<Ack>& ack_box(std::uint64_t flow_id);

    Network& net_;
    PfcConfig cfg_;
    SenderParams sender_;
    std::vector<bool> is_switch_;
    PauseGuard guard_;
    /// next_hop_[from][dst]
    std::vector<std::vector<std::optional<IfaceId>>> next_hop_;
    std::vector<Operation<>> loops_;
    std::map<GuardKey, std::uint32_t> occupancy_;
    std::map<GuardKey, bool> asserted_;
    std::map<GuardKey, std::uint64_t> crossings_;
    std::vector<PfcEmission> emissions_;
    std::map<std::uint64_t, std::unique_ptr<Mailbox<Ack>>> acks_;
    bool started_ = false;
};

Operation<> run_switch(Fabric& fab, NodeId node);
Operation<> run_host(Fabric& fab, NodeId node);

/// Sends `flow` while inflight + segment <= window; each ACK's telemetry
/// halves the window (floor one MTU) above high_mark or adds one MTU below
/// low_mark. Completes when every byte is acknowledged.
Operation<FlowReport> windowed_sender(Fabric& fab, const FlowSpec& flow);

}  // namespace cosim::pfc
