#pragma once

#include "cosim/net.hpp"
#include "cosim/sync.hpp"

#include <map>
#include <memory>
#include <optional>
#include <vector>

namespace cosim::rip {

inline constexpr std::uint32_t kInfinity = 16;
inline constexpr std::uint16_t kRipKind = 0x30;

struct RipTimers {
    Duration update_period{30'000'000};
    Duration route_timeout{180'000'000};
    Duration gc_timeout{120'000'000};

    /// Throws std::invalid_argument unless all are positive and
    /// route_timeout > update_period.
    void validate() const;
};

struct RouteEntry {
    NodeId dest;
    NodeId next_hop;
    /// 0..kInfinity; kInfinity means unreachable.
    std::uint32_t metric = kInfinity;
    SimTime last_refresh;
    /// Set iff metric == kInfinity.
    std::optional<SimTime> gc_deadline;

    friend bool operator==(const RouteEntry&, const RouteEntry&) = default;
};

enum class RouteChange : std::uint8_t { Learned, Updated, TimedOut, Collected };

struct RouteEvent {
    SimTime at;
    NodeId node;
    NodeId dest;
    RouteChange change;
    std::uint32_t metric = 0;
    NodeId next_hop;
};

struct RipStats {
    std::uint64_t periodic_updates = 0;
    std::uint64_t triggered_updates = 0;
    std::uint64_t messages_received = 0;
};

/// Distance-vector routing over a Network. Each router runs an
/// advertiser (full table every update_period, plus triggered updates when
/// its table changes, at most one per instant), one receive loop per
/// interface (Bellman-Ford relaxation, clamped at kInfinity) and an expiry
/// sweeper (timeout -> kInfinity and a triggered update; gc -> removal).
/// Advertisements use split horizon with poisoned reverse.
class Rip {
public:
    Rip(Network& net, RipTimers timers);
    Rip(const Rip&) = delete;
    Rip& operator=(const Rip&) = delete;

    /// Starts the router tasks of `node`; the returned operation never
    /// completes on its own.
    Operation<> start_rip(NodeId node);
    /// start_rip on every node, keeping the handles.
    void start_all();

    /// From `at` on the link delivers nothing.
    void inject_link_failure(LinkId link, SimTime at);
    void repair_link(LinkId link, SimTime at);

    /// Snapshot sorted by destination.
    std::vector<RouteEntry> routing_table(NodeId node) const;
    /// Next hop used for forwarding; never a kInfinity route.
    std::optional<NodeId> forward_next_hop(NodeId node, NodeId dest) const;

    const std::vector<RouteEvent>& route_log() const { return log_; }
    /// Instant of the most recent table change.
    std::optional<SimTime> last_change() const;
    const RipStats& stats() const { return stats_; }
    const RipTimers& timers() const { return timers_; }

private:
    struct Router {
        NodeId self;
        std::map<std::uint32_t, RouteEntry> table;
        Signal trigger;
        Signal changed;
        bool dirty = false;
        std::optional<SimTime> last_triggered;
        bool started = false;
    };
    friend Operation<> advertiser(Rip* rip, Router* r);
    friend Operation<> receiver(Rip* rip, Router* r, IfaceId iface);
    friend Operation<> sweeper(Rip* rip, Router* r);

    void advertise(Router& r);
    void absorb(Router& r, IfaceId iface, const Packet& pkt);
    /// Handles every route of `r` whose deadline is due; returns the next
    /// deadline, if any.
    std::optional<SimTime> sweep(Router& r);
    void note(Router& r, const RouteEntry& e, RouteChange change);
    void mark_changed(Router& r);

    Network& net_;
    RipTimers timers_;
    std::vector<std::unique_ptr<Router>> routers_;
    std::vector<Operation<>> running_;
    std::vector<RouteEvent> log_;
    RipStats stats_;
};

}  // namespace cosim::rip
