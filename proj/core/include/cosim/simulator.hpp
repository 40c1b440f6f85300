#pragma once

#include "cosim/time.hpp"
#include "cosim/trace.hpp"

#include <compare>
#include <cstdint>
#include <functional>
#include <memory>
#include <queue>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

namespace cosim {

namespace detail {
class FrameRegistry;
}

/// Issued in schedule order, never reused within one Simulator.
struct EventId {
    std::uint64_t seq = 0;
    friend constexpr auto operator<=>(EventId, EventId) = default;
};

/// Totals since the simulator was constructed.
struct SimStats {
    std::uint64_t events_scheduled = 0;
    std::uint64_t events_executed = 0;
    std::uint64_t events_cancelled = 0;
    SimTime final_time;
};

enum class RunOutcome : std::uint8_t { Completed, BudgetExhausted };

struct RunResult {
    SimStats stats;
    RunOutcome outcome = RunOutcome::Completed;
};

/// An event action threw. Carries the timestamp and id of the failing event;
/// the original exception is nested.
class SimulationError : public std::runtime_error {
public:
    SimulationError(SimTime time, EventId event, const std::string& what)
        : std::runtime_error("event " + std::to_string(event.seq) + " at t=" + std::to_string(time.ticks) +
                             " failed: " + what),
          time_(time),
          event_(event) {}

    SimTime time() const { return time_; }
    EventId event() const { return event_; }

private:
    SimTime time_;
    EventId event_;
};

/// Virtual-time event queue. Events run in strictly increasing (fire_at, id)
/// order, one at a time, on the thread that drives run_*(). Cancellation
/// tombstones the event; the heap entry is skipped when popped.
///
/// Not copyable or movable: suspended operations keep a pointer to the
/// simulator that resumes them.
class Simulator {
public:
    using Action = std::function<void()>;

    Simulator();
    ~Simulator();
    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;

    SimTime now() const { return now_; }

    /// Throws std::invalid_argument for a negative delay.
    EventId schedule(Duration delay, Action action);
    bool cancel(EventId id);
    bool is_pending(EventId id) const { return pending_.contains(id.seq); }
    std::size_t live_event_count() const { return pending_.size(); }

    /// Runs every live event with fire_at <= limit, including ones spawned on
    /// the way, then sets the clock to `limit` (if it lies ahead).
    SimStats run_until(SimTime limit);

    /// Runs until the queue is empty, or until `max_events` have executed in
    /// this call while live events remain.
    RunResult run_to_completion(std::uint64_t max_events);

    /// run_until with a livelock guard.
    RunResult run(SimTime limit, std::uint64_t max_events);

    const SimStats& stats() const { return stats_; }

    Tracer& tracer() { return tracer_; }
    const Tracer& tracer() const { return tracer_; }

    detail::FrameRegistry& frames() { return *frames_; }
    const detail::FrameRegistry& frames() const { return *frames_; }

private:
    struct Entry {
        SimTime fire_at;
        EventId id;
        // mutable so the action can be moved out of priority_queue::top().
        mutable Action action;
    };
    struct Later {
        bool operator()(const Entry& a, const Entry& b) const {
            return std::tie(a.fire_at.ticks, a.id.seq) > std::tie(b.fire_at.ticks, b.id.seq);
        }
    };

    // Pops tombstones; returns false when no live event remains.
    bool skip_dead();
    void execute_top();

    SimTime now_;
    std::uint64_t next_id_ = 0;
    std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
    std::unordered_set<std::uint64_t> pending_;
    SimStats stats_;
    Tracer tracer_;
    std::unique_ptr<detail::FrameRegistry> frames_;
};

}  // namespace cosim
