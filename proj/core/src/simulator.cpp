#include "cosim/simulator.hpp"

#include "cosim/task.hpp"

#include <exception>
#include <stdexcept>

namespace cosim {

Simulator::Simulator() : frames_(std::make_unique<detail::FrameRegistry>(*this)) {}

Simulator::~Simulator() {
    frames_->teardown();
    // Queued actions may own handles; drop them while the registry exists.
    heap_ = {};
    pending_.clear();
}

EventId Simulator::schedule(Duration delay, Action action) {
    if (delay.negative()) throw std::invalid_argument("schedule: negative delay " + std::to_string(delay.ticks));
    const EventId id{next_id_++};
    const SimTime fire_at = now_ + delay;
    heap_.push(Entry{fire_at, id, std::move(action)});
    pending_.insert(id.seq);
    ++stats_.events_scheduled;
    tracer_.record(now_, TraceKind::Schedule).attr("event", id.seq).attr("at", fire_at.ticks);
    return id;
}

bool Simulator::cancel(EventId id) {
    if (pending_.erase(id.seq) == 0) return false;
    ++stats_.events_cancelled;
    tracer_.record(now_, TraceKind::Cancel).attr("event", id.seq);
    return true;
}

bool Simulator::skip_dead() {
    while (!heap_.empty() && !pending_.contains(heap_.top().id.seq)) heap_.pop();
    return !heap_.empty();
}

void Simulator::execute_top() {
    const Entry& top = heap_.top();
    const SimTime fire_at = top.fire_at;
    const EventId id = top.id;
    Action action = std::move(top.action);
    heap_.pop();
    pending_.erase(id.seq);
    now_ = fire_at;
    ++stats_.events_executed;
    tracer_.record(now_, TraceKind::Execute).attr("event", id.seq);
    try {
        action();
    } catch (const SimulationError&) {
        throw;
    } catch (const std::exception& e) {
        stats_.final_time = now_;
        std::throw_with_nested(SimulationError(now_, id, e.what()));
    } catch (...) {
        stats_.final_time = now_;
        std::throw_with_nested(SimulationError(now_, id, "unknown error"));
    }
}

SimStats Simulator::run_until(SimTime limit) {
    while (skip_dead() && heap_.top().fire_at <= limit) execute_top();
    if (limit > now_) now_ = limit;
    stats_.final_time = now_;
    return stats_;
}

RunResult Simulator::run_to_completion(std::uint64_t max_events) {
    return run(SimTime::max(), max_events);
}

RunResult Simulator::run(SimTime limit, std::uint64_t max_events) {
    if (max_events == 0) throw std::invalid_argument("run: max_events must be positive");
    std::uint64_t executed = 0;
    RunResult result;
    while (skip_dead() && heap_.top().fire_at <= limit) {
        if (executed == max_events) {
            result.outcome = RunOutcome::BudgetExhausted;
            stats_.final_time = now_;
            result.stats = stats_;
            return result;
        }
        execute_top();
        ++executed;
    }
    if (limit != SimTime::max() && limit > now_) now_ = limit;
    stats_.final_time = now_;
    result.stats = stats_;
    return result;
}

}  // namespace cosim
