#include "cosim/task.hpp"

#include <algorithm>
#include <ostream>
#include <unordered_map>

namespace cosim {

std::ostream& operator<<(std::ostream& os, Unit) { return os << "()"; }

std::string_view to_string(TaskState s) {
    switch (s) {
        case TaskState::Created: return "created";
        case TaskState::Running: return "running";
        case TaskState::Suspended: return "suspended";
        case TaskState::Completed: return "completed";
        case TaskState::Failed: return "failed";
        case TaskState::Aborted: return "aborted";
    }
    return "?";
}

namespace detail {

FrameAccounting& frame_accounting() {
    thread_local FrameAccounting accounting;
    return accounting;
}

void* allocate_frame(std::size_t bytes) {
    void* p = ::operator new(bytes);
    auto& a = frame_accounting();
    a.bytes_live += bytes;
    a.bytes_peak = std::max(a.bytes_peak, a.bytes_live);
    return p;
}

void deallocate_frame(void* p, std::size_t bytes) noexcept {
    frame_accounting().bytes_live -= bytes;
    ::operator delete(p);
}

FrameBase::FrameBase() {
    auto& a = frame_accounting();
    ++a.created;
    ++a.live;
    a.peak_live = std::max(a.peak_live, a.live);
}

FrameBase::~FrameBase() {
    auto& a = frame_accounting();
    ++a.destroyed;
    --a.live;
}

void FrameBase::for_each_awaited(const std::function<void(const FrameBase&)>& fn) const {
    if (awaited_one_) fn(*awaited_one_);
    for (const FrameBase* f : awaited_many_) {
        if (f) fn(*f);
    }
}

void FrameBase::release() {
    if (retain_count_ == 0) {
        ++frame_accounting().double_release;
        throw ContractViolation("frame released more times than it was retained");
    }
    if (--retain_count_ == 0) destroy_storage();
}

void FrameBase::set_error(std::exception_ptr e) noexcept {
    // An abort already decided the outcome.
    if (state_ != TaskState::Aborted) error_ = std::move(e);
}

void FrameBase::rethrow_if_not_completed() const {
    if (state_ == TaskState::Completed) return;
    if ((state_ == TaskState::Failed || state_ == TaskState::Aborted) && error_) std::rethrow_exception(error_);
    throw ContractViolation("result read before the operation finished");
}

void FrameBase::transition(TaskState to) {
    const TaskState from = state_;
    state_ = to;
    if (sim_) sim_->frames().on_transition(*this, from, to);
}

void FrameBase::start(Simulator& sim) {
    if (state_ != TaskState::Created) throw ContractViolation("operation already started");
    sim_ = &sim;
    id_ = sim.frames().on_start(*this);
    run_body();
}

void FrameBase::run_body() {
    retain();
    transition(TaskState::Running);
    resume_body();
    release();
}

void FrameBase::wake() {
    if (state_ != TaskState::Suspended) return;
    clear_block();
    run_body();
}

bool FrameBase::abort() {
    if (state_ == TaskState::Created) throw ContractViolation("abort of an operation that was never started");
    if (is_terminal(state_)) return false;
    retain();
    if (state_ == TaskState::Suspended) cancel_block();
    transition(TaskState::Aborted);
    error_ = std::make_exception_ptr(OperationAborted{});
    if (sim_) sim_->frames().on_terminal(*this);
    notify_waiters();
    release();
    return true;
}

std::uint64_t FrameBase::add_waiter(FrameBase& resume) {
    const auto token = next_token_++;
    waiters_.push_back(Waiter{token, &resume, {}});
    return token;
}

std::uint64_t FrameBase::add_waiter(Notify fn) {
    const auto token = next_token_++;
    waiters_.push_back(Waiter{token, nullptr, std::move(fn)});
    return token;
}

bool FrameBase::remove_waiter(std::uint64_t token) {
    auto it = std::find_if(waiters_.begin(), waiters_.end(), [token](const Waiter& w) { return w.token == token; });
    if (it == waiters_.end()) return false;
    waiters_.erase(it);
    return true;
}

void FrameBase::notify_waiters() {
    retain();
    // Pop one at a time: a notified waiter may deregister later ones.
    while (!waiters_.empty()) {
        Waiter w = std::move(waiters_.front());
        waiters_.erase(waiters_.begin());
        if (w.resume) {
            w.resume->wake();
        } else {
            w.notify(*this);
        }
    }
    release();
}

bool FrameBase::reaches(const FrameBase* goal) const {
    if (this == goal) return true;
    bool found = false;
    for_each_awaited([&](const FrameBase& f) {
        if (!found && f.reaches(goal)) found = true;
    });
    return found;
}

bool FrameBase::suspend_on_frame(FrameBase& target, bool owns_target) {
    if (state_ == TaskState::Aborted) return true;
    if (&target == this) throw ContractViolation("an operation cannot await itself");
    if (target.state() == TaskState::Created) {
        target.start(*sim_);
        if (state_ == TaskState::Aborted) return true;
    } else if (target.simulation() != sim_) {
        throw ContractViolation("await of an operation that runs on another simulation");
    }
    if (is_terminal(target.state())) return false;
    if (target.reaches(this)) throw ContractViolation("await cycle between operations");
    awaited_token_ = target.add_waiter(*this);
    block_ = BlockKind::Frame;
    awaited_one_ = &target;
    owns_awaited_ = owns_target;
    transition(TaskState::Suspended);
    return true;
}

bool FrameBase::suspend_for(Duration delay) {
    if (state_ == TaskState::Aborted) return true;
    timer_ = sim_->schedule(delay, [this] { wake(); });
    block_ = BlockKind::Timer;
    transition(TaskState::Suspended);
    return true;
}

bool FrameBase::suspend_on_hook(AbortHook& hook, std::span<FrameBase* const> awaited) {
    if (state_ == TaskState::Aborted) {
        hook.on_abort(*this);
        return true;
    }
    block_ = BlockKind::Hook;
    hook_ = &hook;
    awaited_many_ = awaited;
    transition(TaskState::Suspended);
    return true;
}

void FrameBase::clear_block() noexcept {
    block_ = BlockKind::None;
    owns_awaited_ = false;
    timer_ = {};
    awaited_one_ = nullptr;
    awaited_token_ = 0;
    hook_ = nullptr;
    awaited_many_ = {};
}

void FrameBase::cancel_block() {
    switch (block_) {
        case BlockKind::None: break;
        case BlockKind::Timer:
            if (sim_) sim_->cancel(timer_);
            break;
        case BlockKind::Frame: {
            FrameBase* target = awaited_one_;
            const bool owns = owns_awaited_;
            target->remove_waiter(awaited_token_);
            clear_block();
            if (owns) target->abort();
            return;
        }
        case BlockKind::Hook: {
            AbortHook* hook = hook_;
            clear_block();
            hook->on_abort(*this);
            return;
        }
    }
    clear_block();
}

void FrameBase::on_final() noexcept {
    if (state_ == TaskState::Aborted) return;
    transition(error_ ? TaskState::Failed : TaskState::Completed);
    if (sim_) sim_->frames().on_terminal(*this);
    notify_waiters();
}

void FrameBase::abandon() noexcept {
    clear_block();
    waiters_.clear();
    sim_ = nullptr;
}

Operation<Unit> sleep_body(Duration d) { co_await DelayAwaiter{d}; }

std::uint64_t FrameRegistry::on_start(FrameBase& frame) {
    const auto id = next_id_++;
    live_.emplace(id, &frame);
    frame.retain();
    ++counters_.started;
    return id;
}

void FrameRegistry::on_terminal(FrameBase& frame) {
    auto it = live_.find(frame.id());
    if (it == live_.end()) return;
    live_.erase(it);
    frame.release();
}

void FrameRegistry::on_transition(const FrameBase& frame, TaskState from, TaskState to) {
    if (!is_legal_transition(from, to)) ++counters_.illegal_transitions;
    switch (to) {
        case TaskState::Completed: ++counters_.completed; break;
        case TaskState::Failed: ++counters_.failed; break;
        case TaskState::Aborted: ++counters_.aborted; break;
        default: break;
    }
    if (observer_) observer_(frame, from, to);
    if (!sim_.tracer().enabled(TraceKind::TaskState)) return;
    sim_.tracer()
        .record(sim_.now(), TraceKind::TaskState)
        .attr("task", frame.id())
        .attr("from", to_string(from))
        .attr("to", to_string(to));
}

bool FrameRegistry::acyclic() const {
    // 0 = unvisited, 1 = on stack, 2 = done
    std::unordered_map<const FrameBase*, int> color;
    std::function<bool(const FrameBase&)> visit = [&](const FrameBase& f) {
        int& c = color[&f];
        if (c == 1) return false;
        if (c == 2) return true;
        c = 1;
        bool ok = true;
        f.for_each_awaited([&](const FrameBase& next) {
            if (ok && !visit(next)) ok = false;
        });
        color[&f] = 2;
        return ok;
    };
    for (const auto& [id, frame] : live_) {
        if (!visit(*frame)) return false;
    }
    return true;
}

void FrameRegistry::teardown() noexcept {
    std::vector<std::pair<std::uint64_t, FrameBase*>> frames(live_.begin(), live_.end());
    live_.clear();
    std::sort(frames.begin(), frames.end());
    for (auto& [id, frame] : frames) frame->abandon();
    for (auto& [id, frame] : frames) frame->release();
}

}  // namespace detail
}  // namespace cosim
