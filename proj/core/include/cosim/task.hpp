#pragma once

#include "cosim/simulator.hpp"
#include "cosim/time.hpp"

#include <concepts>
#include <coroutine>
#include <cstdint>
#include <exception>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cosim {

/// Result type of operations that produce no value.
struct Unit {
    friend constexpr bool operator==(Unit, Unit) = default;
};
std::ostream& operator<<(std::ostream& os, Unit);

enum class TaskState : std::uint8_t { Created, Running, Suspended, Completed, Failed, Aborted };

std::string_view to_string(TaskState s);

constexpr bool is_terminal(TaskState s) {
    return s == TaskState::Completed || s == TaskState::Failed || s == TaskState::Aborted;
}

constexpr bool is_legal_transition(TaskState from, TaskState to) {
    switch (from) {
        case TaskState::Created: return to == TaskState::Running;
        case TaskState::Running:
            return to == TaskState::Suspended || to == TaskState::Completed || to == TaskState::Failed ||
                   to == TaskState::Aborted;
        case TaskState::Suspended: return to == TaskState::Running || to == TaskState::Aborted;
        default: return false;
    }
}

/// Delivered to everything awaiting an operation that was aborted.
class OperationAborted : public std::runtime_error {
public:
    OperationAborted() : std::runtime_error("operation aborted") {}
};

/// Misuse of the runtime: aborting through a non-owning handle, releasing
/// twice, awaiting in a cycle, firing a one-shot callback twice.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

template <class T = Unit>
class Operation;

namespace detail {

class FrameBase;

/// Installed by an awaiter that blocks on something other than a timer or
/// another frame. Called when the suspended frame is aborted.
class AbortHook {
public:
    virtual void on_abort(FrameBase& frame) = 0;

protected:
    ~AbortHook() = default;
};

/// Process-wide (per thread) frame allocation counters.
struct FrameAccounting {
    std::uint64_t created = 0;
    std::uint64_t destroyed = 0;
    std::uint64_t live = 0;
    std::uint64_t peak_live = 0;
    std::uint64_t bytes_live = 0;
    std::uint64_t bytes_peak = 0;
    std::uint64_t double_release = 0;
};
FrameAccounting& frame_accounting();

/// State shared by every operation frame: lifecycle, result slot, waiters,
/// retain count and the owner token. Coroutine promises derive from it, so
/// the coroutine frame is the operation's only allocation.
class FrameBase {
public:
    using Notify = std::function<void(FrameBase&)>;

    FrameBase(const FrameBase&) = delete;
    FrameBase& operator=(const FrameBase&) = delete;

    TaskState state() const { return state_; }
    std::uint64_t id() const { return id_; }
    Simulator* simulation() const { return sim_; }
    std::uint32_t retain_count() const { return retain_count_; }
    bool owner_outstanding() const { return owner_outstanding_; }
    std::exception_ptr error() const { return error_; }
    std::size_t waiter_count() const { return waiters_.size(); }

    /// Frames this one is currently blocked on (empty unless Suspended).
    void for_each_awaited(const std::function<void(const FrameBase&)>& fn) const;

    void retain() noexcept { ++retain_count_; }
    void release();
    void release_owner() noexcept { owner_outstanding_ = false; }

    /// Created -> Running on `sim`; runs the body to its first suspension.
    void start(Simulator& sim);

    /// Non-terminal -> Aborted. Cancels whatever the frame is blocked on and
    /// wakes its waiters with OperationAborted. Returns false if already
    /// terminal. The body does not run again.
    bool abort();

    std::uint64_t add_waiter(FrameBase& resume);
    std::uint64_t add_waiter(Notify fn);
    bool remove_waiter(std::uint64_t token);

    // Suspension primitives for awaiters. Each returns whether the calling
    // coroutine stays suspended. A frame aborted while running parks at its
    // next suspension point and is never resumed.
    bool suspend_on_frame(FrameBase& target, bool owns_target);
    bool suspend_for(Duration delay);
    bool suspend_on_hook(AbortHook& hook, std::span<FrameBase* const> awaited = {});
    bool parked() const { return state_ == TaskState::Aborted; }

    /// Suspended -> Running; ignored if the frame is no longer suspended.
    void wake();

    void on_final() noexcept;

    /// Detaches from a simulator that is being destroyed.
    void abandon() noexcept;

protected:
    FrameBase();
    virtual ~FrameBase();

    virtual void resume_body() = 0;
    virtual void destroy_storage() noexcept = 0;

    void set_error(std::exception_ptr e) noexcept;
    void rethrow_if_not_completed() const;

private:
    enum class BlockKind : std::uint8_t { None, Timer, Frame, Hook };
    struct Waiter {
        std::uint64_t token;
        FrameBase* resume;
        Notify notify;
    };

    void transition(TaskState to);
    void run_body();
    void cancel_block();
    void clear_block() noexcept;
    void notify_waiters();
    bool reaches(const FrameBase* target) const;

    Simulator* sim_ = nullptr;
    std::uint64_t id_ = 0;
    std::uint32_t retain_count_ = 1;
    TaskState state_ = TaskState::Created;
    bool owner_outstanding_ = true;
    std::exception_ptr error_;

    std::vector<Waiter> waiters_;
    std::uint64_t next_token_ = 1;

    BlockKind block_ = BlockKind::None;
    bool owns_awaited_ = false;
    EventId timer_{};
    FrameBase* awaited_one_ = nullptr;
    std::uint64_t awaited_token_ = 0;
    AbortHook* hook_ = nullptr;
    std::span<FrameBase* const> awaited_many_;
};

/// Per-simulation bookkeeping: assigns frame ids, keeps every started,
/// non-terminal frame alive, counts transitions.
class FrameRegistry {
public:
    using TransitionObserver = std::function<void(const FrameBase&, TaskState from, TaskState to)>;

    struct Counters {
        std::uint64_t started = 0;
        std::uint64_t completed = 0;
        std::uint64_t failed = 0;
        std::uint64_t aborted = 0;
        std::uint64_t illegal_transitions = 0;
    };

    explicit FrameRegistry(Simulator& sim) : sim_(sim) {}
    FrameRegistry(const FrameRegistry&) = delete;
    FrameRegistry& operator=(const FrameRegistry&) = delete;

    std::size_t live() const { return live_.size(); }
    const Counters& counters() const { return counters_; }
    void set_observer(TransitionObserver obs) { observer_ = std::move(obs); }

    /// True iff the frame-to-frame await graph has no cycle.
    bool acyclic() const;

    // Runtime hooks.
    std::uint64_t on_start(FrameBase& frame);
    void on_terminal(FrameBase& frame);
    void on_transition(const FrameBase& frame, TaskState from, TaskState to);
    void teardown() noexcept;

private:
    Simulator& sim_;
    std::uint64_t next_id_ = 1;
    std::unordered_map<std::uint64_t, FrameBase*> live_;
    Counters counters_;
    TransitionObserver observer_;
};

template <class T>
class PromiseStorage : public FrameBase {
public:
    template <class U = T>
        requires std::constructible_from<T, U&&>
    void return_value(U&& v) {
        value_.emplace(std::forward<U>(v));
    }

    const T& value_ref() const {
        rethrow_if_not_completed();
        return *value_;
    }
    T take_value() {
        rethrow_if_not_completed();
        return std::move(*value_);
    }

private:
    std::optional<T> value_;
};

template <>
class PromiseStorage<Unit> : public FrameBase {
public:
    void return_void() noexcept {}

    const Unit& value_ref() const {
        rethrow_if_not_completed();
        return unit_;
    }
    Unit take_value() {
        rethrow_if_not_completed();
        return unit_;
    }

private:
    Unit unit_;
};

struct FinalAwaiter {
    bool await_ready() const noexcept { return false; }
    template <class P>
    void await_suspend(std::coroutine_handle<P> h) const noexcept {
        h.promise().on_final();
    }
    void await_resume() const noexcept {}
};

void* allocate_frame(std::size_t bytes);
void deallocate_frame(void* p, std::size_t bytes) noexcept;

template <class T>
class Promise final : public PromiseStorage<T> {
public:
    Operation<T> get_return_object() noexcept;
    std::suspend_always initial_suspend() const noexcept { return {}; }
    FinalAwaiter final_suspend() const noexcept { return {}; }
    void unhandled_exception() noexcept { this->set_error(std::current_exception()); }

    static void* operator new(std::size_t bytes) { return allocate_frame(bytes); }
    static void operator delete(void* p, std::size_t bytes) noexcept { deallocate_frame(p, bytes); }

private:
    std::coroutine_handle<Promise> handle() { return std::coroutine_handle<Promise>::from_promise(*this); }
    void resume_body() override { handle().resume(); }
    void destroy_storage() noexcept override { handle().destroy(); }
};

template <class P>
concept FramePromise = std::derived_from<P, FrameBase>;

template <class T>
struct BorrowedAwaiter {
    PromiseStorage<T>* target;

    bool await_ready() const noexcept { return false; }
    template <FramePromise P>
    bool await_suspend(std::coroutine_handle<P> caller) {
        return caller.promise().suspend_on_frame(*target, false);
    }
    T await_resume() const { return target->value_ref(); }
};

template <class T>
struct OwnedAwaiter {
    Operation<T> op;

    bool await_ready() const noexcept { return false; }
    template <FramePromise P>
    bool await_suspend(std::coroutine_handle<P> caller) {
        return caller.promise().suspend_on_frame(*op.frame(), op.owning());
    }
    T await_resume() { return op.owning() ? op.frame()->take_value() : T(op.frame()->value_ref()); }
};

struct DelayAwaiter {
    Duration delay;

    bool await_ready() const noexcept { return false; }
    template <FramePromise P>
    bool await_suspend(std::coroutine_handle<P> caller) {
        return caller.promise().suspend_for(delay);
    }
    void await_resume() const noexcept {}
};

struct SimulationAccess {
    Simulator* sim = nullptr;

    bool await_ready() const noexcept { return false; }
    template <FramePromise P>
    bool await_suspend(std::coroutine_handle<P> caller) noexcept {
        sim = caller.promise().simulation();
        return false;
    }
    Simulator& await_resume() const noexcept { return *sim; }
};

Operation<Unit> sleep_body(Duration d);

}  // namespace detail

/// Handle to a suspendable operation. The handle returned by a coroutine is
/// the owning one; retain() hands out non-owning duplicates that may observe
/// and await but not abort or take the result. Every handle holds one count
/// on the frame; the frame is freed when the count reaches zero.
///
/// Operations are created in the Created state and start either when
/// spawned or when first awaited; a started frame runs eagerly up to its
/// first suspension point.
template <class T>
class [[nodiscard]] Operation {
public:
    using promise_type = detail::Promise<T>;
    using value_type = T;

    Operation() = default;
    Operation(Operation&& o) noexcept
        : frame_(std::exchange(o.frame_, nullptr)), owning_(std::exchange(o.owning_, false)) {}
    Operation& operator=(Operation&& o) noexcept {
        if (this != &o) {
            reset();
            frame_ = std::exchange(o.frame_, nullptr);
            owning_ = std::exchange(o.owning_, false);
        }
        return *this;
    }
    Operation(const Operation&) = delete;
    Operation& operator=(const Operation&) = delete;
    ~Operation() { reset(); }

    bool valid() const { return frame_ != nullptr; }
    explicit operator bool() const { return valid(); }
    bool owning() const { return owning_; }

    TaskState state() const { return checked()->state(); }
    bool done() const { return is_terminal(state()); }
    std::uint64_t id() const { return checked()->id(); }
    std::uint32_t retain_count() const { return checked()->retain_count(); }
    std::exception_ptr error() const { return checked()->error(); }

    Operation retain() const {
        checked()->retain();
        return Operation(frame_, false);
    }

    void release() {
        if (!frame_) throw ContractViolation("release of an empty operation handle");
        reset();
    }

    bool abort() {
        require_owner("abort");
        return frame_->abort();
    }

    /// Owner only. Rethrows the failure, or OperationAborted.
    const T& result() const {
        require_owner("read the result of");
        return frame_->value_ref();
    }
    T take_result() {
        require_owner("take the result of");
        return frame_->take_value();
    }

    detail::Promise<T>* frame() const { return frame_; }

    detail::BorrowedAwaiter<T> operator co_await() & noexcept { return {checked()}; }
    detail::OwnedAwaiter<T> operator co_await() && noexcept { return {std::move(*this)}; }

private:
    friend class detail::Promise<T>;
    Operation(detail::Promise<T>* f, bool owning) : frame_(f), owning_(owning) {}

    detail::Promise<T>* checked() const {
        if (!frame_) throw ContractViolation("use of an empty operation handle");
        return frame_;
    }
    void require_owner(const char* what) const {
        checked();
        if (!owning_) throw ContractViolation(std::string("a non-owning handle cannot ") + what + " an operation");
    }
    void reset() noexcept {
        if (!frame_) return;
        auto* f = std::exchange(frame_, nullptr);
        if (std::exchange(owning_, false)) f->release_owner();
        f->release();
    }

    detail::Promise<T>* frame_ = nullptr;
    bool owning_ = false;
};

template <class T>
Operation<T> detail::Promise<T>::get_return_object() noexcept {
    return Operation<T>(this, true);
}

/// Starts `op` on `sim` (running it to its first suspension) and hands the
/// owning handle back. Already-started operations are returned unchanged.
template <class T>
Operation<T> spawn(Simulator& sim, Operation<T> op) {
    if (!op) throw ContractViolation("spawn of an empty operation handle");
    auto* f = op.frame();
    if (f->state() == TaskState::Created) {
        f->start(sim);
    } else if (f->simulation() != &sim) {
        throw ContractViolation("operation already runs on another simulation");
    }
    return op;
}

/// Suspends the current task; a zero-delay event resumes it.
inline detail::DelayAwaiter yield_now() { return {Duration{0}}; }

/// An operation that completes `d` after it starts. Aborting it cancels the
/// timer event.
inline Operation<Unit> sleep(Duration d) {
    if (d.negative()) throw std::invalid_argument("sleep: negative duration");
    return detail::sleep_body(d);
}

/// `Simulator& sim = co_await current_simulation();`
inline detail::SimulationAccess current_simulation() { return {}; }

}  // namespace cosim
