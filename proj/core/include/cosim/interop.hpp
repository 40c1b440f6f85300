#pragma once

#include "cosim/task.hpp"

#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace cosim {

/// One-shot completion callback handed to a registrar. Invoking it twice
/// (value or failure) throws ContractViolation. Copies share one state.
template <class T>
class Callback {
public:
    struct State {
        bool fired = false;
        bool abandoned = false;
        detail::FrameBase* waiter = nullptr;
        std::optional<T> value;
        std::exception_ptr error;
        std::function<void(T)> on_value;
        std::function<void(std::exception_ptr)> on_error;
    };

    explicit Callback(std::shared_ptr<State> state) : state_(std::move(state)) {}

    /// A callback that forwards straight to plain functions, for handing a
    /// registrar to callback-style code.
    static Callback direct(std::function<void(T)> on_value, std::function<void(std::exception_ptr)> on_error) {
        auto state = std::make_shared<State>();
        state->on_value = std::move(on_value);
        state->on_error = std::move(on_error);
        return Callback(std::move(state));
    }

    void operator()(T value) const {
        claim();
        if (state_->on_value) {
            state_->on_value(std::move(value));
            return;
        }
        state_->value.emplace(std::move(value));
        wake();
    }

    void fail(std::exception_ptr error) const {
        claim();
        if (state_->on_error) {
            state_->on_error(std::move(error));
            return;
        }
        state_->error = std::move(error);
        wake();
    }

    /// False once fired, or once the awaiting operation was aborted or
    /// destroyed. Registrars may use it to drop stale callbacks.
    bool active() const { return !state_->fired && !state_->abandoned; }

private:
    void claim() const {
        if (state_->fired) throw ContractViolation("one-shot callback invoked twice");
        state_->fired = true;
    }
    void wake() const {
        if (auto* w = std::exchange(state_->waiter, nullptr)) w->wake();
    }

    std::shared_ptr<State> state_;
};

/// Accepts the completion callback; must invoke it at most once, either
/// synchronously or from a later kernel event.
template <class T>
using CallbackRegistrar = std::function<void(Callback<T>)>;

namespace detail {

template <class T>
class CallbackAwaiter final : public AbortHook {
public:
    explicit CallbackAwaiter(CallbackRegistrar<T> registrar) : registrar_(std::move(registrar)) {}
    CallbackAwaiter(CallbackAwaiter&&) = default;
    ~CallbackAwaiter() {
        if (state_) {
            state_->waiter = nullptr;
            if (!state_->fired) state_->abandoned = true;
        }
    }

    bool await_ready() const noexcept { return false; }

    template <FramePromise P>
    bool await_suspend(std::coroutine_handle<P> caller) {
        state_ = std::make_shared<typename Callback<T>::State>();
        registrar_(Callback<T>(state_));
        if (state_->fired) return false;
        state_->waiter = &caller.promise();
        return caller.promise().suspend_on_hook(*this);
    }

    T await_resume() {
        if (state_->error) std::rethrow_exception(state_->error);
        return std::move(*state_->value);
    }

    void on_abort(FrameBase&) override {
        state_->waiter = nullptr;
        state_->abandoned = true;
    }

private:
    CallbackRegistrar<T> registrar_;
    std::shared_ptr<typename Callback<T>::State> state_;
};

template <class T>
Operation<T> from_callback_body(CallbackRegistrar<T> registrar) {
    T value = co_await CallbackAwaiter<T>(std::move(registrar));
    co_return value;
}

inline Operation<Unit> from_callback_unit_body(CallbackRegistrar<Unit> registrar) {
    co_await CallbackAwaiter<Unit>(std::move(registrar));
}

template <class F>
Operation<std::invoke_result_t<F&>> wrap_body(F f) {
    co_return f();
}

template <class F>
Operation<Unit> wrap_void_body(F f) {
    f();
    co_return;
}

}  // namespace detail

/// Upgrades a callback registration into an operation. Registration happens
/// when the operation starts; it completes with the callback's argument,
/// fails through Callback::fail, and stays suspended if never fired.
template <class T>
Operation<T> from_callback(CallbackRegistrar<T> registrar) {
    if constexpr (std::is_same_v<T, Unit>) {
        return detail::from_callback_unit_body(std::move(registrar));
    } else {
        return detail::from_callback_body<T>(std::move(registrar));
    }
}

/// An operation whose body is a single call of `f`; it never suspends.
template <class F>
auto wrap_immediate(F f) {
    if constexpr (std::is_void_v<std::invoke_result_t<F&>>) {
        return detail::wrap_void_body(std::move(f));
    } else {
        return detail::wrap_body(std::move(f));
    }
}

/// Downgrades an operation into callbacks. Starts `op` if needed; when it
/// reaches a terminal state, exactly one of the callbacks runs in a
/// zero-delay kernel event at that instant.
template <class T>
void to_callback(Simulator& sim, Operation<T> op, std::function<void(T)> on_complete,
                 std::function<void(std::exception_ptr)> on_error) {
    if (!op.owning()) throw ContractViolation("to_callback requires an owning handle");
    op = spawn(sim, std::move(op));
    auto holder = std::make_shared<Operation<T>>(std::move(op));
    auto deliver = [&sim, holder, on_complete = std::move(on_complete), on_error = std::move(on_error)](
                       detail::FrameBase&) mutable {
        sim.schedule(Duration{0}, [holder, on_complete = std::move(on_complete), on_error = std::move(on_error)] {
            if (holder->state() == TaskState::Completed) {
                on_complete(holder->take_result());
            } else {
                on_error(holder->error());
            }
        });
    };
    auto* frame = holder->frame();
    if (holder->done()) {
        deliver(*frame);
    } else {
        frame->add_waiter(std::move(deliver));
    }
}

/// A hand-ripped form of a coroutine with one suspension: `pre` runs up to
/// the suspension and returns the externalized state, `post` resumes from
/// that state `delay` later.
template <class S, class R>
struct RippedPair {
    std::function<S()> pre_stage;
    Duration delay;
    std::function<R(S)> post_stage;
};

struct RipReport {
    std::vector<TraceRecord> original;
    std::vector<TraceRecord> ripped;
    std::optional<TraceDivergence> divergence;

    bool equivalent() const { return !divergence.has_value(); }
};

namespace detail {

inline void enable_rip_tracing(Simulator& sim) {
    auto& t = sim.tracer();
    t.enable(TraceKind::Schedule);
    t.enable(TraceKind::Execute);
    t.enable(TraceKind::Cancel);
    t.enable(TraceKind::Mark);
}

template <class R>
std::string describe(const R& value) {
    std::ostringstream os;
    os << value;
    return os.str();
}

inline void mark_outcome(Simulator& sim, std::string_view outcome, std::string_view detail) {
    sim.tracer().record(sim.now(), TraceKind::Mark).attr("outcome", outcome).attr("detail", detail);
}

inline std::string error_text(std::exception_ptr e) {
    try {
        std::rethrow_exception(e);
    } catch (const std::exception& ex) {
        return ex.what();
    } catch (...) {
        return "unknown";
    }
}

}  // namespace detail

/// Runs `original()` and the ripped pair in two fresh simulations with
/// kernel tracing and compares the traces. Both start from one zero-delay
/// event; the result (or failure) is recorded as a mark at the instant it
/// becomes known. `background` may schedule the same unrelated events in
/// each simulation before the start event is queued.
template <class S, class R>
RipReport check_rip(const std::function<Operation<R>()>& original, const RippedPair<S, R>& pair,
                    const std::function<void(Simulator&)>& background = {}) {
    RipReport report;
    {
        Simulator sim;
        detail::enable_rip_tracing(sim);
        if (background) background(sim);
        Operation<R> op;
        sim.schedule(Duration{0}, [&] {
            op = spawn(sim, original());
            auto record = [&sim, &op](detail::FrameBase& f) {
                if (f.state() == TaskState::Completed) {
                    detail::mark_outcome(sim, "completed", detail::describe(op.result()));
                } else {
                    detail::mark_outcome(sim, "failed", detail::error_text(f.error()));
                }
            };
            if (op.done()) {
                record(*op.frame());
            } else {
                op.frame()->add_waiter(record);
            }
        });
        sim.run_to_completion(1'000'000);
        report.original = sim.tracer().records();
    }
    {
        Simulator sim;
        detail::enable_rip_tracing(sim);
        if (background) background(sim);
        sim.schedule(Duration{0}, [&] {
            std::optional<S> state;
            try {
                state.emplace(pair.pre_stage());
            } catch (...) {
                detail::mark_outcome(sim, "failed", detail::error_text(std::current_exception()));
                return;
            }
            sim.schedule(pair.delay, [&sim, &pair, s = std::move(*state)]() mutable {
                try {
                    detail::mark_outcome(sim, "completed", detail::describe(pair.post_stage(std::move(s))));
                } catch (...) {
                    detail::mark_outcome(sim, "failed", detail::error_text(std::current_exception()));
                }
            });
        });
        sim.run_to_completion(1'000'000);
        report.ripped = sim.tracer().records();
    }
    report.divergence = diff_traces(report.original, report.ripped);
    return report;
}

}  // namespace cosim
