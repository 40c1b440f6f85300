#pragma once

#include "cosim/task.hpp"

#include <concepts>
#include <cstddef>
#include <exception>
#include <optional>
#include <stdexcept>
#include <tuple>
#include <type_traits>
#include <utility>
#include <vector>

namespace cosim {

template <class T>
struct RaceOutcome {
    std::size_t winner_index = 0;
    T value;
};

/// Finished(value) when `value` is set, TimedOut otherwise.
template <class T>
struct TimeoutOutcome {
    std::optional<T> value;

    bool finished() const { return value.has_value(); }
    bool timed_out() const { return !value.has_value(); }
};

/// Every input of any() failed or was aborted.
class AggregateError : public std::runtime_error {
public:
    explicit AggregateError(std::vector<std::exception_ptr> errors)
        : std::runtime_error("all " + std::to_string(errors.size()) + " raced operations failed"),
          errors_(std::move(errors)) {}

    const std::vector<std::exception_ptr>& errors() const { return errors_; }

private:
    std::vector<std::exception_ptr> errors_;
};

namespace detail {

/// Waits on a fixed set of input frames on behalf of one suspended caller.
/// Inputs are started in index order; the group resolves as soon as its
/// rule is decided, aborts every non-terminal input, then resumes the
/// caller inline.
class Group final : public AbortHook {
public:
    enum class Mode : std::uint8_t {
        FirstCompleted,  // any(): first Completed wins; fails once all are terminal
        FirstTerminal,   // with_timeout(): first terminal input decides
        Join,            // all(): first Failed/Aborted decides, else all Completed
    };
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    Group(Mode mode, std::vector<FrameBase*> inputs);
    Group(const Group&) = delete;
    Group& operator=(const Group&) = delete;
    ~Group();

    /// Returns true if the caller stays suspended.
    bool arm(FrameBase& caller);

    /// Index that decided the group (winner, or first failure for Join).
    /// npos for a completed Join or an any() where nothing completed.
    std::size_t decided() const { return decided_; }

    void on_abort(FrameBase& caller) override;

private:
    std::optional<std::size_t> evaluate() const;
    void on_input(std::size_t index);
    void finish(std::size_t decided);
    void detach();

    Mode mode_;
    std::vector<FrameBase*> inputs_;
    std::vector<std::uint64_t> tokens_;
    FrameBase* caller_ = nullptr;
    std::size_t decided_ = npos;
    bool resolved_ = false;
};

struct GroupAwaiter {
    Group& group;

    bool await_ready() const noexcept { return false; }
    template <FramePromise P>
    bool await_suspend(std::coroutine_handle<P> caller) {
        return group.arm(caller.promise());
    }
    std::size_t await_resume() const { return group.decided(); }
};

template <class T>
std::vector<FrameBase*> frames_of(const std::vector<Operation<T>>& ops) {
    std::vector<FrameBase*> out;
    out.reserve(ops.size());
    for (const auto& op : ops) out.push_back(op.frame());
    return out;
}

template <class T>
void require_owning_inputs(const std::vector<Operation<T>>& ops, const char* what) {
    if (ops.empty()) throw std::invalid_argument(std::string(what) + ": empty operation list");
    for (const auto& op : ops) {
        if (!op.valid() || !op.owning()) throw ContractViolation(std::string(what) + " requires owning handles");
    }
}

template <class T>
Operation<RaceOutcome<T>> any_body(std::vector<Operation<T>> ops) {
    Group group(Group::Mode::FirstCompleted, frames_of(ops));
    const std::size_t winner = co_await GroupAwaiter{group};
    if (winner == Group::npos) {
        std::vector<std::exception_ptr> errors;
        for (const auto& op : ops) errors.push_back(op.error());
        throw AggregateError(std::move(errors));
    }
    co_return RaceOutcome<T>{winner, ops[winner].take_result()};
}

template <class T>
Operation<std::vector<T>> all_body(std::vector<Operation<T>> ops) {
    Group group(Group::Mode::Join, frames_of(ops));
    const std::size_t failed = co_await GroupAwaiter{group};
    if (failed != Group::npos) std::rethrow_exception(ops[failed].error());
    std::vector<T> values;
    values.reserve(ops.size());
    for (auto& op : ops) values.push_back(op.take_result());
    co_return values;
}

template <class... Ts>
Operation<std::tuple<Ts...>> all_tuple_body(Operation<Ts>... ops) {
    Group group(Group::Mode::Join, std::vector<FrameBase*>{ops.frame()...});
    const std::size_t failed = co_await GroupAwaiter{group};
    if (failed != Group::npos) {
        std::exception_ptr errors[] = {ops.error()...};
        std::rethrow_exception(errors[failed]);
    }
    co_return std::tuple<Ts...>(ops.take_result()...);
}

template <class T>
Operation<TimeoutOutcome<T>> timeout_body(Operation<T> op, Operation<Unit> timer) {
    Group group(Group::Mode::FirstTerminal, {op.frame(), timer.frame()});
    const std::size_t first = co_await GroupAwaiter{group};
    if (first == 0) co_return TimeoutOutcome<T>{op.take_result()};
    co_return TimeoutOutcome<T>{std::nullopt};
}

template <class T>
Operation<T> pure_body(T value) {
    co_return value;
}

}  // namespace detail

/// Races `ops`: completes with the first input to complete (ties go to the
/// lower index, since inputs start in index order) after aborting the rest.
/// Fails with AggregateError once every input has failed or been aborted.
template <class T>
Operation<RaceOutcome<T>> any(std::vector<Operation<T>> ops) {
    detail::require_owning_inputs(ops, "any");
    return detail::any_body(std::move(ops));
}

/// Joins `ops`: values in input order, completing when the last input does.
/// The first failure aborts the remaining inputs and fails the join.
template <class T>
Operation<std::vector<T>> all(std::vector<Operation<T>> ops) {
    detail::require_owning_inputs(ops, "all");
    return detail::all_body(std::move(ops));
}

template <class T, class... Ts>
Operation<std::tuple<T, Ts...>> all(Operation<T> first, Operation<Ts>... rest) {
    if (!first.owning() || !(rest.owning() && ...)) throw ContractViolation("all requires owning handles");
    return detail::all_tuple_body(std::move(first), std::move(rest)...);
}

/// any([op, sleep(d)]) reshaped: TimedOut leaves `op` aborted; a failure of
/// `op` before the deadline propagates as the error of the result.
template <class T>
Operation<TimeoutOutcome<T>> with_timeout(Operation<T> op, Duration d) {
    if (!op.owning()) throw ContractViolation("with_timeout requires an owning handle");
    return detail::timeout_body(std::move(op), sleep(d));
}

/// An operation that completes with `value` as soon as it starts.
template <class T>
Operation<std::decay_t<T>> pure(T&& value) {
    return detail::pure_body<std::decay_t<T>>(std::forward<T>(value));
}

template <class T>
class ChainedOperation;

namespace detail {

template <class R>
struct StageResult {
    using type = R;
};
template <class R>
struct StageResult<Operation<R>> {
    using type = R;
};
template <>
struct StageResult<void> {
    using type = Unit;
};

template <class T, class F>
using stage_result_t = typename StageResult<std::invoke_result_t<F&, T>>::type;

template <class T, class F>
Operation<stage_result_t<T, F>> chain_body(Operation<T> first, F stage) {
    using R = std::invoke_result_t<F&, T>;
    T value = co_await std::move(first);
    if constexpr (std::is_void_v<R>) {
        stage(std::move(value));
        co_return Unit{};
    } else if constexpr (std::is_same_v<R, Operation<stage_result_t<T, F>>>) {
        auto next = stage(std::move(value));
        auto result = co_await std::move(next);
        co_return result;
    } else {
        co_return stage(std::move(value));
    }
}

}  // namespace detail

/// A lazy sequence of stages. Nothing runs until the chain is awaited or
/// spawned; each stage receives the previous stage's value and may return
/// a plain value or another operation. A failing stage skips the rest.
template <class T>
class [[nodiscard]] ChainedOperation {
public:
    using value_type = T;

    explicit ChainedOperation(Operation<T> op) : op_(std::move(op)) {}

    /// True once the first stage has started.
    bool materialized() const { return op_.valid() && op_.state() != TaskState::Created; }

    template <class F>
    ChainedOperation<detail::stage_result_t<T, F>> then(F stage) && {
        return ChainedOperation<detail::stage_result_t<T, F>>(detail::chain_body(std::move(op_), std::move(stage)));
    }

    Operation<T> into_operation() && { return std::move(op_); }

    detail::OwnedAwaiter<T> operator co_await() && noexcept { return {std::move(op_)}; }

private:
    Operation<T> op_;
};

template <class T, class F>
ChainedOperation<detail::stage_result_t<T, F>> chain(Operation<T> first, F stage) {
    return ChainedOperation<T>(std::move(first)).then(std::move(stage));
}

template <class T, class F>
ChainedOperation<detail::stage_result_t<T, F>> chain(ChainedOperation<T> first, F stage) {
    return std::move(first).then(std::move(stage));
}

template <class T>
Operation<T> spawn(Simulator& sim, ChainedOperation<T> chain) {
    return spawn(sim, std::move(chain).into_operation());
}

}  // namespace cosim
