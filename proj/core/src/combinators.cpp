#include "cosim/combinators.hpp"

namespace cosim::detail {

Group::Group(Mode mode, std::vector<FrameBase*> inputs)
    : mode_(mode), inputs_(std::move(inputs)), tokens_(inputs_.size(), 0) {}

Group::~Group() { detach(); }

std::optional<std::size_t> Group::evaluate() const {
    switch (mode_) {
        case Mode::FirstCompleted: {
            bool all_terminal = true;
            for (std::size_t i = 0; i < inputs_.size(); ++i) {
                const TaskState s = inputs_[i]->state();
                if (s == TaskState::Completed) return i;
                if (!is_terminal(s)) all_terminal = false;
            }
            if (all_terminal) return npos;
            return std::nullopt;
        }
        case Mode::FirstTerminal:
            for (std::size_t i = 0; i < inputs_.size(); ++i) {
                if (is_terminal(inputs_[i]->state())) return i;
            }
            return std::nullopt;
        case Mode::Join: {
            bool all_completed = true;
            for (std::size_t i = 0; i < inputs_.size(); ++i) {
                const TaskState s = inputs_[i]->state();
                if (s == TaskState::Failed || s == TaskState::Aborted) return i;
                if (s != TaskState::Completed) all_completed = false;
            }
            if (all_completed) return npos;
            return std::nullopt;
        }
    }
    return std::nullopt;
}

bool Group::arm(FrameBase& caller) {
    Simulator* sim = caller.simulation();
    for (FrameBase* in : inputs_) {
        if (in->state() == TaskState::Created) {
            in->start(*sim);
        } else if (in->simulation() != sim) {
            throw ContractViolation("combinator input runs on another simulation");
        }
    }
    if (caller.parked()) {
        finish(npos);
        return true;
    }
    if (auto d = evaluate()) {
        finish(*d);
        return false;
    }
    caller_ = &caller;
    for (std::size_t i = 0; i < inputs_.size(); ++i) {
        if (is_terminal(inputs_[i]->state())) continue;
        tokens_[i] = inputs_[i]->add_waiter([this, i](FrameBase&) { on_input(i); });
    }
    return caller.suspend_on_hook(*this, inputs_);
}

void Group::on_input(std::size_t index) {
    tokens_[index] = 0;
    if (resolved_) return;
    auto d = evaluate();
    if (!d) return;
    finish(*d);
    caller_->wake();
}

void Group::finish(std::size_t decided) {
    resolved_ = true;
    decided_ = decided;
    detach();
    for (FrameBase* in : inputs_) {
        if (!is_terminal(in->state())) in->abort();
    }
}

void Group::on_abort(FrameBase&) {
    // The caller owns every input, so aborting it tears the group down.
    caller_ = nullptr;
    finish(npos);
}

void Group::detach() {
    for (std::size_t i = 0; i < inputs_.size(); ++i) {
        if (tokens_[i] != 0) {
            inputs_[i]->remove_waiter(tokens_[i]);
            tokens_[i] = 0;
        }
    }
}

}  // namespace cosim::detail
