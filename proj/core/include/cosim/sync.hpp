#pragma once

#include "cosim/interop.hpp"

#include <deque>
#include <vector>
#include <utility>

namespace cosim {

/// FIFO channel between tasks of one simulation. recv() completes at once
/// when an item is buffered; otherwise receivers are served in call order.
/// A receiver aborted before delivery loses its place, not an item.
template <class T>
class Mailbox {
public:
    void send(T item) {
        while (!receivers_.empty()) {
            Callback<T> cb = std::move(receivers_.front());
            receivers_.pop_front();
            if (cb.active()) {
                cb(std::move(item));
                return;
            }
        }
        items_.push_back(std::move(item));
    }

    Operation<T> recv() {
        return from_callback<T>([this](Callback<T> cb) {
            if (!items_.empty()) {
                T item = std::move(items_.front());
                items_.pop_front();
                cb(std::move(item));
            } else {
                receivers_.push_back(std::move(cb));
            }
        });
    }

    std::size_t buffered() const { return items_.size(); }

private:
    std::deque<T> items_;
    std::deque<Callback<T>> receivers_;
};

/// Edge-triggered wakeup: wait() completes at the next notify_all().
class Signal {
public:
    Operation<Unit> wait() {
        return from_callback<Unit>([this](Callback<Unit> cb) {
            // Waits abandoned by a timeout or race are dropped here.
            std::erase_if(waiters_, [](const Callback<Unit>& w) { return !w.active(); });
            waiters_.push_back(std::move(cb));
        });
    }

    /// Wakes every current waiter in wait() order; returns how many woke.
    std::size_t notify_all() {
        std::size_t woken = 0;
        auto batch = std::exchange(waiters_, {});
        for (auto& cb : batch) {
            if (cb.active()) {
                cb(Unit{});
                ++woken;
            }
        }
        return woken;
    }

private:
    std::vector<Callback<Unit>> waiters_;
};

}  // namespace cosim
