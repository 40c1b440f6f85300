#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <ostream>

namespace cosim {

/// A span of virtual time in ticks. One tick is one simulated nanosecond.
/// Signed so that a negative delay can be represented and rejected.
struct Duration {
    std::int64_t ticks = 0;

    constexpr Duration() = default;
    constexpr explicit Duration(std::int64_t t) : ticks(t) {}

    static constexpr Duration nanoseconds(std::int64_t n) { return Duration{n}; }
    static constexpr Duration microseconds(std::int64_t n) { return Duration{n * 1'000}; }
    static constexpr Duration milliseconds(std::int64_t n) { return Duration{n * 1'000'000}; }
    static constexpr Duration seconds(std::int64_t n) { return Duration{n * 1'000'000'000}; }
    static constexpr Duration zero() { return Duration{0}; }

    constexpr bool negative() const { return ticks < 0; }

    friend constexpr auto operator<=>(Duration, Duration) = default;
    friend constexpr Duration operator+(Duration a, Duration b) { return Duration{a.ticks + b.ticks}; }
    friend constexpr Duration operator-(Duration a, Duration b) { return Duration{a.ticks - b.ticks}; }
    friend constexpr Duration operator*(Duration a, std::int64_t k) { return Duration{a.ticks * k}; }
    friend constexpr Duration operator*(std::int64_t k, Duration a) { return Duration{a.ticks * k}; }
    friend constexpr Duration operator/(Duration a, std::int64_t k) { return Duration{a.ticks / k}; }
    constexpr Duration& operator+=(Duration o) {
        ticks += o.ticks;
        return *this;
    }

    friend std::ostream& operator<<(std::ostream& os, Duration d) { return os << d.ticks << "ns"; }
};

/// An instant on the virtual clock. Starts at zero and never decreases.
struct SimTime {
    std::uint64_t ticks = 0;

    constexpr SimTime() = default;
    constexpr explicit SimTime(std::uint64_t t) : ticks(t) {}

    static constexpr SimTime zero() { return SimTime{0}; }
    static constexpr SimTime max() { return SimTime{std::numeric_limits<std::uint64_t>::max()}; }

    friend constexpr auto operator<=>(SimTime, SimTime) = default;

    /// Precondition: d is non-negative (the kernel validates before calling).
    friend constexpr SimTime operator+(SimTime t, Duration d) {
        return SimTime{t.ticks + static_cast<std::uint64_t>(d.ticks)};
    }
    friend constexpr Duration operator-(SimTime a, SimTime b) {
        return Duration{static_cast<std::int64_t>(a.ticks) - static_cast<std::int64_t>(b.ticks)};
    }

    friend std::ostream& operator<<(std::ostream& os, SimTime t) { return os << "t=" << t.ticks; }
};

namespace literals {
constexpr Duration operator""_ns(unsigned long long n) { return Duration::nanoseconds(static_cast<std::int64_t>(n)); }
constexpr Duration operator""_us(unsigned long long n) { return Duration::microseconds(static_cast<std::int64_t>(n)); }
constexpr Duration operator""_ms(unsigned long long n) { return Duration::milliseconds(static_cast<std::int64_t>(n)); }
constexpr Duration operator""_s(unsigned long long n) { return Duration::seconds(static_cast<std::int64_t>(n)); }
}  // namespace literals

}  // namespace cosim
