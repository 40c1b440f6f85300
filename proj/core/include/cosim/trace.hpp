#pragma once

#include "cosim/time.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cosim {

enum class TraceKind : std::uint8_t {
    Schedule,
    Execute,
    Cancel,
    Tx,
    Rx,
    Drop,
    Pause,
    Resume,
    RouteUpdate,
    TaskState,
    Mark,
};

inline constexpr std::size_t kTraceKindCount = 11;

std::string_view to_string(TraceKind kind);
std::optional<TraceKind> trace_kind_from_string(std::string_view name);

/// One line of a trace. Records in a stream are strictly increasing in
/// (time, seq); seq is the per-stream record counter, so several records
/// emitted while one event executes still order totally.
struct TraceRecord {
    SimTime time;
    std::uint64_t seq = 0;
    TraceKind kind = TraceKind::Mark;
    std::vector<std::pair<std::string, std::string>> attrs;

    const std::string* find(std::string_view key) const;

    /// `t=<ticks> seq=<n> kind=<kind> k=v ...`; keys keep emission order.
    std::string to_line() const;
    static std::optional<TraceRecord> parse(std::string_view line);

    friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

std::ostream& operator<<(std::ostream& os, const TraceRecord& rec);

/// 64-bit FNV-1a over the record lines (each terminated by '\n').
class TraceDigest {
public:
    void update(std::string_view line);
    std::uint64_t value() const { return state_; }
    std::string hex() const;

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

class Tracer;

/// Collects attributes for one record and commits it on destruction.
/// A builder created for a disabled kind does nothing.
class TraceBuilder {
public:
    TraceBuilder(Tracer* tracer, SimTime time, TraceKind kind);
    TraceBuilder(const TraceBuilder&) = delete;
    TraceBuilder& operator=(const TraceBuilder&) = delete;
    ~TraceBuilder();

    TraceBuilder& attr(std::string_view key, std::string_view value) {
        if (tracer_) add(key, std::string(value));
        return *this;
    }
    TraceBuilder& attr(std::string_view key, const std::string& value) { return attr(key, std::string_view(value)); }
    TraceBuilder& attr(std::string_view key, const char* value) { return attr(key, std::string_view(value)); }
    TraceBuilder& attr(std::string_view key, std::uint64_t value) {
        if (tracer_) add(key, std::to_string(value));
        return *this;
    }
    TraceBuilder& attr(std::string_view key, std::int64_t value) {
        if (tracer_) add(key, std::to_string(value));
        return *this;
    }
    TraceBuilder& attr(std::string_view key, std::uint32_t value) { return attr(key, std::uint64_t{value}); }
    TraceBuilder& attr(std::string_view key, int value) { return attr(key, std::int64_t{value}); }

private:
    void add(std::string_view key, std::string value);

    Tracer* tracer_;
    TraceRecord record_;
};

/// Trace sink owned by a simulation. Disabled kinds cost one branch.
/// Records can be retained in memory, streamed to an ostream, or both;
/// the digest always covers every emitted record.
class Tracer {
public:
    Tracer() = default;

    void enable(TraceKind kind, bool on = true);
    void enable_all(bool on = true);
    /// Kernel, network and protocol kinds; TaskState stays off because
    /// callback-style code has no frames to report.
    void enable_default();
    bool enabled(TraceKind kind) const { return (mask_ >> static_cast<unsigned>(kind)) & 1U; }
    bool any_enabled() const { return mask_ != 0; }

    void keep_records(bool keep) { keep_ = keep; }
    void stream_to(std::ostream* os) { stream_ = os; }

    TraceBuilder record(SimTime time, TraceKind kind) {
        return TraceBuilder(enabled(kind) ? this : nullptr, time, kind);
    }

    const std::vector<TraceRecord>& records() const { return records_; }
    std::uint64_t emitted() const { return next_seq_; }
    const TraceDigest& digest() const { return digest_; }

private:
    friend class TraceBuilder;
    void commit(TraceRecord&& rec);

    std::uint32_t mask_ = 0;
    bool keep_ = true;
    std::ostream* stream_ = nullptr;
    std::uint64_t next_seq_ = 0;
    std::vector<TraceRecord> records_;
    TraceDigest digest_;
};

/// First record index at which two streams differ (a missing record on
/// one side counts as a difference).
struct TraceDivergence {
    std::size_t index = 0;
    std::optional<TraceRecord> left;
    std::optional<TraceRecord> right;
};

std::optional<TraceDivergence> diff_traces(const std::vector<TraceRecord>& a, const std::vector<TraceRecord>& b);

/// Reads a trace file written by Tracer::stream_to. Throws std::runtime_error
/// naming the line on malformed input.
std::vector<TraceRecord> read_trace(std::istream& in);

}  // namespace cosim
