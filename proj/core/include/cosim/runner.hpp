#pragma once

#include "cosim/scenario.hpp"
#include "cosim/simulator.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace cosim {

struct RunOptions {
    /// Overrides Scenario::seed.
    std::optional<std::uint64_t> seed;
    /// Overrides the scenario's run limit.
    std::optional<SimTime> until;
    std::optional<std::uint64_t> max_events;
    /// Receives every trace record as it is emitted.
    std::ostream* trace = nullptr;
    /// Retains records in RunReport::records.
    bool keep_records = false;
};

struct QueueMaximum {
    std::string node;
    std::uint32_t iface = 0;
    std::uint8_t prio = 0;
    std::size_t depth = 0;
};

/// One flow, rank or round; `finished` is empty when it never completed.
struct Completion {
    std::string name;
    std::optional<SimTime> finished;
};

struct RipSummary {
    /// Instant of the last routing-table change.
    std::optional<SimTime> converged_at;
    /// Whether every table equals the hop-count oracle over the links that
    /// are up at the end of the run.
    bool matches_oracle = false;
    std::size_t routes = 0;
    std::uint64_t periodic_updates = 0;
    std::uint64_t triggered_updates = 0;
};

struct RunReport {
    std::string scenario;
    Protocol protocol = Protocol::Allreduce;
    std::uint64_t seed = 0;
    RunOutcome outcome = RunOutcome::Completed;
    SimStats stats;
    std::string digest;
    std::uint64_t trace_records = 0;

    /// Latest completion across flows, ranks or rounds, once all completed.
    std::optional<SimTime> completion;
    /// False when a protocol task failed or its result disagrees with the
    /// reference computation.
    bool ok = true;
    std::string error;

    std::vector<QueueMaximum> queues;
    std::vector<Completion> completions;
    std::optional<std::uint64_t> checksum;
    std::optional<RipSummary> rip;

    std::vector<TraceRecord> records;
};

/// Builds the topology and protocol of `s`, runs it to its limit (or until
/// no event remains) and collects metrics. Same scenario and seed give the
/// same report and trace bytes.
RunReport run_scenario(const Scenario& s, const RunOptions& opts = {});

}  // namespace cosim
