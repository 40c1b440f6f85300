#pragma once

#include "cosim/allreduce.hpp"
#include "cosim/fetch_send.hpp"
#include "cosim/pfc.hpp"
#include "cosim/rip.hpp"
#include "cosim/topology.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cosim {

enum class Protocol : std::uint8_t { Allreduce, HpccPfc, Rip, FetchSend };

std::string_view to_string(Protocol p);

/// Which of the paired implementations a scenario runs.
enum class Style : std::uint8_t { Coroutine, Callback };

/// A rejected scenario: names the offending field and its source line.
class ScenarioError : public std::runtime_error {
public:
    enum class Kind : std::uint8_t {
        Io,
        Syntax,
        MissingField,
        InvalidValue,
        UnknownProtocol,
        NegativeDuration,
        DanglingNode,
        Invariant,
    };

    ScenarioError(Kind kind, std::string field, int line, const std::string& message);

    Kind kind() const { return kind_; }
    const std::string& field() const { return field_; }
    /// 1-based; 0 when no position is known.
    int line() const { return line_; }

private:
    Kind kind_;
    std::string field_;
    int line_;
};

std::string_view to_string(ScenarioError::Kind kind);

/// Either an explicit node/link list or a generator. Random graphs are
/// connected, have exactly `links` links and depend on the run seed.
struct TopologySource {
    enum class Kind : std::uint8_t { Explicit, Line, Ring, Random };
    Kind kind = Kind::Explicit;
    TopologySpec spec;
    std::size_t nodes = 0;
    std::size_t links = 0;
    LinkConfig link{Duration{1'000}, 1'000'000'000};

    TopologySpec build(std::uint64_t seed) const;
    /// Node names, which never depend on the seed.
    std::vector<std::string> node_names() const;
    std::size_t link_count() const;
};

struct AllreduceParams {
    std::vector<std::string> ranks;
    std::size_t length = 0;
    allreduce::ReduceOp op = allreduce::ReduceOp::sum();
    allreduce::ChunkMessageConfig message{};
    Style style = Style::Coroutine;
    /// Explicit per-rank vectors; otherwise drawn from the seed.
    std::optional<std::vector<allreduce::Vector>> inputs;
};

struct FlowParams {
    std::uint64_t id = 0;
    std::string src;
    std::string dst;
    std::uint64_t bytes = 0;
    std::uint64_t window = 0;
    std::uint8_t priority = 3;
    Duration start{0};
};

struct HpccPfcParams {
    std::vector<std::string> switches;
    pfc::PfcConfig pfc{};
    pfc::SenderParams sender{};
    std::vector<FlowParams> flows;
};

struct LinkEventParams {
    /// Index into the topology's links.
    std::size_t link = 0;
    Duration at{0};
    std::optional<Duration> repair_at;
};

struct RipParams {
    rip::RipTimers timers{};
    std::vector<LinkEventParams> failures;
};

struct FetchSendParams {
    std::string client = "client";
    std::string store = "store";
    std::string sink = "sink";
    demo::FetchSendConfig config{};
    Style style = Style::Coroutine;
};

/// A fully validated scenario.
struct Scenario {
    std::string name;
    Protocol protocol = Protocol::Allreduce;
    std::uint64_t seed = 0;
    std::optional<Duration> until;
    std::uint64_t max_events = 50'000'000;
    TopologySource topology;

    std::optional<AllreduceParams> allreduce;
    std::optional<HpccPfcParams> hpcc_pfc;
    std::optional<RipParams> rip;
    std::optional<FetchSendParams> fetch_send;
};

/// Parses and validates; throws ScenarioError.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);

/// "250ns", "3us", "1.5ms", "2s" or a bare tick count.
std::optional<Duration> parse_duration(std::string_view text);
/// "10Gbps", "100Mbps", "56Kbps", "800bps" or a bare bits-per-second count.
std::optional<std::uint64_t> parse_bandwidth(std::string_view text);

}  // namespace cosim
