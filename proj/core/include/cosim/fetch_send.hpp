#pragma once

#include "cosim/net.hpp"

#include <functional>
#include <vector>

namespace cosim::demo {

inline constexpr std::uint16_t kFetchRequest = 0x40;
inline constexpr std::uint16_t kFetchResponse = 0x41;
inline constexpr std::uint16_t kForward = 0x42;
inline constexpr std::uint16_t kForwardAck = 0x43;

struct FetchSendConfig {
    std::uint32_t rounds = 4;
    std::uint32_t request_bytes = 64;
    std::uint32_t data_bytes = 4096;
    /// Store-side lookup time before answering.
    Duration lookup{2'000};
    /// Seeds the data the store serves.
    std::uint64_t seed = 1;

    void validate() const;
};

struct FetchSendNodes {
    NodeId client;
    NodeId store;
    NodeId sink;
};

struct FetchSendResult {
    std::uint32_t rounds = 0;
    /// Instant the client saw each round's acknowledgement.
    std::vector<SimTime> round_done;
    /// FNV-1a over every byte the sink received, as reported back.
    std::uint64_t checksum = 0;
};

/// store - client - sink.
TopologySpec fetch_send_topology(LinkConfig link);

/// The bytes the store serves in `round`.
Bytes fetch_send_data(const FetchSendConfig& cfg, std::uint32_t round);

/// Per round the client fetches data from the store, forwards it to the
/// sink and waits for the sink's acknowledgement. Starts the store and sink
/// services and the client; the returned operation is the client.
Operation<FetchSendResult> fetch_and_send(Network& net, FetchSendNodes nodes, FetchSendConfig cfg);

/// The same exchange written as nested callbacks; executes the same events.
void fetch_and_send_callbacks(Network& net, FetchSendNodes nodes, FetchSendConfig cfg,
                              std::function<void(FetchSendResult)> done);

namespace detail {
std::uint64_t fnv1a(const Bytes& bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
}  // namespace detail

}  // namespace cosim::demo
