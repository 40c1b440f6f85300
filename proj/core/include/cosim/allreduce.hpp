#pragma once

#include "cosim/net.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace cosim::allreduce {

using Vector = std::vector<std::int64_t>;

inline constexpr std::uint16_t kChunkKind = 0x10;

/// Associative, commutative element operation.
struct ReduceOp {
    std::string_view name;
    std::int64_t (*apply)(std::int64_t, std::int64_t) = nullptr;

    static ReduceOp sum();
    static ReduceOp max();
    static ReduceOp min();
    static std::optional<ReduceOp> by_name(std::string_view name);
};

/// Ranks in ring order; rank r sends to r+1 and receives from r-1, which
/// must be adjacent in the topology.
struct World {
    std::vector<NodeId> ranks;
    std::size_t length = 0;
};

struct ChunkMessageConfig {
    std::uint32_t element_bytes = 8;
    std::uint32_t header_bytes = 0;
    std::uint8_t priority = 0;
};

/// [begin, end) of each of n contiguous chunks covering [0, length); the
/// first length % n chunks are one element longer.
std::vector<std::pair<std::size_t, std::size_t>> chunk_bounds(std::size_t length, std::size_t n);

/// Wire size of a chunk message (at least one byte).
std::uint32_t chunk_packet_bytes(std::size_t elements, const ChunkMessageConfig& cfg);

/// Elementwise fold of all inputs, no simulation.
Vector naive_allreduce_oracle(const std::vector<Vector>& inputs, ReduceOp op);

/// Ring allreduce: N-1 reduce-scatter steps then N-1 allgather steps, each
/// a joint send-to-next and receive-from-previous. Returns one started
/// operation per rank yielding that rank's reduced vector; a dropped chunk
/// fails that rank's operation.
/// Throws std::invalid_argument on fewer than two ranks, length mismatch,
/// or non-adjacent ring neighbours.
std::vector<Operation<Vector>> ring_allreduce(Network& net, const World& world, std::vector<Vector> locals,
                                              ReduceOp op, ChunkMessageConfig cfg = {});

/// The same algorithm written directly against the network's callback
/// interface; `on_done(rank, result)` runs when a rank finishes. Used as the
/// paired baseline for the coroutine form. A dropped chunk throws
/// std::runtime_error from inside the send completion.
void ring_allreduce_callbacks(Network& net, const World& world, std::vector<Vector> locals, ReduceOp op,
                              ChunkMessageConfig cfg, std::function<void(std::size_t, Vector)> on_done);

namespace detail {

struct RingLinks {
    std::vector<IfaceId> to_next;
    std::vector<IfaceId> from_prev;
};

/// Validates the world and resolves every rank's ring interfaces.
RingLinks resolve_ring(const Network& net, const World& world, const std::vector<Vector>& locals);

Bytes encode_chunk(std::size_t index, const std::int64_t* begin, const std::int64_t* end);
/// Returns the chunk index; values are written to `out`.
std::size_t decode_chunk(const Bytes& payload, Vector& out);

}  // namespace detail

}  // namespace cosim::allreduce
