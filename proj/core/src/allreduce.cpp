#include "cosim/allreduce.hpp"

#include "cosim/combinators.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace cosim::allreduce {

namespace {

std::int64_t add(std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
}
std::int64_t maximum(std::int64_t a, std::int64_t b) { return std::max(a, b); }
std::int64_t minimum(std::int64_t a, std::int64_t b) { return std::min(a, b); }

using Bounds = std::vector<std::pair<std::size_t, std::size_t>>;

struct RankPlan {
    NodeId self;
    NodeId next;
    IfaceId out;
    IfaceId in;
    std::size_t rank = 0;
    std::size_t n = 0;
};

Packet chunk_packet(const RankPlan& plan, const Bounds& bounds, const Vector& buf, std::size_t idx,
                    const ChunkMessageConfig& cfg) {
    const auto [b, e] = bounds[idx];
    Packet pkt;
    pkt.src = plan.self;
    pkt.dst = plan.next;
    pkt.size_bytes = chunk_packet_bytes(e - b, cfg);
    pkt.priority = cfg.priority;
    pkt.kind = kChunkKind;
    pkt.payload = detail::encode_chunk(idx, buf.data() + b, buf.data() + e);
    return pkt;
}

// Fails on a dropped chunk so the step's join aborts the paired receive.
Operation<TxDone> send_delivered(Network& net, NodeId self, IfaceId out, Packet pkt) {
    TxDone done = co_await net.send(self, out, std::move(pkt));
    if (done.dropped) throw std::runtime_error("allreduce chunk " + std::to_string(done.packet_id) + " was dropped");
    co_return done;
}

Operation<Vector> rank_body(Network& net, RankPlan plan, Vector buf, Bounds bounds, ReduceOp op,
                            ChunkMessageConfig cfg) {
    const std::size_t n = plan.n;
    Vector incoming;
    // Reduce-scatter: after step s, chunk (rank - s - 1) holds s + 2 contributions.
    for (std::size_t step = 0; step + 1 < n; ++step) {
        const std::size_t send_idx = (plan.rank + n - step) % n;
        Packet pkt = chunk_packet(plan, bounds, buf, send_idx, cfg);
        auto joined = co_await all(send_delivered(net, plan.self, plan.out, std::move(pkt)), net.recv(plan.self, plan.in));
        const std::size_t idx = detail::decode_chunk(std::get<1>(joined).payload, incoming);
        const auto [b, e] = bounds.at(idx);
        if (incoming.size() != e - b) throw std::runtime_error("allreduce chunk has the wrong length");
        for (std::size_t i = b; i < e; ++i) buf[i] = op.apply(buf[i], incoming[i - b]);
    }
    // Allgather: circulate the fully reduced chunks.
    for (std::size_t step = 0; step + 1 < n; ++step) {
        const std::size_t send_idx = (plan.rank + 1 + n - step) % n;
        Packet pkt = chunk_packet(plan, bounds, buf, send_idx, cfg);
        auto joined = co_await all(send_delivered(net, plan.self, plan.out, std::move(pkt)), net.recv(plan.self, plan.in));
        const std::size_t idx = detail::decode_chunk(std::get<1>(joined).payload, incoming);
        const auto [b, e] = bounds.at(idx);
        if (incoming.size() != e - b) throw std::runtime_error("allreduce chunk has the wrong length");
        std::copy(incoming.begin(), incoming.end(), buf.begin() + static_cast<std::ptrdiff_t>(b));
    }
    co_return buf;
}

}  // namespace

ReduceOp ReduceOp::sum() { return {"sum", &add}; }
ReduceOp ReduceOp::max() { return {"max", &maximum}; }
ReduceOp ReduceOp::min() { return {"min", &minimum}; }

std::optional<ReduceOp> ReduceOp::by_name(std::string_view name) {
    for (auto op : {sum(), max(), min()}) {
        if (op.name == name) return op;
    }
    return std::nullopt;
}

std::vector<std::pair<std::size_t, std::size_t>> chunk_bounds(std::size_t length, std::size_t n) {
    if (n == 0) throw std::invalid_argument("chunk count must be positive");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(n);
    const std::size_t base = length / n;
    const std::size_t extra = length % n;
    std::size_t at = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t len = base + (i < extra ? 1 : 0);
        out.emplace_back(at, at + len);
        at += len;
    }
    return out;
}

std::uint32_t chunk_packet_bytes(std::size_t elements, const ChunkMessageConfig& cfg) {
    const std::uint64_t bytes = std::uint64_t{cfg.header_bytes} + elements * std::uint64_t{cfg.element_bytes};
    return static_cast<std::uint32_t>(std::max<std::uint64_t>(bytes, 1));
}

Vector naive_allreduce_oracle(const std::vector<Vector>& inputs, ReduceOp op) {
    if (inputs.empty()) return {};
    Vector out = inputs.front();
    for (std::size_t r = 1; r < inputs.size(); ++r) {
        if (inputs[r].size() != out.size()) throw std::invalid_argument("allreduce inputs differ in length");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = op.apply(out[i], inputs[r][i]);
    }
    return out;
}

std::vector<Operation<Vector>> ring_allreduce(Network& net, const World& world, std::vector<Vector> locals,
                                              ReduceOp op, ChunkMessageConfig cfg) {
    const auto links = detail::resolve_ring(net, world, locals);
    const std::size_t n = world.ranks.size();
    const auto bounds = chunk_bounds(world.length, n);
    std::vector<Operation<Vector>> ops;
    ops.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        RankPlan plan{world.ranks[r], world.ranks[(r + 1) % n], links.to_next[r], links.from_prev[r], r, n};
        ops.push_back(spawn(net.simulation(), rank_body(net, plan, std::move(locals[r]), bounds, op, cfg)));
    }
    return ops;
}

namespace detail {

RingLinks resolve_ring(const Network& net, const World& world, const std::vector<Vector>& locals) {
    const std::size_t n = world.ranks.size();
    if (n < 2) throw std::invalid_argument("allreduce needs at least two ranks");
    if (locals.size() != n) throw std::invalid_argument("allreduce needs one local vector per rank");
    for (const auto& v : locals) {
        if (v.size() != world.length) throw std::invalid_argument("allreduce local vector length mismatch");
    }
    const auto& topo = net.topology();
    RingLinks links;
    for (std::size_t r = 0; r < n; ++r) {
        const NodeId self = world.ranks[r];
        const NodeId next = world.ranks[(r + 1) % n];
        const NodeId prev = world.ranks[(r + n - 1) % n];
        const auto out = topo.iface_to(self, next);
        const auto in = topo.iface_to(self, prev);
        if (!out || !in) {
            throw std::invalid_argument("allreduce rank " + std::string(topo.name(self)) +
                                        " is not adjacent to its ring neighbours");
        }
        links.to_next.push_back(*out);
        links.from_prev.push_back(*in);
    }
    return links;
}

Bytes encode_chunk(std::size_t index, const std::int64_t* begin, const std::int64_t* end) {
    PayloadWriter w;
    w.u64(index).u64(static_cast<std::uint64_t>(end - begin));
    for (auto* p = begin; p != end; ++p) w.i64(*p);
    return w.take();
}

std::size_t decode_chunk(const Bytes& payload, Vector& out) {
    PayloadReader r(payload);
    const auto index = static_cast<std::size_t>(r.u64());
    const auto count = r.u64();
    out.clear();
    for (std::uint64_t i = 0; i < count; ++i) out.push_back(r.i64());
    if (!r.done()) throw std::runtime_error("allreduce chunk has trailing bytes");
    return index;
}

}  // namespace detail

}  // namespace cosim::allreduce
