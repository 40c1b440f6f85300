// Ring allreduce against the callback interface. Kept step-for-step in line
// with rank_body in allreduce.cpp so the two forms execute identical events.
#include "cosim/allreduce.hpp"

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <string>

namespace cosim::allreduce {

namespace {

struct RankState {
    Network* net = nullptr;
    NodeId self;
    NodeId next;
    IfaceId out;
    IfaceId in;
    std::size_t rank = 0;
    std::size_t n = 0;
    Vector buf;
    std::vector<std::pair<std::size_t, std::size_t>> bounds;
    ReduceOp op;
    ChunkMessageConfig cfg;
    std::function<void(std::size_t, Vector)> on_done;

    std::size_t step = 0;  // 0 .. 2(n-1)
    int outstanding = 0;
    Packet received;
};

void run_step(const std::shared_ptr<RankState>& st);

void step_joined(const std::shared_ptr<RankState>& st) {
    Vector incoming;
    const std::size_t idx = detail::decode_chunk(st->received.payload, incoming);
    const auto [b, e] = st->bounds.at(idx);
    if (incoming.size() != e - b) throw std::runtime_error("allreduce chunk has the wrong length");
    if (st->step < st->n - 1) {
        for (std::size_t i = b; i < e; ++i) st->buf[i] = st->op.apply(st->buf[i], incoming[i - b]);
    } else {
        std::copy(incoming.begin(), incoming.end(), st->buf.begin() + static_cast<std::ptrdiff_t>(b));
    }
    ++st->step;
    run_step(st);
}

void run_step(const std::shared_ptr<RankState>& st) {
    const std::size_t n = st->n;
    if (st->step == 2 * (n - 1)) {
        if (st->on_done) st->on_done(st->rank, std::move(st->buf));
        return;
    }
    const bool scatter = st->step < n - 1;
    const std::size_t s = scatter ? st->step : st->step - (n - 1);
    const std::size_t send_idx = scatter ? (st->rank + n - s) % n : (st->rank + 1 + n - s) % n;
    const auto [b, e] = st->bounds[send_idx];

    Packet pkt;
    pkt.src = st->self;
    pkt.dst = st->next;
    pkt.size_bytes = chunk_packet_bytes(e - b, st->cfg);
    pkt.priority = st->cfg.priority;
    pkt.kind = kChunkKind;
    pkt.payload = detail::encode_chunk(send_idx, st->buf.data() + b, st->buf.data() + e);

    st->outstanding = 2;
    st->net->send_cb(st->self, st->out, std::move(pkt), [st](TxDone done) {
        if (done.dropped) {
            throw std::runtime_error("allreduce chunk " + std::to_string(done.packet_id) + " was dropped");
        }
        if (--st->outstanding == 0) step_joined(st);
    });
    st->net->recv_cb(st->self, st->in, [st](Packet p) {
        st->received = std::move(p);
        if (--st->outstanding == 0) step_joined(st);
    });
}

}  // namespace

void ring_allreduce_callbacks(Network& net, const World& world, std::vector<Vector> locals, ReduceOp op,
                              ChunkMessageConfig cfg, std::function<void(std::size_t, Vector)> on_done) {
    const auto links = detail::resolve_ring(net, world, locals);
    const std::size_t n = world.ranks.size();
    const auto bounds = chunk_bounds(world.length, n);
    for (std::size_t r = 0; r < n; ++r) {
        auto st = std::make_shared<RankState>();
        st->net = &net;
        st->self = world.ranks[r];
        st->next = world.ranks[(r + 1) % n];
        st->out = links.to_next[r];
        st->in = links.from_prev[r];
        st->rank = r;
        st->n = n;
        st->buf = std::move(locals[r]);
        st->bounds = bounds;
        st->op = op;
        st->cfg = cfg;
        st->on_done = on_done;
        run_step(st);
    }
}

}  // namespace cosim::allreduce
