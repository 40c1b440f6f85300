// Callback form of the fetch-and-send exchange. Each step registers the next
// one, so the control flow reads inside-out and per-round state has to live
// in a heap object shared by every handler.
#include "cosim/fetch_send.hpp"

#include <memory>
#include <stdexcept>

namespace cosim::demo {

namespace {

IfaceId toward(const Network& net, NodeId from, NodeId to) {
    const auto iface = net.topology().iface_to(from, to);
    if (!iface) throw std::invalid_argument("fetch-and-send nodes must be adjacent: client to store and sink");
    return *iface;
}

Packet message(NodeId src, NodeId dst, std::uint16_t kind, std::uint32_t size, Bytes payload) {
    Packet p;
    p.src = src;
    p.dst = dst;
    p.kind = kind;
    p.size_bytes = size;
    p.payload = std::move(payload);
    return p;
}

struct Session {
    Network* net = nullptr;
    FetchSendNodes nodes;
    FetchSendConfig cfg;
    IfaceId store_in, sink_in, client_to_store, client_to_sink;
    std::uint64_t sink_digest = 0xcbf29ce484222325ULL;
    bool finished = false;
    FetchSendResult result;
    std::function<void(FetchSendResult)> done;
};

void store_listen(const std::shared_ptr<Session>& s) {
    s->net->recv_cb(s->nodes.store, s->store_in, [s](Packet req) {
        if (s->finished) return;
        const auto round = static_cast<std::uint32_t>(PayloadReader(req.payload).u64());
        s->net->simulation().schedule(s->cfg.lookup, [s, round] {
            s->net->send_cb(s->nodes.store, s->store_in,
                            message(s->nodes.store, s->nodes.client, kFetchResponse, s->cfg.data_bytes,
                                    fetch_send_data(s->cfg, round)),
                            [s](TxDone) { store_listen(s); });
        });
    });
}

void sink_listen(const std::shared_ptr<Session>& s) {
    s->net->recv_cb(s->nodes.sink, s->sink_in, [s](Packet data) {
        if (s->finished) return;
        s->sink_digest = detail::fnv1a(data.payload, s->sink_digest);
        s->net->send_cb(s->nodes.sink, s->sink_in,
                        message(s->nodes.sink, s->nodes.client, kForwardAck, 64,
                                PayloadWriter{}.u64(s->sink_digest).take()),
                        [s](TxDone) { sink_listen(s); });
    });
}

void client_round(const std::shared_ptr<Session>& s, std::uint32_t round) {
    if (round == s->cfg.rounds) {
        s->finished = true;
        if (s->done) s->done(s->result);
        return;
    }
    Network& net = *s->net;
    const auto& n = s->nodes;
    net.send_cb(n.client, s->client_to_store,
                message(n.client, n.store, kFetchRequest, s->cfg.request_bytes, PayloadWriter{}.u64(round).take()),
                [s, round](TxDone) {
                    s->net->recv_cb(s->nodes.client, s->client_to_store, [s, round](Packet data) {
                        const auto& n = s->nodes;
                        s->net->send_cb(n.client, s->client_to_sink,
                                        message(n.client, n.sink, kForward, s->cfg.data_bytes, std::move(data.payload)),
                                        [s, round](TxDone) {
                                            s->net->recv_cb(s->nodes.client, s->client_to_sink, [s, round](Packet ack) {
                                                s->result.checksum = PayloadReader(ack.payload).u64();
                                                s->result.round_done.push_back(s->net->simulation().now());
                                                ++s->result.rounds;
                                                client_round(s, round + 1);
                                            });
                                        });
                    });
                });
}

}  // namespace

void fetch_and_send_callbacks(Network& net, FetchSendNodes nodes, FetchSendConfig cfg,
                              std::function<void(FetchSendResult)> done) {
    cfg.validate();
    auto s = std::make_shared<Session>();
    s->net = &net;
    s->nodes = nodes;
    s->cfg = cfg;
    s->store_in = toward(net, nodes.store, nodes.client);
    s->sink_in = toward(net, nodes.sink, nodes.client);
    s->client_to_store = toward(net, nodes.client, nodes.store);
    s->client_to_sink = toward(net, nodes.client, nodes.sink);
    s->done = std::move(done);
    store_listen(s);
    sink_listen(s);
    client_round(s, 0);
}

}  // namespace cosim::demo
