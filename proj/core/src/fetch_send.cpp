#include "cosim/fetch_send.hpp"

#include <random>
#include <stdexcept>

namespace cosim::demo {

namespace {

struct Route {
    NodeId node;
    IfaceId iface;
};

Route toward(const Network& net, NodeId from, NodeId to) {
    const auto iface = net.topology().iface_to(from, to);
    if (!iface) throw std::invalid_argument("fetch-and-send nodes must be adjacent: client to store and sink");
    return {from, *iface};
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

Operation<> store_service(Network& net, FetchSendNodes nodes, FetchSendConfig cfg) {
    const Route in = toward(net, nodes.store, nodes.client);
    for (;;) {
        Packet req = co_await net.recv(in.node, in.iface);
        const auto round = static_cast<std::uint32_t>(PayloadReader(req.payload).u64());
        co_await sleep(cfg.lookup);
        co_await net.send(in.node, in.iface,
                          message(nodes.store, nodes.client, kFetchResponse, cfg.data_bytes, fetch_send_data(cfg, round)));
    }
}

Operation<> sink_service(Network& net, FetchSendNodes nodes) {
    const Route in = toward(net, nodes.sink, nodes.client);
    std::uint64_t digest = 0xcbf29ce484222325ULL;
    for (;;) {
        Packet data = co_await net.recv(in.node, in.iface);
        digest = detail::fnv1a(data.payload, digest);
        co_await net.send(in.node, in.iface,
                          message(nodes.sink, nodes.client, kForwardAck, 64, PayloadWriter{}.u64(digest).take()));
    }
}

Operation<FetchSendResult> client(Network& net, FetchSendNodes nodes, FetchSendConfig cfg,
                                  std::vector<Operation<>> services) {
    const Route to_store = toward(net, nodes.client, nodes.store);
    const Route to_sink = toward(net, nodes.client, nodes.sink);
    FetchSendResult result;
    for (std::uint32_t round = 0; round < cfg.rounds; ++round) {
        co_await net.send(to_store.node, to_store.iface,
                          message(nodes.client, nodes.store, kFetchRequest, cfg.request_bytes,
                                  PayloadWriter{}.u64(round).take()));
        Packet data = co_await net.recv(to_store.node, to_store.iface);
        co_await net.send(to_sink.node, to_sink.iface,
                          message(nodes.client, nodes.sink, kForward, cfg.data_bytes, std::move(data.payload)));
        Packet ack = co_await net.recv(to_sink.node, to_sink.iface);
        result.checksum = PayloadReader(ack.payload).u64();
        result.round_done.push_back(net.simulation().now());
        ++result.rounds;
    }
    for (auto& s : services) s.abort();
    co_return result;
}

}  // namespace

void FetchSendConfig::validate() const {
    if (rounds == 0) throw std::invalid_argument("fetch-and-send needs at least one round");
    if (request_bytes == 0 || data_bytes == 0) throw std::invalid_argument("fetch-and-send message sizes must be positive");
    if (lookup.negative()) throw std::invalid_argument("fetch-and-send lookup must not be negative");
}

TopologySpec fetch_send_topology(LinkConfig link) {
    return TopologySpec{{"store", "client", "sink"}, {{"store", "client", link, 0}, {"client", "sink", link, 0}}};
}

Bytes fetch_send_data(const FetchSendConfig& cfg, std::uint32_t round) {
    std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + round);
    Bytes out(cfg.data_bytes);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng());
    return out;
}

Operation<FetchSendResult> fetch_and_send(Network& net, FetchSendNodes nodes, FetchSendConfig cfg) {
    cfg.validate();
    toward(net, nodes.client, nodes.store);
    toward(net, nodes.client, nodes.sink);
    Simulator& sim = net.simulation();
    std::vector<Operation<>> services;
    services.push_back(spawn(sim, store_service(net, nodes, cfg)));
    services.push_back(spawn(sim, sink_service(net, nodes)));
    return spawn(sim, client(net, nodes, cfg, std::move(services)));
}

namespace detail {

std::uint64_t fnv1a(const Bytes& bytes, std::uint64_t h) {
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

}  // namespace cosim::demo
