#include "cosim/topology.hpp"

#include <algorithm>
#include <set>
#include <utility>

namespace cosim {

namespace {

std::string where(const LinkSpec& l, std::size_t index) {
    std::string s = "link " + std::to_string(index) + " (" + l.a + " - " + l.b + ")";
    if (l.line > 0) s += " at line " + std::to_string(l.line);
    return s;
}

}  // namespace

TopologySpec TopologySpec::line(std::size_t n, LinkConfig cfg) {
    TopologySpec spec;
    for (std::size_t i = 0; i < n; ++i) spec.nodes.push_back("n" + std::to_string(i));
    for (std::size_t i = 0; i + 1 < n; ++i) spec.links.push_back({spec.nodes[i], spec.nodes[i + 1], cfg, 0});
    return spec;
}

TopologySpec TopologySpec::ring(std::size_t n, LinkConfig cfg) {
    if (n < 3) throw TopologyError("ring needs at least 3 nodes");
    TopologySpec spec = line(n, cfg);
    spec.links.push_back({spec.nodes[n - 1], spec.nodes[0], cfg, 0});
    return spec;
}

Topology Topology::build(const TopologySpec& spec) {
    Topology t;
    for (const auto& name : spec.nodes) {
        if (name.empty()) throw TopologyError("node with empty name");
        const NodeId id{static_cast<std::uint32_t>(t.names_.size())};
        if (!t.by_name_.emplace(name, id).second) throw TopologyError("duplicate node '" + name + "'");
        t.names_.push_back(name);
    }
    t.ifaces_.resize(t.names_.size());
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (std::size_t i = 0; i < spec.links.size(); ++i) {
        const auto& l = spec.links[i];
        auto a = t.find(l.a);
        auto b = t.find(l.b);
        if (!a) throw TopologyError(where(l, i) + ": unknown node '" + l.a + "'");
        if (!b) throw TopologyError(where(l, i) + ": unknown node '" + l.b + "'");
        if (*a == *b) throw TopologyError(where(l, i) + ": self-loop on '" + l.a + "'");
        if (l.config.bandwidth_bps == 0) throw TopologyError(where(l, i) + ": bandwidth must be positive");
        if (l.config.latency.ticks <= 0) throw TopologyError(where(l, i) + ": latency must be positive");
        auto key = std::minmax(a->value, b->value);
        if (!seen.insert(key).second) throw TopologyError(where(l, i) + ": duplicate link");

        const LinkId id{static_cast<std::uint32_t>(t.links_.size())};
        const IfaceId ai{static_cast<std::uint32_t>(t.ifaces_[a->index()].size())};
        const IfaceId bi{static_cast<std::uint32_t>(t.ifaces_[b->index()].size())};
        t.ifaces_[a->index()].push_back({id, *b, bi});
        t.ifaces_[b->index()].push_back({id, *a, ai});
        t.links_.push_back({*a, ai, *b, bi, l.config});
    }
    t.port_offset_.reserve(t.names_.size());
    for (const auto& ifs : t.ifaces_) {
        t.port_offset_.push_back(t.port_total_);
        t.port_total_ += ifs.size();
    }
    return t;
}

std::optional<NodeId> Topology::find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
}

NodeId Topology::node(std::string_view name) const {
    if (auto n = find(name)) return *n;
    throw TopologyError("unknown node '" + std::string(name) + "'");
}

const Topology::Iface& Topology::iface(NodeId n, IfaceId i) const {
    const auto& ifs = ifaces_.at(n.index());
    if (i.index() >= ifs.size()) {
        throw TopologyError("node '" + name(n) + "' has no interface " + std::to_string(i.value));
    }
    return ifs[i.index()];
}

std::optional<IfaceId> Topology::iface_to(NodeId from, NodeId to) const {
    const auto& ifs = ifaces_.at(from.index());
    for (std::size_t i = 0; i < ifs.size(); ++i) {
        if (ifs[i].peer == to) return IfaceId{static_cast<std::uint32_t>(i)};
    }
    return std::nullopt;
}

}  // namespace cosim
