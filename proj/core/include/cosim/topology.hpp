#pragma once

#include "cosim/time.hpp"

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cosim {

/// Dense small integer id, distinct per tag so node, link and interface
/// ids cannot be mixed up.
template <class Tag>
struct StrongId {
    std::uint32_t value = 0;

    constexpr std::size_t index() const { return value; }
    friend constexpr auto operator<=>(StrongId, StrongId) = default;
    friend std::ostream& operator<<(std::ostream& os, StrongId id) { return os << id.value; }
};

using NodeId = StrongId<struct NodeTag>;
using LinkId = StrongId<struct LinkTag>;
/// Interface index local to its node.
using IfaceId = StrongId<struct IfaceTag>;

struct LinkConfig {
    Duration latency;
    std::uint64_t bandwidth_bps = 0;
};

struct LinkSpec {
    std::string a;
    std::string b;
    LinkConfig config;
    /// Source line for diagnostics; 0 when built in code.
    int line = 0;
};

struct TopologySpec {
    std::vector<std::string> nodes;
    std::vector<LinkSpec> links;

    /// n nodes "n0".."n{n-1}", links n_i - n_{i+1}.
    static TopologySpec line(std::size_t n, LinkConfig cfg);
    /// line(n) plus the closing link n_{n-1} - n_0 (n >= 3).
    static TopologySpec ring(std::size_t n, LinkConfig cfg);
};

class TopologyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Immutable node/link graph. Node and link ids follow TopologySpec order; each
/// node numbers its interfaces in the order its links appear.
class Topology {
public:
    struct Iface {
        LinkId link;
        NodeId peer;
        IfaceId peer_iface;
    };
    struct Link {
        NodeId a;
        IfaceId a_iface;
        NodeId b;
        IfaceId b_iface;
        LinkConfig config;
    };

    /// Throws TopologyError naming the offending node or link.
    static Topology build(const TopologySpec& spec);

    std::size_t node_count() const { return names_.size(); }
    std::size_t link_count() const { return links_.size(); }

    std::optional<NodeId> find(std::string_view name) const;
    NodeId node(std::string_view name) const;
    const std::string& name(NodeId n) const { return names_.at(n.index()); }

    std::span<const Iface> ifaces(NodeId n) const { return ifaces_.at(n.index()); }
    const Iface& iface(NodeId n, IfaceId i) const;
    const Link& link(LinkId l) const { return links_.at(l.index()); }

    /// The interface of `from` whose link leads to `to`, if adjacent.
    std::optional<IfaceId> iface_to(NodeId from, NodeId to) const;

    /// Dense index over all (node, iface) pairs.
    std::size_t port_index(NodeId n, IfaceId i) const { return port_offset_.at(n.index()) + i.index(); }
    std::size_t port_count() const { return port_total_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, NodeId> by_name_;
    std::vector<std::vector<Iface>> ifaces_;
    std::vector<Link> links_;
    std::vector<std::size_t> port_offset_;
    std::size_t port_total_ = 0;
};

}  // namespace cosim
