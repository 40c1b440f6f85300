#include "cosim/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace cosim {

namespace {

using Kind = ScenarioError::Kind;

std::string format_error(const std::string& field, int line, const std::string& message) {
    std::ostringstream os;
    os << field;
    if (line > 0) os << " (line " << line << ")";
    os << ": " << message;
    return os.str();
}

int line_of(const YAML::Node& n) { return n.IsDefined() && n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

/// A YAML node plus its dotted path, for diagnostics.
class Field {
public:
    Field(YAML::Node node, std::string path, int fallback_line)
        : node_(std::move(node)), path_(std::move(path)), fallback_line_(fallback_line) {}

    const std::string& path() const { return path_; }
    int line() const {
        const int l = line_of(node_);
        return l > 0 ? l : fallback_line_;
    }
    const YAML::Node& node() const { return node_; }

    [[noreturn]] void fail(Kind kind, const std::string& message) const {
        throw ScenarioError(kind, path_, line(), message);
    }

    bool has(const std::string& key) const {
        const auto n = child(key);
        return n.IsDefined() && !n.IsNull();
    }

    Field operator[](const std::string& key) const { return Field(child(key), join(key), line()); }
    Field at(std::size_t i) const { return Field(node_[i], path_ + "[" + std::to_string(i) + "]", line()); }
    std::size_t size() const { return node_.size(); }

    Field require(const std::string& key) const {
        if (!has(key)) (*this)[key].fail(Kind::MissingField, "required field is missing");
        return (*this)[key];
    }

    void expect_map() const {
        if (!node_.IsMap()) fail(Kind::InvalidValue, "expected a mapping");
    }
    void expect_seq() const {
        if (!node_.IsSequence()) fail(Kind::InvalidValue, "expected a list");
    }
    /// Rejects keys outside `allowed`.
    void only(std::initializer_list<const char*> allowed) const {
        expect_map();
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
                Field(kv.first, join(key), line()).fail(Kind::InvalidValue, "unknown field");
            }
        }
    }

    std::string str() const {
        if (!node_.IsScalar()) fail(Kind::InvalidValue, "expected a scalar");
        return node_.Scalar();
    }

    std::int64_t integer() const {
        const std::string s = str();
        std::int64_t v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) fail(Kind::InvalidValue, "expected an integer, got '" + s + "'");
        return v;
    }

    std::uint64_t count(std::uint64_t min = 0, std::uint64_t max = UINT64_MAX) const {
        const std::string s = str();
        if (!s.empty() && s[0] == '-') fail(Kind::InvalidValue, "must not be negative");
        std::uint64_t v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) fail(Kind::InvalidValue, "expected a count, got '" + s + "'");
        if (v < min || v > max) {
            fail(Kind::InvalidValue, "must be in [" + std::to_string(min) + ", " + std::to_string(max) + "]");
        }
        return v;
    }

    Duration duration(bool allow_zero = true) const {
        const std::string s = str();
        const auto d = parse_duration(s);
        if (!d) fail(Kind::InvalidValue, "expected a duration such as 250ns, 3us, 1ms, got '" + s + "'");
        if (d->negative()) fail(Kind::NegativeDuration, "duration must not be negative, got '" + s + "'");
        if (!allow_zero && d->ticks == 0) fail(Kind::InvalidValue, "duration must be positive");
        return *d;
    }

    std::uint64_t bandwidth() const {
        const std::string s = str();
        const auto bw = parse_bandwidth(s);
        if (!bw) fail(Kind::InvalidValue, "expected a bandwidth such as 10Gbps, got '" + s + "'");
        return *bw;
    }

    std::vector<std::string> strings() const {
        expect_seq();
        std::vector<std::string> out;
        for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).str());
        return out;
    }

private:
    // Indexing a missing key yields a node that throws on use; look it up instead.
    YAML::Node child(const std::string& key) const {
        if (node_.IsDefined() && node_.IsMap()) {
            for (const auto& kv : node_) {
                if (kv.first.IsScalar() && kv.first.Scalar() == key) return kv.second;
            }
        }
        return YAML::Node(YAML::NodeType::Undefined);
    }

    std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    YAML::Node node_;
    std::string path_;
    int fallback_line_;
};

Style parse_style(const Field& f) {
    const auto s = f.str();
    if (s == "coroutine") return Style::Coroutine;
    if (s == "callback") return Style::Callback;
    f.fail(Kind::InvalidValue, "style must be 'coroutine' or 'callback'");
}

std::uint8_t priority_of(const Field& f, std::uint64_t max) { return static_cast<std::uint8_t>(f.count(0, max)); }

LinkConfig link_config(const Field& f, const std::string& link_name) {
    LinkConfig cfg;
    cfg.latency = f.require("latency").duration();
    if (cfg.latency.ticks == 0) f["latency"].fail(Kind::InvalidValue, "latency of " + link_name + " must be positive");
    cfg.bandwidth_bps = f.require("bandwidth").bandwidth();
    if (cfg.bandwidth_bps == 0) f["bandwidth"].fail(Kind::InvalidValue, "bandwidth of " + link_name + " must be positive");
    return cfg;
}

TopologySource parse_topology(const Field& f) {
    f.only({"nodes", "links", "line", "ring", "random"});
    TopologySource src;
    const int generators = f.has("line") + f.has("ring") + f.has("random");
    if (generators > 1 || (generators == 1 && (f.has("nodes") || f.has("links")))) {
        f.fail(Kind::InvalidValue, "give either nodes/links or exactly one of line, ring, random");
    }
    if (generators == 1) {
        const char* key = f.has("line") ? "line" : f.has("ring") ? "ring" : "random";
        const Field g = f[key];
        src.kind = f.has("line") ? TopologySource::Kind::Line
                   : f.has("ring") ? TopologySource::Kind::Ring
                                   : TopologySource::Kind::Random;
        if (src.kind == TopologySource::Kind::Random) {
            g.only({"nodes", "links", "latency", "bandwidth"});
            src.nodes = g.require("nodes").count(2, 4096);
            const std::size_t max_links = src.nodes * (src.nodes - 1) / 2;
            src.links = g.require("links").count(src.nodes - 1, max_links);
        } else {
            g.only({"nodes", "latency", "bandwidth"});
            src.nodes = g.require("nodes").count(src.kind == TopologySource::Kind::Ring ? 3 : 1, 1'000'000);
            src.links = src.kind == TopologySource::Kind::Ring ? src.nodes : src.nodes - 1;
        }
        src.link = link_config(g, std::string(key) + " links");
        return src;
    }

    const Field nodes = f.require("nodes");
    src.spec.nodes = nodes.strings();
    if (src.spec.nodes.empty()) nodes.fail(Kind::InvalidValue, "at least one node is required");
    std::set<std::string> names;
    for (std::size_t i = 0; i < src.spec.nodes.size(); ++i) {
        if (src.spec.nodes[i].empty()) nodes.at(i).fail(Kind::InvalidValue, "node names must not be empty");
        if (!names.insert(src.spec.nodes[i]).second) nodes.at(i).fail(Kind::InvalidValue, "duplicate node name");
    }
    if (f.has("links")) {
        const Field links = f["links"];
        links.expect_seq();
        for (std::size_t i = 0; i < links.size(); ++i) {
            const Field l = links.at(i);
            l.only({"a", "b", "latency", "bandwidth"});
            LinkSpec spec;
            spec.a = l.require("a").str();
            spec.b = l.require("b").str();
            for (const char* end : {"a", "b"}) {
                const auto& name = std::string(end) == "a" ? spec.a : spec.b;
                if (!names.count(name)) l[end].fail(Kind::DanglingNode, "unknown node '" + name + "'");
            }
            spec.config = link_config(l, "link " + spec.a + "-" + spec.b);
            spec.line = l.line();
            src.spec.links.push_back(std::move(spec));
        }
    }
    try {
        (void)Topology::build(src.spec);
    } catch (const TopologyError& e) {
        f.fail(Kind::Invariant, e.what());
    }
    src.links = src.spec.links.size();
    src.nodes = src.spec.nodes.size();
    return src;
}

std::size_t node_index(const std::vector<std::string>& names, const Field& f) {
    const auto name = f.str();
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) f.fail(Kind::DanglingNode, "unknown node '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
}

AllreduceParams parse_allreduce(const Field& f, const std::vector<std::string>& names) {
    AllreduceParams p;
    f.only({"ranks", "length", "op", "element_bytes", "header_bytes", "priority", "style", "inputs"});
    if (f.has("ranks")) {
        const Field ranks = f["ranks"];
        ranks.expect_seq();
        std::set<std::string> seen;
        for (std::size_t i = 0; i < ranks.size(); ++i) {
            node_index(names, ranks.at(i));
            p.ranks.push_back(ranks.at(i).str());
            if (!seen.insert(p.ranks.back()).second) ranks.at(i).fail(Kind::InvalidValue, "rank listed twice");
        }
    } else {
        p.ranks = names;
    }
    if (p.ranks.size() < 2) f["ranks"].fail(Kind::Invariant, "allreduce needs at least two ranks");
    p.length = f.require("length").count(1, 1u << 24);
    if (f.has("op")) {
        const auto op = allreduce::ReduceOp::by_name(f["op"].str());
        if (!op) f["op"].fail(Kind::InvalidValue, "op must be one of sum, max, min");
        p.op = *op;
    }
    if (f.has("element_bytes")) p.message.element_bytes = static_cast<std::uint32_t>(f["element_bytes"].count(1, 1u << 20));
    if (f.has("header_bytes")) p.message.header_bytes = static_cast<std::uint32_t>(f["header_bytes"].count(0, 1u << 20));
    if (f.has("priority")) p.message.priority = priority_of(f["priority"], kPriorities - 1);
    if (f.has("style")) p.style = parse_style(f["style"]);
    if (f.has("inputs")) {
        const Field in = f["inputs"];
        in.expect_seq();
        if (in.size() != p.ranks.size()) in.fail(Kind::Invariant, "need one input vector per rank");
        std::vector<allreduce::Vector> inputs;
        for (std::size_t r = 0; r < in.size(); ++r) {
            const Field v = in.at(r);
            v.expect_seq();
            if (v.size() != p.length) v.fail(Kind::Invariant, "input length differs from allreduce.length");
            allreduce::Vector vec;
            for (std::size_t i = 0; i < v.size(); ++i) vec.push_back(v.at(i).integer());
            inputs.push_back(std::move(vec));
        }
        p.inputs = std::move(inputs);
    }
    return p;
}

HpccPfcParams parse_hpcc(const Field& f, const std::vector<std::string>& names) {
    HpccPfcParams p;
    f.only({"switches", "pfc", "sender", "flows"});
    const Field sw = f.require("switches");
    sw.expect_seq();
    for (std::size_t i = 0; i < sw.size(); ++i) {
        node_index(names, sw.at(i));
        p.switches.push_back(sw.at(i).str());
    }
    if (f.has("pfc")) {
        const Field c = f["pfc"];
        c.only({"xoff", "xon", "pause_quanta"});
        if (c.has("xoff")) p.pfc.xoff_threshold = static_cast<std::uint32_t>(c["xoff"].count(1, 1u << 30));
        if (c.has("xon")) p.pfc.xon_threshold = static_cast<std::uint32_t>(c["xon"].count(0, 1u << 30));
        if (c.has("pause_quanta")) p.pfc.pause_quanta = c["pause_quanta"].duration(false);
        try {
            p.pfc.validate();
        } catch (const std::invalid_argument& e) {
            c.fail(Kind::Invariant, std::string(e.what()) + " (PfcConfig)");
        }
    }
    if (f.has("sender")) {
        const Field s = f["sender"];
        s.only({"mtu", "high_mark", "low_mark"});
        if (s.has("mtu")) p.sender.mtu = static_cast<std::uint32_t>(s["mtu"].count(1, 1u << 24));
        if (s.has("high_mark")) p.sender.high_mark = s["high_mark"].count();
        if (s.has("low_mark")) p.sender.low_mark = s["low_mark"].count();
        try {
            p.sender.validate();
        } catch (const std::invalid_argument& e) {
            s.fail(Kind::Invariant, e.what());
        }
    }
    const Field flows = f.require("flows");
    flows.expect_seq();
    std::set<std::uint64_t> ids;
    for (std::size_t i = 0; i < flows.size(); ++i) {
        const Field fl = flows.at(i);
        fl.only({"id", "src", "dst", "bytes", "window", "priority", "start"});
        FlowParams flow;
        flow.id = fl.has("id") ? fl["id"].count() : i + 1;
        if (!ids.insert(flow.id).second) fl["id"].fail(Kind::InvalidValue, "duplicate flow id");
        node_index(names, fl.require("src"));
        node_index(names, fl.require("dst"));
        flow.src = fl["src"].str();
        flow.dst = fl["dst"].str();
        if (flow.src == flow.dst) fl["dst"].fail(Kind::InvalidValue, "flow source and destination coincide");
        flow.bytes = fl.require("bytes").count(1);
        flow.window = fl.has("window") ? fl["window"].count(p.sender.mtu) : 4ull * p.sender.mtu;
        if (fl.has("priority")) flow.priority = priority_of(fl["priority"], pfc::kAckPriority - 1);
        if (fl.has("start")) flow.start = fl["start"].duration();
        p.flows.push_back(flow);
    }
    return p;
}

RipParams parse_rip(const Field& f, const TopologySource& topo, const std::vector<std::string>& names) {
    RipParams p;
    f.only({"timers", "failures"});
    if (f.has("timers")) {
        const Field t = f["timers"];
        t.only({"update_period", "route_timeout", "gc_timeout"});
        if (t.has("update_period")) p.timers.update_period = t["update_period"].duration(false);
        if (t.has("route_timeout")) p.timers.route_timeout = t["route_timeout"].duration(false);
        if (t.has("gc_timeout")) p.timers.gc_timeout = t["gc_timeout"].duration(false);
        if (p.timers.route_timeout <= p.timers.update_period) {
            t.fail(Kind::Invariant, "route_timeout must exceed update_period (RipTimers invariant)");
        }
    }
    if (f.has("failures")) {
        const Field fs = f["failures"];
        fs.expect_seq();
        for (std::size_t i = 0; i < fs.size(); ++i) {
            const Field e = fs.at(i);
            e.only({"link", "between", "at", "repair_at"});
            LinkEventParams ev;
            if (e.has("link") == e.has("between")) e.fail(Kind::InvalidValue, "give exactly one of link or between");
            if (e.has("link")) {
                ev.link = e["link"].count(0, topo.link_count() == 0 ? 0 : topo.link_count() - 1);
                if (topo.link_count() == 0) e["link"].fail(Kind::InvalidValue, "topology has no links");
            } else {
                if (topo.kind == TopologySource::Kind::Random) {
                    e["between"].fail(Kind::InvalidValue, "random topologies name failed links by index");
                }
                const Field b = e["between"];
                b.expect_seq();
                if (b.size() != 2) b.fail(Kind::InvalidValue, "between takes two node names");
                const auto a = names[node_index(names, b.at(0))];
                const auto c = names[node_index(names, b.at(1))];
                const auto spec = topo.build(0);
                auto it = std::find_if(spec.links.begin(), spec.links.end(), [&](const LinkSpec& l) {
                    return (l.a == a && l.b == c) || (l.a == c && l.b == a);
                });
                if (it == spec.links.end()) b.fail(Kind::DanglingNode, "no link between '" + a + "' and '" + c + "'");
                ev.link = static_cast<std::size_t>(it - spec.links.begin());
            }
            ev.at = e.require("at").duration();
            if (e.has("repair_at")) {
                ev.repair_at = e["repair_at"].duration();
                if (*ev.repair_at <= ev.at) e["repair_at"].fail(Kind::Invariant, "repair must come after the failure");
            }
            p.failures.push_back(ev);
        }
    }
    return p;
}

FetchSendParams parse_fetch_send(const Field& f, const std::vector<std::string>& names) {
    FetchSendParams p;
    if (!f.node().IsDefined() || f.node().IsNull()) {
        for (const auto* n : {&p.client, &p.store, &p.sink}) {
            if (std::find(names.begin(), names.end(), *n) == names.end()) {
                f.fail(Kind::DanglingNode, "default node '" + *n + "' is not in the topology");
            }
        }
        return p;
    }
    f.only({"client", "store", "sink", "rounds", "request_bytes", "data_bytes", "lookup", "style"});
    for (auto [key, out] : {std::pair{"client", &p.client}, std::pair{"store", &p.store}, std::pair{"sink", &p.sink}}) {
        if (f.has(key)) *out = names[node_index(names, f[key])];
        else if (std::find(names.begin(), names.end(), *out) == names.end()) {
            f[key].fail(Kind::DanglingNode, "default node '" + *out + "' is not in the topology");
        }
    }
    if (f.has("rounds")) p.config.rounds = static_cast<std::uint32_t>(f["rounds"].count(1, 1u << 30));
    if (f.has("request_bytes")) p.config.request_bytes = static_cast<std::uint32_t>(f["request_bytes"].count(1, 1u << 30));
    if (f.has("data_bytes")) p.config.data_bytes = static_cast<std::uint32_t>(f["data_bytes"].count(1, 1u << 30));
    if (f.has("lookup")) p.config.lookup = f["lookup"].duration();
    if (f.has("style")) p.style = parse_style(f["style"]);
    return p;
}

Protocol parse_protocol(const Field& f) {
    const auto s = f.str();
    if (s == "allreduce") return Protocol::Allreduce;
    if (s == "hpcc-pfc") return Protocol::HpccPfc;
    if (s == "rip") return Protocol::Rip;
    if (s == "fetch-and-send") return Protocol::FetchSend;
    f.fail(Kind::UnknownProtocol, "unknown protocol '" + s + "' (expected allreduce, hpcc-pfc, rip or fetch-and-send)");
}

// Adjacency requirements that the runtime would otherwise only discover
// once the simulation is underway.
void check_adjacency(const Scenario& s, const Field& root) {
    if (s.topology.kind == TopologySource::Kind::Random) return;
    const Topology topo = Topology::build(s.topology.build(s.seed));
    auto adjacent = [&](const std::string& a, const std::string& b) {
        return topo.iface_to(topo.node(a), topo.node(b)).has_value();
    };
    if (s.allreduce) {
        const auto& r = s.allreduce->ranks;
        for (std::size_t i = 0; i < r.size(); ++i) {
            const auto& next = r[(i + 1) % r.size()];
            if (!adjacent(r[i], next)) {
                root["allreduce"]["ranks"].fail(Kind::Invariant,
                                                "ring neighbours '" + r[i] + "' and '" + next + "' are not linked");
            }
        }
    }
    if (s.fetch_send) {
        const auto& p = *s.fetch_send;
        if (!adjacent(p.client, p.store) || !adjacent(p.client, p.sink)) {
            root["fetch_send"].fail(Kind::Invariant, "the client must be linked to both store and sink");
        }
    }
}

}  // namespace

ScenarioError::ScenarioError(Kind kind, std::string field, int line, const std::string& message)
    : std::runtime_error(format_error(field, line, message)), kind_(kind), field_(std::move(field)), line_(line) {}

std::string_view to_string(ScenarioError::Kind kind) {
    switch (kind) {
        case Kind::Io: return "io";
        case Kind::Syntax: return "syntax";
        case Kind::MissingField: return "missing-field";
        case Kind::InvalidValue: return "invalid-value";
        case Kind::UnknownProtocol: return "unknown-protocol";
        case Kind::NegativeDuration: return "negative-duration";
        case Kind::DanglingNode: return "dangling-node";
        case Kind::Invariant: return "invariant";
    }
    return "?";
}

std::string_view to_string(Protocol p) {
    switch (p) {
        case Protocol::Allreduce: return "allreduce";
        case Protocol::HpccPfc: return "hpcc-pfc";
        case Protocol::Rip: return "rip";
        case Protocol::FetchSend: return "fetch-and-send";
    }
    return "?";
}

std::optional<Duration> parse_duration(std::string_view text) {
    if (text.empty()) return std::nullopt;
    static constexpr std::pair<std::string_view, double> units[] = {
        {"ns", 1.0}, {"us", 1e3}, {"ms", 1e6}, {"s", 1e9}};
    double scale = 1.0;
    std::string_view number = text;
    for (const auto& [suffix, factor] : units) {
        if (text.size() > suffix.size() && text.ends_with(suffix)) {
            const char before = text[text.size() - suffix.size() - 1];
            if (suffix == "s" && (before == 'n' || before == 'u' || before == 'm')) continue;
            number = text.substr(0, text.size() - suffix.size());
            scale = factor;
            break;
        }
    }
    if (scale == 1.0 && number == text) {
        std::int64_t ticks = 0;
        const auto [p, ec] = std::from_chars(number.data(), number.data() + number.size(), ticks);
        if (ec != std::errc() || p != number.data() + number.size()) return std::nullopt;
        return Duration{ticks};
    }
    double v = 0;
    const auto [p, ec] = std::from_chars(number.data(), number.data() + number.size(), v);
    if (ec != std::errc() || p != number.data() + number.size() || !std::isfinite(v)) return std::nullopt;
    const double ticks = std::round(v * scale);
    if (std::fabs(ticks) > 9.2e18) return std::nullopt;
    return Duration{static_cast<std::int64_t>(ticks)};
}

std::optional<std::uint64_t> parse_bandwidth(std::string_view text) {
    static constexpr std::pair<std::string_view, double> units[] = {
        {"Gbps", 1e9}, {"Mbps", 1e6}, {"Kbps", 1e3}, {"bps", 1.0}};
    double scale = 1.0;
    std::string_view number = text;
    for (const auto& [suffix, factor] : units) {
        if (text.ends_with(suffix)) {
            number = text.substr(0, text.size() - suffix.size());
            scale = factor;
            break;
        }
    }
    if (number.empty() || number[0] == '-') return std::nullopt;
    double v = 0;
    const auto [p, ec] = std::from_chars(number.data(), number.data() + number.size(), v);
    if (ec != std::errc() || p != number.data() + number.size() || !std::isfinite(v)) return std::nullopt;
    const double bps = std::round(v * scale);
    if (bps < 0 || bps > 1.8e19) return std::nullopt;
    return static_cast<std::uint64_t>(bps);
}

TopologySpec TopologySource::build(std::uint64_t seed) const {
    switch (kind) {
        case Kind::Explicit: return spec;
        case Kind::Line: return TopologySpec::line(nodes, link);
        case Kind::Ring: return TopologySpec::ring(nodes, link);
        case Kind::Random: break;
    }
    // Random spanning tree, then distinct extra links until `links`.
    std::mt19937_64 rng(seed);
    TopologySpec out;
    for (std::size_t i = 0; i < nodes; ++i) out.nodes.push_back("n" + std::to_string(i));
    std::set<std::pair<std::size_t, std::size_t>> used;
    auto add = [&](std::size_t a, std::size_t b) {
        if (a == b || !used.insert({std::min(a, b), std::max(a, b)}).second) return;
        out.links.push_back(LinkSpec{out.nodes[a], out.nodes[b], link, 0});
    };
    for (std::size_t i = 1; i < nodes; ++i) add(i, std::uniform_int_distribution<std::size_t>(0, i - 1)(rng));
    std::uniform_int_distribution<std::size_t> pick(0, nodes - 1);
    while (out.links.size() < links) add(pick(rng), pick(rng));
    return out;
}

std::vector<std::string> TopologySource::node_names() const {
    if (kind == Kind::Explicit) return spec.nodes;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < nodes; ++i) out.push_back("n" + std::to_string(i));
    return out;
}

std::size_t TopologySource::link_count() const { return links; }

Scenario parse_scenario(std::string_view text) {
    YAML::Node doc;
    try {
        doc = YAML::Load(std::string(text));
    } catch (const YAML::ParserException& e) {
        throw ScenarioError(Kind::Syntax, "<document>", e.mark.line + 1, e.msg);
    }
    const Field root(doc, "", 1);
    if (!doc.IsMap()) root.fail(Kind::Syntax, "a scenario is a mapping");
    root.only({"name", "protocol", "seed", "run", "topology", "allreduce", "hpcc_pfc", "rip", "fetch_send"});

    Scenario s;
    s.name = root.has("name") ? root["name"].str() : "scenario";
    s.protocol = parse_protocol(root.require("protocol"));
    if (root.has("seed")) s.seed = root["seed"].count();
    if (root.has("run")) {
        const Field run = root["run"];
        run.only({"until", "max_events"});
        if (run.has("until")) s.until = run["until"].duration();
        if (run.has("max_events")) s.max_events = run["max_events"].count(1);
    }
    s.topology = parse_topology(root.require("topology"));
    const auto names = s.topology.node_names();

    for (const char* section : {"allreduce", "hpcc_pfc", "rip", "fetch_send"}) {
        const bool wanted = (s.protocol == Protocol::Allreduce && std::string_view(section) == "allreduce") ||
                            (s.protocol == Protocol::HpccPfc && std::string_view(section) == "hpcc_pfc") ||
                            (s.protocol == Protocol::Rip && std::string_view(section) == "rip") ||
                            (s.protocol == Protocol::FetchSend && std::string_view(section) == "fetch_send");
        if (root.has(section) && !wanted) {
            root[section].fail(Kind::InvalidValue, "section does not apply to protocol " + std::string(to_string(s.protocol)));
        }
    }
    switch (s.protocol) {
        case Protocol::Allreduce: s.allreduce = parse_allreduce(root.require("allreduce"), names); break;
        case Protocol::HpccPfc: s.hpcc_pfc = parse_hpcc(root.require("hpcc_pfc"), names); break;
        case Protocol::Rip:
            s.rip = root.has("rip") ? parse_rip(root["rip"], s.topology, names) : RipParams{};
            if (!s.until) root["run"]["until"].fail(Kind::MissingField, "rip never goes idle; a run limit is required");
            break;
        case Protocol::FetchSend: s.fetch_send = parse_fetch_send(root["fetch_send"], names); break;
    }
    check_adjacency(s, root);
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError(Kind::Io, path.string(), 0, "cannot open scenario file");
    std::ostringstream ss;
    ss << in.rdbuf();
    Scenario s = parse_scenario(ss.str());
    if (s.name == "scenario") s.name = path.stem().string();
    return s;
}

}  // namespace cosim
