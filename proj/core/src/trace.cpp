#include "cosim/trace.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace cosim {

namespace {

constexpr std::array<std::string_view, kTraceKindCount> kKindNames = {
    "schedule", "execute", "cancel", "tx", "rx", "drop", "pause", "resume", "route-update", "task-state", "mark",
};

// Values are written space-free so a line splits on ' ' and '='.
void append_escaped(std::string& out, std::string_view v) {
    for (char c : v) {
        switch (c) {
            case ' ': out += "%20"; break;
            case '=': out += "%3D"; break;
            case '%': out += "%25"; break;
            case '\n': out += "%0A"; break;
            case '\t': out += "%09"; break;
            default: out += c;
        }
    }
}

std::optional<std::string> unescape(std::string_view v) {
    std::string out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] != '%') {
            out += v[i];
            continue;
        }
        if (i + 2 >= v.size()) return std::nullopt;
        unsigned code = 0;
        auto [p, ec] = std::from_chars(v.data() + i + 1, v.data() + i + 3, code, 16);
        if (ec != std::errc{} || p != v.data() + i + 3) return std::nullopt;
        out += static_cast<char>(code);
        i += 2;
    }
    return out;
}

template <class Int>
std::optional<Int> parse_int(std::string_view s) {
    Int v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace

std::string_view to_string(TraceKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<TraceKind> trace_kind_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == name) return static_cast<TraceKind>(i);
    }
    return std::nullopt;
}

const std::string* TraceRecord::find(std::string_view key) const {
    for (const auto& [k, v] : attrs) {
        if (k == key) return &v;
    }
    return nullptr;
}

std::string TraceRecord::to_line() const {
    std::string out;
    out.reserve(48 + attrs.size() * 16);
    out += "t=";
    out += std::to_string(time.ticks);
    out += " seq=";
    out += std::to_string(seq);
    out += " kind=";
    out += to_string(kind);
    for (const auto& [k, v] : attrs) {
        out += ' ';
        append_escaped(out, k);
        out += '=';
        append_escaped(out, v);
    }
    return out;
}

std::optional<TraceRecord> TraceRecord::parse(std::string_view line) {
    TraceRecord rec;
    int field = 0;
    while (!line.empty()) {
        auto sp = line.find(' ');
        std::string_view tok = line.substr(0, sp);
        line = sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1);
        if (tok.empty()) continue;
        auto eq = tok.find('=');
        if (eq == std::string_view::npos) return std::nullopt;
        std::string_view key = tok.substr(0, eq);
        std::string_view val = tok.substr(eq + 1);
        if (field == 0) {
            auto t = parse_int<std::uint64_t>(val);
            if (key != "t" || !t) return std::nullopt;
            rec.time = SimTime{*t};
        } else if (field == 1) {
            auto s = parse_int<std::uint64_t>(val);
            if (key != "seq" || !s) return std::nullopt;
            rec.seq = *s;
        } else if (field == 2) {
            auto k = trace_kind_from_string(val);
            if (key != "kind" || !k) return std::nullopt;
            rec.kind = *k;
        } else {
            auto k = unescape(key);
            auto v = unescape(val);
            if (!k || !v) return std::nullopt;
            rec.attrs.emplace_back(std::move(*k), std::move(*v));
        }
        ++field;
    }
    if (field < 3) return std::nullopt;
    return rec;
}

std::ostream& operator<<(std::ostream& os, const TraceRecord& rec) { return os << rec.to_line(); }

void TraceDigest::update(std::string_view line) {
    for (unsigned char c : line) {
        state_ ^= c;
        state_ *= 0x100000001b3ULL;
    }
    state_ ^= static_cast<unsigned char>('\n');
    state_ *= 0x100000001b3ULL;
}

std::string TraceDigest::hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
}

TraceBuilder::TraceBuilder(Tracer* tracer, SimTime time, TraceKind kind) : tracer_(tracer) {
    if (tracer_) {
        record_.time = time;
        record_.kind = kind;
    }
}

TraceBuilder::~TraceBuilder() {
    if (tracer_) tracer_->commit(std::move(record_));
}

void TraceBuilder::add(std::string_view key, std::string value) { record_.attrs.emplace_back(std::string(key), std::move(value)); }

void Tracer::enable(TraceKind kind, bool on) {
    const auto bit = 1U << static_cast<unsigned>(kind);
    mask_ = on ? (mask_ | bit) : (mask_ & ~bit);
}

void Tracer::enable_all(bool on) { mask_ = on ? (1U << kTraceKindCount) - 1 : 0; }

void Tracer::enable_default() {
    enable_all(true);
    enable(TraceKind::TaskState, false);
}

void Tracer::commit(TraceRecord&& rec) {
    rec.seq = next_seq_++;
    const std::string line = rec.to_line();
    digest_.update(line);
    if (stream_) *stream_ << line << '\n';
    if (keep_) records_.push_back(std::move(rec));
}

std::optional<TraceDivergence> diff_traces(const std::vector<TraceRecord>& a, const std::vector<TraceRecord>& b) {
    const std::size_t n = std::max(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        const bool has_a = i < a.size();
        const bool has_b = i < b.size();
        if (has_a && has_b && a[i] == b[i]) continue;
        TraceDivergence d;
        d.index = i;
        if (has_a) d.left = a[i];
        if (has_b) d.right = b[i];
        return d;
    }
    return std::nullopt;
}

std::vector<TraceRecord> read_trace(std::istream& in) {
    std::vector<TraceRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto rec = TraceRecord::parse(line);
        if (!rec) throw std::runtime_error("malformed trace record at line " + std::to_string(lineno));
        out.push_back(std::move(*rec));
    }
    return out;
}

}  // namespace cosim
