#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <utility>
#include <vector>

namespace cosim {

using Bytes = std::vector<std::uint8_t>;

/// Appends fixed-width little-endian integers.
class PayloadWriter {
public:
    PayloadWriter& u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        return *this;
    }
    PayloadWriter& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }
    PayloadWriter& u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        return *this;
    }

    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

class PayloadReader {
public:
    explicit PayloadReader(const Bytes& in) : in_(in) {}

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{in_[pos_++]} << (8 * i);
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{in_[pos_++]} << (8 * i);
        return v;
    }

    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > in_.size()) throw std::out_of_range("payload truncated");
    }

    const Bytes& in_;
    std::size_t pos_ = 0;
};

}  // namespace cosim
