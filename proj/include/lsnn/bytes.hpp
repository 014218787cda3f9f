#ifndef LSNN_BYTES_HPP
#define LSNN_BYTES_HPP

#include <cstdint>
#include <cstring>
#include <vector>

namespace lsnn {

// Little-endian serialization helpers shared by the model, codec-spec and
// datagram formats. Explicit byte shuffling keeps the formats host-order
// independent.

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) {
    out.push_back(v);
}

inline void put_u16_le(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_f64_le(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64_le(out, bits);
}

inline void put_f32_le(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32_le(out, bits);
}

// Bounds-checked cursor over a byte buffer; `ok` goes false instead of
// reading past the end, and `pos` reports the failure offset.
struct ByteReader {
    const std::uint8_t* data = nullptr;
    std::size_t size = 0;
    std::size_t pos = 0;
    bool ok = true;

    ByteReader(const std::uint8_t* d, std::size_t n) : data(d), size(n) {}

    bool need(std::size_t n) {
        if (!ok || pos + n > size) {
            ok = false;
            return false;
        }
        return true;
    }

    std::uint8_t u8() {
        if (!need(1)) return 0;
        return data[pos++];
    }

    std::uint16_t u16_le() {
        if (!need(2)) return 0;
        std::uint16_t v = static_cast<std::uint16_t>(data[pos]) |
                          static_cast<std::uint16_t>(data[pos + 1]) << 8;
        pos += 2;
        return v;
    }

    std::uint32_t u32_le() {
        if (!need(4)) return 0;
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(data[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 4;
        return v;
    }

    std::uint64_t u64_le() {
        if (!need(8)) return 0;
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(data[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 8;
        return v;
    }

    double f64_le() {
        std::uint64_t bits = u64_le();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    float f32_le() {
        std::uint32_t bits = u32_le();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace lsnn

#endif
