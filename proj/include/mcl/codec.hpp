#pragma once

#include "mcl/error.hpp"
#include "mcl/tensor.hpp"

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mcl {

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for very large buffers.
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = ::crc32(crc, bytes.data() + off, chunk);
        off += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

/// Little-endian byte writer.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void text(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    [[nodiscard]] const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

/// Little-endian byte reader; running past the end raises `on_short`.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, ErrorKind on_short) : bytes_(bytes), on_short_(on_short) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::string text(std::size_t n) {
        auto s = bytes(n);
        return {s.begin(), s.end()};
    }

    [[nodiscard]] std::size_t position() const noexcept { return pos_; }
    [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n)
            throw Error(on_short_, "buffer ends at byte " + std::to_string(bytes_.size()) + ", needed " +
                                       std::to_string(pos_ + n));
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    ErrorKind on_short_;
};

// MeasurementPacket layout (all integers little-endian):
//   "MCLP" | version u8 = 1 | K u8 | K x u16 extents | dtype u8 = 0 (f32)
//   | sample_id u64 | payload_len u32 | payload (row-major f32) | crc32 u32
// The CRC covers every byte before it.
inline constexpr std::uint8_t kPacketVersion = 1;
inline constexpr std::uint8_t kPacketDtypeF32 = 0;
inline constexpr std::size_t kPacketMaxRank = 8;

/// Encoded size of a packet carrying a prefix of the given dims.
inline std::size_t packet_bytes(const Shape& dims) { return 23 + 2 * dims.size() + 4 * shape_size(dims); }

inline std::vector<std::uint8_t> encode_packet(const Tensor& z_bar, std::uint64_t sample_id) {
    if (z_bar.rank() > kPacketMaxRank)
        throw Error(ErrorKind::argument, "packet rank " + std::to_string(z_bar.rank()) + " exceeds " +
                                             std::to_string(kPacketMaxRank));
    for (auto e : z_bar.shape())
        if (e > 0xFFFF) throw Error(ErrorKind::argument, "extent " + std::to_string(e) + " overflows 16 bits");
    ByteWriter w;
    w.text("MCLP");
    w.u8(kPacketVersion);
    w.u8(static_cast<std::uint8_t>(z_bar.rank()));
    for (auto e : z_bar.shape()) w.u16(static_cast<std::uint16_t>(e));
    w.u8(kPacketDtypeF32);
    w.u64(sample_id);
    w.u32(static_cast<std::uint32_t>(4 * z_bar.size()));
    for (double v : z_bar.data()) w.f32(static_cast<float>(v));
    w.u32(crc32_of(w.buffer()));
    return w.take();
}

struct DecodedPacket {
    Tensor z_bar;
    std::uint64_t sample_id = 0;
};

/// Validates and decodes one packet. Errors: bad-magic, bad-version,
/// length-mismatch (truncation or payload length disagreeing with dims),
/// crc-failure, format (unknown dtype, zero extent).
inline DecodedPacket decode_packet(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, ErrorKind::length_mismatch);
    if (r.text(4) != "MCLP") throw Error(ErrorKind::bad_magic, "packet does not start with MCLP");
    if (const auto v = r.u8(); v != kPacketVersion)
        throw Error(ErrorKind::bad_version, "unsupported packet version " + std::to_string(v));
    const std::size_t rank = r.u8();
    if (rank == 0 || rank > kPacketMaxRank) throw Error(ErrorKind::format, "packet rank out of range");
    Shape dims(rank);
    for (auto& d : dims) {
        d = r.u16();
        if (d == 0) throw Error(ErrorKind::format, "packet extent is zero");
    }
    if (const auto dtype = r.u8(); dtype != kPacketDtypeF32)
        throw Error(ErrorKind::format, "unknown payload dtype " + std::to_string(dtype));
    const std::uint64_t sample_id = r.u64();
    const std::uint32_t payload_len = r.u32();
    if (payload_len != 4 * shape_size(dims))
        throw Error(ErrorKind::length_mismatch, "payload length " + std::to_string(payload_len) + " does not match dims " +
                                                    shape_string(dims));
    if (r.remaining() != static_cast<std::size_t>(payload_len) + 4)
        throw Error(ErrorKind::length_mismatch, "packet is " + std::to_string(bytes.size()) + " bytes, header declares " +
                                                    std::to_string(r.position() + payload_len + 4));
    const std::size_t crc_at = r.position() + payload_len;
    Tensor z(dims);
    for (auto& v : z.data()) v = static_cast<double>(r.f32());
    const std::uint32_t crc = r.u32();
    if (crc != crc32_of(bytes.first(crc_at))) throw Error(ErrorKind::crc_failure, "packet checksum mismatch");
    return {std::move(z), sample_id};
}

}  // namespace mcl
