#include "mqttg/sysg.hpp"

#include <bit>

#include "mqttg/wire.hpp"

namespace mqttg {

namespace {

constexpr uint8_t kFencePayloadVersion = 1;

void append_f64_le(std::vector<uint8_t>& out, double v) {
    uint64_t bits = std::bit_cast<uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
}

double read_f64_le(std::span<const uint8_t> in) {
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(in[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

bool is_sysg_topic(std::string_view topic) { return topic.starts_with(kSysgPrefix); }

std::vector<uint8_t> encode_fence_payload(const Geofence& f) {
    if (f.vertices.size() > 0xFFFF) {
        throw CodecError(CodecError::Kind::RangeError, "fence has too many vertices");
    }
    std::vector<uint8_t> out;
    out.reserve(4 + f.vertices.size() * 16);
    out.push_back(kFencePayloadVersion);
    out.push_back(static_cast<uint8_t>(f.mode));
    uint16_t count = static_cast<uint16_t>(f.vertices.size());
    out.push_back(static_cast<uint8_t>(count & 0xFF));
    out.push_back(static_cast<uint8_t>(count >> 8));
    for (const auto& v : f.vertices) {
        append_f64_le(out, v.latitude);
        append_f64_le(out, v.longitude);
    }
    return out;
}

Geofence decode_fence_payload(std::span<const uint8_t> payload) {
    using Kind = CodecError::Kind;
    if (payload.size() < 4) throw CodecError(Kind::Truncated, "fence payload cut short");
    if (payload[0] != kFencePayloadVersion) {
        throw CodecError(Kind::ProtocolError, "unsupported fence payload version");
    }
    if (payload[1] > 1) throw CodecError(Kind::ProtocolError, "unknown fence mode");
    Geofence f;
    f.mode = static_cast<FenceMode>(payload[1]);
    uint16_t count = static_cast<uint16_t>(payload[2] | payload[3] << 8);
    std::size_t expected = 4 + static_cast<std::size_t>(count) * 16;
    if (payload.size() < expected) throw CodecError(Kind::Truncated, "fence payload cut short");
    if (payload.size() > expected) throw CodecError(Kind::ProtocolError, "trailing bytes in fence payload");
    f.vertices.reserve(count);
    for (uint16_t i = 0; i < count; ++i) {
        std::size_t off = 4 + static_cast<std::size_t>(i) * 16;
        GeoPoint v;
        v.latitude = read_f64_le(payload.subspan(off, 8));
        v.longitude = read_f64_le(payload.subspan(off + 8, 8));
        f.vertices.push_back(v);
    }
    return f;
}

}  // namespace mqttg
