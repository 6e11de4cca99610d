#ifndef MQTTG_SYSG_HPP
#define MQTTG_SYSG_HPP

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mqttg/geometry.hpp"

namespace mqttg {

// Reserved namespace through which clients manage their geofence. Publishes
// under this prefix are consumed by the broker and never routed.
inline constexpr std::string_view kSysgPrefix = "$SYSg/";
inline constexpr std::string_view kSysgSetTopic = "$SYSg/geofence/set";
inline constexpr std::string_view kSysgClearTopic = "$SYSg/geofence/clear";

bool is_sysg_topic(std::string_view topic);

// Fence payload: version u8 (=1) | mode u8 (0=static, 1=dynamic) |
// vertex_count u16 LE | vertex_count x (lat f64 LE | lon f64 LE).
// Little-endian throughout, matching the geolocation block.
std::vector<uint8_t> encode_fence_payload(const Geofence& f);

// Throws CodecError: Truncated on short input, ProtocolError on a bad
// version/mode byte or trailing bytes. Vertex-count/finiteness rules are the
// caller's to check via fence_issue().
Geofence decode_fence_payload(std::span<const uint8_t> payload);

}  // namespace mqttg

#endif
