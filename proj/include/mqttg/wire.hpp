#ifndef MQTTG_WIRE_HPP
#define MQTTG_WIRE_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace mqttg {

// Control packet type nibbles. 0 is forbidden on the wire; 15 is the
// geolocation-bearing publish used by the extended dialect.
enum class PacketType : uint8_t {
    Connect = 1,
    Connack = 2,
    Publish = 3,
    Puback = 4,
    Pubrec = 5,
    Pubrel = 6,
    Pubcomp = 7,
    Subscribe = 8,
    Suback = 9,
    Unsubscribe = 10,
    Unsuback = 11,
    Pingreq = 12,
    Pingresp = 13,
    Disconnect = 14,
    Publishg = 15,
};

const char* to_string(PacketType t);

// 21-byte record carried between the variable header and the payload:
// version(1) | latitude(8, f64 LE) | longitude(8, f64 LE) | elevation(4, f32 LE).
struct GeolocationBlock {
    uint8_t version = 1;
    double latitude = 0.0;
    double longitude = 0.0;
    float elevation = 0.0f;

    bool finite() const;
    bool operator==(const GeolocationBlock&) const = default;
};

inline constexpr std::size_t kGeolocationBlockSize = 21;
inline constexpr uint32_t kMaxRemainingLength = 268435455;  // 0xFF,0xFF,0xFF,0x7F
inline constexpr uint8_t kGeoFlag = 0x08;                   // bit 3 of the flags nibble

class CodecError : public std::runtime_error {
public:
    enum class Kind {
        Truncated,
        MalformedLength,
        UnknownPacketType,
        ProtocolError,
        InvalidGeolocation,
        RangeError,
        EncodeError,
    };

    CodecError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

const char* to_string(CodecError::Kind k);

// ---- packet variants -------------------------------------------------------

struct Will {
    std::string topic;
    std::vector<uint8_t> message;
    uint8_t qos = 0;
    bool retain = false;

    bool operator==(const Will&) const = default;
};

struct ConnectPacket {
    std::string protocol_name = "MQTT";
    uint8_t protocol_level = 4;
    bool clean_session = true;
    uint16_t keep_alive = 60;
    std::string client_id;
    std::optional<Will> will;
    std::optional<std::string> username;
    std::optional<std::vector<uint8_t>> password;
    std::optional<GeolocationBlock> geolocation;

    bool operator==(const ConnectPacket&) const = default;
};

struct ConnackPacket {
    bool session_present = false;
    uint8_t return_code = 0;

    bool operator==(const ConnackPacket&) const = default;
};

// A publish with geolocation present encodes as PUBLISHG (type nibble 15);
// without it the encoding is plain MQTT 3.1.1 PUBLISH.
struct PublishPacket {
    bool dup = false;
    uint8_t qos = 0;
    bool retain = false;
    std::string topic;
    uint16_t packet_id = 0;  // meaningful only when qos > 0
    std::vector<uint8_t> payload;
    std::optional<GeolocationBlock> geolocation;

    bool operator==(const PublishPacket&) const = default;
};

struct PubackPacket {
    uint16_t packet_id = 0;
    std::optional<GeolocationBlock> geolocation;
    bool operator==(const PubackPacket&) const = default;
};

struct PubrecPacket {
    uint16_t packet_id = 0;
    std::optional<GeolocationBlock> geolocation;
    bool operator==(const PubrecPacket&) const = default;
};

struct PubrelPacket {
    uint16_t packet_id = 0;
    std::optional<GeolocationBlock> geolocation;
    bool operator==(const PubrelPacket&) const = default;
};

struct PubcompPacket {
    uint16_t packet_id = 0;
    std::optional<GeolocationBlock> geolocation;
    bool operator==(const PubcompPacket&) const = default;
};

struct Subscription {
    std::string filter;
    uint8_t qos = 0;
    bool operator==(const Subscription&) const = default;
};

struct SubscribePacket {
    uint16_t packet_id = 0;
    std::vector<Subscription> entries;
    std::optional<GeolocationBlock> geolocation;
    bool operator==(const SubscribePacket&) const = default;
};

struct SubackPacket {
    uint16_t packet_id = 0;
    std::vector<uint8_t> return_codes;  // granted QoS per filter, 0x80 = failure
    bool operator==(const SubackPacket&) const = default;
};

struct UnsubscribePacket {
    uint16_t packet_id = 0;
    std::vector<std::string> filters;
    std::optional<GeolocationBlock> geolocation;
    bool operator==(const UnsubscribePacket&) const = default;
};

struct UnsubackPacket {
    uint16_t packet_id = 0;
    bool operator==(const UnsubackPacket&) const = default;
};

struct PingreqPacket {
    std::optional<GeolocationBlock> geolocation;
    bool operator==(const PingreqPacket&) const = default;
};

struct PingrespPacket {
    bool operator==(const PingrespPacket&) const = default;
};

struct DisconnectPacket {
    std::optional<GeolocationBlock> geolocation;
    bool operator==(const DisconnectPacket&) const = default;
};

using Packet = std::variant<ConnectPacket, ConnackPacket, PublishPacket, PubackPacket,
                            PubrecPacket, PubrelPacket, PubcompPacket, SubscribePacket,
                            SubackPacket, UnsubscribePacket, UnsubackPacket, PingreqPacket,
                            PingrespPacket, DisconnectPacket>;

// Wire type nibble the packet will encode with. A publish reports Publishg
// when its geolocation is present.
PacketType packet_type(const Packet& p);

// Geolocation block carried by the packet, if any. Broker-origin types
// (CONNACK, SUBACK, UNSUBACK, PINGRESP) never carry one.
std::optional<GeolocationBlock> packet_geolocation(const Packet& p);

struct DecodeOptions {
    // Reject the geolocation dialect entirely: type nibble 15 and any set
    // geolocation flag become ProtocolError, matching a stock 3.1.1 peer.
    bool strict_3_1_1 = false;
    // Reject NaN/Inf coordinates. Off only for fuzzing; routing needs finite
    // values, so every production path keeps this on.
    bool require_finite_geo = true;
};

struct Decoded {
    Packet packet;
    std::size_t consumed = 0;
};

// ---- primitives ------------------------------------------------------------

// Variable byte integer: 7 data bits per byte, continuation bit on all but the
// last byte, minimal length, at most 4 bytes.
std::vector<uint8_t> encode_mbi(uint32_t value);
void append_mbi(std::vector<uint8_t>& out, uint32_t value);

struct MbiValue {
    uint32_t value = 0;
    std::size_t consumed = 0;
};
MbiValue decode_mbi(std::span<const uint8_t> in);

// MQTT string: 2-byte big-endian length prefix + UTF-8 bytes.
std::vector<uint8_t> encode_utf8_field(std::string_view s);

std::array<uint8_t, kGeolocationBlockSize> encode_geolocation_block(const GeolocationBlock& b);
GeolocationBlock decode_geolocation_block(std::span<const uint8_t> in, bool require_finite = true);

// ---- whole packets ---------------------------------------------------------

std::vector<uint8_t> encode_packet(const Packet& p);
Decoded decode_packet(std::span<const uint8_t> in, const DecodeOptions& opt = {});

// Size of the first complete packet in a partially received stream buffer, or
// nullopt if more bytes are needed. Throws MalformedLength when the length
// field itself is invalid.
std::optional<std::size_t> frame_size(std::span<const uint8_t> buffer);

}  // namespace mqttg

#endif
