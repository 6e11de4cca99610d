#include "mqttg/wire.hpp"

#include <bit>
#include <cmath>
#include <cstring>

namespace mqttg {

namespace {

using Kind = CodecError::Kind;

[[noreturn]] void fail(Kind k, const std::string& what) { throw CodecError(k, what); }

bool is_geo_eligible(PacketType t) {
    switch (t) {
        case PacketType::Connect:
        case PacketType::Publish:
        case PacketType::Publishg:
        case PacketType::Puback:
        case PacketType::Pubrec:
        case PacketType::Pubrel:
        case PacketType::Pubcomp:
        case PacketType::Subscribe:
        case PacketType::Unsubscribe:
        case PacketType::Pingreq:
        case PacketType::Disconnect:
            return true;
        default:
            return false;
    }
}

// Fixed flags nibble for everything except PUBLISH, whose nibble carries
// DUP/QoS/RETAIN.
uint8_t base_flags(PacketType t) {
    switch (t) {
        case PacketType::Pubrel:
        case PacketType::Subscribe:
        case PacketType::Unsubscribe:
            return 0x02;
        default:
            return 0x00;
    }
}

class Reader {
public:
    explicit Reader(std::span<const uint8_t> data) : data_(data) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool empty() const { return pos_ == data_.size(); }

    uint8_t u8() {
        need(1);
        return data_[pos_++];
    }

    uint16_t u16be() {
        need(2);
        uint16_t v = static_cast<uint16_t>(data_[pos_] << 8 | data_[pos_ + 1]);
        pos_ += 2;
        return v;
    }

    std::span<const uint8_t> take(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::span<const uint8_t> rest() {
        auto s = data_.subspan(pos_);
        pos_ = data_.size();
        return s;
    }

    std::string str() {
        uint16_t len = u16be();
        auto s = take(len);
        return std::string(reinterpret_cast<const char*>(s.data()), s.size());
    }

    std::vector<uint8_t> bin() {
        uint16_t len = u16be();
        auto s = take(len);
        return std::vector<uint8_t>(s.begin(), s.end());
    }

private:
    void need(std::size_t n) {
        if (remaining() < n) fail(Kind::Truncated, "unexpected end of packet");
    }

    std::span<const uint8_t> data_;
    std::size_t pos_ = 0;
};

class Writer {
public:
    void u8(uint8_t v) { out_.push_back(v); }

    void u16be(uint16_t v) {
        out_.push_back(static_cast<uint8_t>(v >> 8));
        out_.push_back(static_cast<uint8_t>(v & 0xFF));
    }

    void str(std::string_view s) {
        if (s.size() > 0xFFFF) fail(Kind::RangeError, "string exceeds 65535 bytes");
        u16be(static_cast<uint16_t>(s.size()));
        out_.insert(out_.end(), s.begin(), s.end());
    }

    void bin(std::span<const uint8_t> b) {
        if (b.size() > 0xFFFF) fail(Kind::RangeError, "binary field exceeds 65535 bytes");
        u16be(static_cast<uint16_t>(b.size()));
        out_.insert(out_.end(), b.begin(), b.end());
    }

    void bytes(std::span<const uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

    std::vector<uint8_t>& data() { return out_; }

private:
    std::vector<uint8_t> out_;
};

void append_f64_le(std::vector<uint8_t>& out, double v) {
    uint64_t bits = std::bit_cast<uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
}

void append_f32_le(std::vector<uint8_t>& out, float v) {
    uint32_t bits = std::bit_cast<uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
}

double read_f64_le(std::span<const uint8_t> in) {
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(in[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

float read_f32_le(std::span<const uint8_t> in) {
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(in[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

bool publish_topic_ok(std::string_view topic) {
    if (topic.empty()) return false;
    return topic.find_first_of("+#") == std::string_view::npos &&
           topic.find('\0') == std::string_view::npos;
}

void check_geo_encodable(const std::optional<GeolocationBlock>& g) {
    if (g && !g->finite()) fail(Kind::InvalidGeolocation, "non-finite geolocation coordinate");
}

void append_geo(std::vector<uint8_t>& out, const std::optional<GeolocationBlock>& g) {
    if (!g) return;
    auto block = encode_geolocation_block(*g);
    out.insert(out.end(), block.begin(), block.end());
}

// ---- per-type body encoders -------------------------------------------------

std::vector<uint8_t> body_of(const ConnectPacket& p) {
    if (p.will) {
        if (p.will->qos > 2) fail(Kind::EncodeError, "will QoS out of range");
    }
    if (p.password && !p.username) fail(Kind::EncodeError, "password without username");
    check_geo_encodable(p.geolocation);
    Writer w;
    w.str(p.protocol_name);
    w.u8(p.protocol_level);
    uint8_t flags = 0;
    if (p.clean_session) flags |= 0x02;
    if (p.will) {
        flags |= 0x04;
        flags |= static_cast<uint8_t>(p.will->qos << 3);
        if (p.will->retain) flags |= 0x20;
    }
    if (p.password) flags |= 0x40;
    if (p.username) flags |= 0x80;
    w.u8(flags);
    w.u16be(p.keep_alive);
    append_geo(w.data(), p.geolocation);
    w.str(p.client_id);
    if (p.will) {
        w.str(p.will->topic);
        w.bin(p.will->message);
    }
    if (p.username) w.str(*p.username);
    if (p.password) w.bin(*p.password);
    return std::move(w.data());
}

std::vector<uint8_t> body_of(const ConnackPacket& p) {
    Writer w;
    w.u8(p.session_present ? 0x01 : 0x00);
    w.u8(p.return_code);
    return std::move(w.data());
}

std::vector<uint8_t> body_of(const PublishPacket& p) {
    if (p.qos > 2) fail(Kind::EncodeError, "publish QoS out of range");
    if (p.qos == 0 && p.dup) fail(Kind::EncodeError, "DUP must be 0 for QoS 0");
    if (p.qos > 0 && p.packet_id == 0) fail(Kind::EncodeError, "QoS > 0 publish needs a nonzero packet id");
    if (!publish_topic_ok(p.topic)) fail(Kind::EncodeError, "invalid publish topic");
    check_geo_encodable(p.geolocation);
    Writer w;
    w.str(p.topic);
    if (p.qos > 0) w.u16be(p.packet_id);
    append_geo(w.data(), p.geolocation);
    w.bytes(p.payload);
    return std::move(w.data());
}

template <typename Ack>
std::vector<uint8_t> ack_body(const Ack& p) {
    if (p.packet_id == 0) fail(Kind::EncodeError, "packet id must be nonzero");
    check_geo_encodable(p.geolocation);
    Writer w;
    w.u16be(p.packet_id);
    append_geo(w.data(), p.geolocation);
    return std::move(w.data());
}

std::vector<uint8_t> body_of(const PubackPacket& p) { return ack_body(p); }
std::vector<uint8_t> body_of(const PubrecPacket& p) { return ack_body(p); }
std::vector<uint8_t> body_of(const PubrelPacket& p) { return ack_body(p); }
std::vector<uint8_t> body_of(const PubcompPacket& p) { return ack_body(p); }

std::vector<uint8_t> body_of(const SubscribePacket& p) {
    if (p.packet_id == 0) fail(Kind::EncodeError, "packet id must be nonzero");
    if (p.entries.empty()) fail(Kind::EncodeError, "SUBSCRIBE needs at least one filter");
    check_geo_encodable(p.geolocation);
    Writer w;
    w.u16be(p.packet_id);
    append_geo(w.data(), p.geolocation);
    for (const auto& e : p.entries) {
        if (e.filter.empty()) fail(Kind::EncodeError, "empty topic filter");
        if (e.qos > 2) fail(Kind::EncodeError, "requested QoS out of range");
        w.str(e.filter);
        w.u8(e.qos);
    }
    return std::move(w.data());
}

std::vector<uint8_t> body_of(const SubackPacket& p) {
    if (p.packet_id == 0) fail(Kind::EncodeError, "packet id must be nonzero");
    if (p.return_codes.empty()) fail(Kind::EncodeError, "SUBACK needs at least one return code");
    Writer w;
    w.u16be(p.packet_id);
    for (uint8_t rc : p.return_codes) {
        if (rc > 2 && rc != 0x80) fail(Kind::EncodeError, "invalid SUBACK return code");
        w.u8(rc);
    }
    return std::move(w.data());
}

std::vector<uint8_t> body_of(const UnsubscribePacket& p) {
    if (p.packet_id == 0) fail(Kind::EncodeError, "packet id must be nonzero");
    if (p.filters.empty()) fail(Kind::EncodeError, "UNSUBSCRIBE needs at least one filter");
    check_geo_encodable(p.geolocation);
    Writer w;
    w.u16be(p.packet_id);
    append_geo(w.data(), p.geolocation);
    for (const auto& f : p.filters) {
        if (f.empty()) fail(Kind::EncodeError, "empty topic filter");
        w.str(f);
    }
    return std::move(w.data());
}

std::vector<uint8_t> body_of(const UnsubackPacket& p) {
    if (p.packet_id == 0) fail(Kind::EncodeError, "packet id must be nonzero");
    Writer w;
    w.u16be(p.packet_id);
    return std::move(w.data());
}

std::vector<uint8_t> body_of(const PingreqPacket& p) {
    check_geo_encodable(p.geolocation);
    std::vector<uint8_t> out;
    append_geo(out, p.geolocation);
    return out;
}

std::vector<uint8_t> body_of(const PingrespPacket&) { return {}; }

std::vector<uint8_t> body_of(const DisconnectPacket& p) {
    check_geo_encodable(p.geolocation);
    std::vector<uint8_t> out;
    append_geo(out, p.geolocation);
    return out;
}

uint8_t flags_of(const Packet& p) {
    if (const auto* pub = std::get_if<PublishPacket>(&p)) {
        return static_cast<uint8_t>((pub->dup ? 0x08 : 0) | (pub->qos << 1) | (pub->retain ? 0x01 : 0));
    }
    uint8_t flags = base_flags(packet_type(p));
    // bit 3 marks the optional geolocation block on every client-origin type
    // other than PUBLISH, which signals it through the PUBLISHG type instead
    if (!std::holds_alternative<PublishPacket>(p) && packet_geolocation(p)) flags |= kGeoFlag;
    return flags;
}

// ---- decode helpers ---------------------------------------------------------

// Validates the flags nibble and reports whether the geolocation flag is set.
bool check_flags(PacketType t, uint8_t flags, const DecodeOptions& opt) {
    if (t == PacketType::Publish || t == PacketType::Publishg) return false;  // handled by caller
    uint8_t base = base_flags(t);
    bool geo = (flags & kGeoFlag) != 0;
    if ((flags & static_cast<uint8_t>(~kGeoFlag)) != base) {
        fail(Kind::ProtocolError, std::string("invalid flags for ") + to_string(t));
    }
    if (geo) {
        if (!is_geo_eligible(t)) {
            fail(Kind::ProtocolError, std::string("geolocation flag not allowed on ") + to_string(t));
        }
        if (opt.strict_3_1_1) {
            fail(Kind::ProtocolError, std::string("geolocation flag rejected in strict 3.1.1 mode on ") + to_string(t));
        }
    }
    return geo;
}

std::optional<GeolocationBlock> read_geo(Reader& r, bool present, const DecodeOptions& opt) {
    if (!present) return std::nullopt;
    return decode_geolocation_block(r.take(kGeolocationBlockSize), opt.require_finite_geo);
}

void expect_end(Reader& r, PacketType t) {
    if (!r.empty()) fail(Kind::ProtocolError, std::string("trailing bytes in ") + to_string(t));
}

Packet decode_connect(Reader& r, bool geo, const DecodeOptions& opt) {
    ConnectPacket p;
    p.protocol_name = r.str();
    p.protocol_level = r.u8();
    uint8_t flags = r.u8();
    if (flags & 0x01) fail(Kind::ProtocolError, "CONNECT reserved flag set");
    p.clean_session = (flags & 0x02) != 0;
    bool will_flag = (flags & 0x04) != 0;
    uint8_t will_qos = (flags >> 3) & 0x03;
    bool will_retain = (flags & 0x20) != 0;
    bool has_password = (flags & 0x40) != 0;
    bool has_username = (flags & 0x80) != 0;
    if (!will_flag && (will_qos != 0 || will_retain)) {
        fail(Kind::ProtocolError, "will QoS/retain set without will flag");
    }
    if (will_qos == 3) fail(Kind::ProtocolError, "will QoS 3");
    if (has_password && !has_username) fail(Kind::ProtocolError, "password flag without username flag");
    p.keep_alive = r.u16be();
    p.geolocation = read_geo(r, geo, opt);
    p.client_id = r.str();
    if (will_flag) {
        Will w;
        w.topic = r.str();
        w.message = r.bin();
        w.qos = will_qos;
        w.retain = will_retain;
        p.will = w;
    }
    if (has_username) p.username = r.str();
    if (has_password) p.password = r.bin();
    expect_end(r, PacketType::Connect);
    return p;
}

Packet decode_connack(Reader& r) {
    ConnackPacket p;
    uint8_t ack_flags = r.u8();
    if (ack_flags & 0xFE) fail(Kind::ProtocolError, "CONNACK reserved ack flags set");
    p.session_present = (ack_flags & 0x01) != 0;
    p.return_code = r.u8();
    expect_end(r, PacketType::Connack);
    return p;
}

Packet decode_publish(Reader& r, uint8_t flags, bool geo, const DecodeOptions& opt) {
    PublishPacket p;
    p.dup = (flags & 0x08) != 0;
    p.qos = (flags >> 1) & 0x03;
    p.retain = (flags & 0x01) != 0;
    if (p.qos == 3) fail(Kind::ProtocolError, "publish QoS 3");
    if (p.qos == 0 && p.dup) fail(Kind::ProtocolError, "DUP set on QoS 0 publish");
    p.topic = r.str();
    if (!publish_topic_ok(p.topic)) fail(Kind::ProtocolError, "invalid publish topic");
    if (p.qos > 0) {
        p.packet_id = r.u16be();
        if (p.packet_id == 0) fail(Kind::ProtocolError, "zero packet id on QoS > 0 publish");
    }
    p.geolocation = read_geo(r, geo, opt);
    auto rest = r.rest();
    p.payload.assign(rest.begin(), rest.end());
    return p;
}

template <typename Ack>
Packet decode_ack(Reader& r, bool geo, const DecodeOptions& opt, PacketType t) {
    Ack p;
    p.packet_id = r.u16be();
    if (p.packet_id == 0) fail(Kind::ProtocolError, "zero packet id");
    p.geolocation = read_geo(r, geo, opt);
    expect_end(r, t);
    return p;
}

Packet decode_subscribe(Reader& r, bool geo, const DecodeOptions& opt) {
    SubscribePacket p;
    p.packet_id = r.u16be();
    if (p.packet_id == 0) fail(Kind::ProtocolError, "zero packet id");
    p.geolocation = read_geo(r, geo, opt);
    while (!r.empty()) {
        Subscription s;
        s.filter = r.str();
        if (s.filter.empty()) fail(Kind::ProtocolError, "empty topic filter");
        s.qos = r.u8();
        if (s.qos > 2) fail(Kind::ProtocolError, "requested QoS out of range");
        p.entries.push_back(std::move(s));
    }
    if (p.entries.empty()) fail(Kind::ProtocolError, "SUBSCRIBE with no filters");
    return p;
}

Packet decode_suback(Reader& r) {
    SubackPacket p;
    p.packet_id = r.u16be();
    if (p.packet_id == 0) fail(Kind::ProtocolError, "zero packet id");
    while (!r.empty()) {
        uint8_t rc = r.u8();
        if (rc > 2 && rc != 0x80) fail(Kind::ProtocolError, "invalid SUBACK return code");
        p.return_codes.push_back(rc);
    }
    if (p.return_codes.empty()) fail(Kind::ProtocolError, "SUBACK with no return codes");
    return p;
}

Packet decode_unsubscribe(Reader& r, bool geo, const DecodeOptions& opt) {
    UnsubscribePacket p;
    p.packet_id = r.u16be();
    if (p.packet_id == 0) fail(Kind::ProtocolError, "zero packet id");
    p.geolocation = read_geo(r, geo, opt);
    while (!r.empty()) {
        std::string f = r.str();
        if (f.empty()) fail(Kind::ProtocolError, "empty topic filter");
        p.filters.push_back(std::move(f));
    }
    if (p.filters.empty()) fail(Kind::ProtocolError, "UNSUBSCRIBE with no filters");
    return p;
}

Packet decode_unsuback(Reader& r) {
    UnsubackPacket p;
    p.packet_id = r.u16be();
    if (p.packet_id == 0) fail(Kind::ProtocolError, "zero packet id");
    expect_end(r, PacketType::Unsuback);
    return p;
}

}  // namespace

// ---- public API -------------------------------------------------------------

const char* to_string(PacketType t) {
    switch (t) {
        case PacketType::Connect: return "CONNECT";
        case PacketType::Connack: return "CONNACK";
        case PacketType::Publish: return "PUBLISH";
        case PacketType::Puback: return "PUBACK";
        case PacketType::Pubrec: return "PUBREC";
        case PacketType::Pubrel: return "PUBREL";
        case PacketType::Pubcomp: return "PUBCOMP";
        case PacketType::Subscribe: return "SUBSCRIBE";
        case PacketType::Suback: return "SUBACK";
        case PacketType::Unsubscribe: return "UNSUBSCRIBE";
        case PacketType::Unsuback: return "UNSUBACK";
        case PacketType::Pingreq: return "PINGREQ";
        case PacketType::Pingresp: return "PINGRESP";
        case PacketType::Disconnect: return "DISCONNECT";
        case PacketType::Publishg: return "PUBLISHG";
    }
    return "?";
}

const char* to_string(CodecError::Kind k) {
    switch (k) {
        case CodecError::Kind::Truncated: return "Truncated";
        case CodecError::Kind::MalformedLength: return "MalformedLength";
        case CodecError::Kind::UnknownPacketType: return "UnknownPacketType";
        case CodecError::Kind::ProtocolError: return "ProtocolError";
        case CodecError::Kind::InvalidGeolocation: return "InvalidGeolocation";
        case CodecError::Kind::RangeError: return "RangeError";
        case CodecError::Kind::EncodeError: return "EncodeError";
    }
    return "?";
}

bool GeolocationBlock::finite() const {
    return std::isfinite(latitude) && std::isfinite(longitude) && std::isfinite(elevation);
}

PacketType packet_type(const Packet& p) {
    struct Visitor {
        PacketType operator()(const ConnectPacket&) { return PacketType::Connect; }
        PacketType operator()(const ConnackPacket&) { return PacketType::Connack; }
        PacketType operator()(const PublishPacket& pub) {
            return pub.geolocation ? PacketType::Publishg : PacketType::Publish;
        }
        PacketType operator()(const PubackPacket&) { return PacketType::Puback; }
        PacketType operator()(const PubrecPacket&) { return PacketType::Pubrec; }
        PacketType operator()(const PubrelPacket&) { return PacketType::Pubrel; }
        PacketType operator()(const PubcompPacket&) { return PacketType::Pubcomp; }
        PacketType operator()(const SubscribePacket&) { return PacketType::Subscribe; }
        PacketType operator()(const SubackPacket&) { return PacketType::Suback; }
        PacketType operator()(const UnsubscribePacket&) { return PacketType::Unsubscribe; }
        PacketType operator()(const UnsubackPacket&) { return PacketType::Unsuback; }
        PacketType operator()(const PingreqPacket&) { return PacketType::Pingreq; }
        PacketType operator()(const PingrespPacket&) { return PacketType::Pingresp; }
        PacketType operator()(const DisconnectPacket&) { return PacketType::Disconnect; }
    };
    return std::visit(Visitor{}, p);
}

std::optional<GeolocationBlock> packet_geolocation(const Packet& p) {
    return std::visit(
        [](const auto& v) -> std::optional<GeolocationBlock> {
            if constexpr (requires { v.geolocation; }) return v.geolocation;
            return std::nullopt;
        },
        p);
}

std::vector<uint8_t> encode_mbi(uint32_t value) {
    std::vector<uint8_t> out;
    append_mbi(out, value);
    return out;
}

void append_mbi(std::vector<uint8_t>& out, uint32_t value) {
    if (value > kMaxRemainingLength) fail(Kind::RangeError, "remaining length out of range");
    do {
        uint8_t byte = value % 128;
        value /= 128;
        if (value > 0) byte |= 0x80;
        out.push_back(byte);
    } while (value > 0);
}

MbiValue decode_mbi(std::span<const uint8_t> in) {
    uint32_t value = 0;
    uint32_t multiplier = 1;
    for (std::size_t i = 0; i < 4; ++i) {
        if (i >= in.size()) fail(Kind::Truncated, "length field cut short");
        uint8_t byte = in[i];
        value += static_cast<uint32_t>(byte & 0x7F) * multiplier;
        if ((byte & 0x80) == 0) return {value, i + 1};
        multiplier *= 128;
    }
    fail(Kind::MalformedLength, "length field exceeds 4 bytes");
}

std::vector<uint8_t> encode_utf8_field(std::string_view s) {
    if (s.size() > 0xFFFF) fail(Kind::RangeError, "string exceeds 65535 bytes");
    std::vector<uint8_t> out;
    out.reserve(s.size() + 2);
    out.push_back(static_cast<uint8_t>(s.size() >> 8));
    out.push_back(static_cast<uint8_t>(s.size() & 0xFF));
    out.insert(out.end(), s.begin(), s.end());
    return out;
}

std::array<uint8_t, kGeolocationBlockSize> encode_geolocation_block(const GeolocationBlock& b) {
    if (!b.finite()) fail(Kind::InvalidGeolocation, "non-finite geolocation coordinate");
    std::vector<uint8_t> tmp;
    tmp.reserve(kGeolocationBlockSize);
    tmp.push_back(b.version);
    append_f64_le(tmp, b.latitude);
    append_f64_le(tmp, b.longitude);
    append_f32_le(tmp, b.elevation);
    std::array<uint8_t, kGeolocationBlockSize> out{};
    std::memcpy(out.data(), tmp.data(), kGeolocationBlockSize);
    return out;
}

GeolocationBlock decode_geolocation_block(std::span<const uint8_t> in, bool require_finite) {
    if (in.size() < kGeolocationBlockSize) fail(Kind::Truncated, "geolocation block cut short");
    GeolocationBlock b;
    b.version = in[0];
    b.latitude = read_f64_le(in.subspan(1, 8));
    b.longitude = read_f64_le(in.subspan(9, 8));
    b.elevation = read_f32_le(in.subspan(17, 4));
    if (require_finite && !b.finite()) {
        fail(Kind::InvalidGeolocation, "non-finite geolocation coordinate");
    }
    return b;
}

std::vector<uint8_t> encode_packet(const Packet& p) {
    std::vector<uint8_t> body = std::visit([](const auto& v) { return body_of(v); }, p);
    if (body.size() > kMaxRemainingLength) fail(Kind::RangeError, "packet exceeds maximum size");
    std::vector<uint8_t> out;
    out.reserve(body.size() + 5);
    uint8_t type_nibble = static_cast<uint8_t>(packet_type(p));
    out.push_back(static_cast<uint8_t>(type_nibble << 4 | flags_of(p)));
    append_mbi(out, static_cast<uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

Decoded decode_packet(std::span<const uint8_t> in, const DecodeOptions& opt) {
    Reader header(in);
    uint8_t first = header.u8();
    uint8_t type_nibble = first >> 4;
    uint8_t flags = first & 0x0F;
    if (type_nibble == 0) fail(Kind::UnknownPacketType, "packet type 0");
    auto type = static_cast<PacketType>(type_nibble);

    MbiValue len = decode_mbi(in.subspan(header.pos()));
    std::size_t body_start = header.pos() + len.consumed;
    if (in.size() - body_start < len.value) fail(Kind::Truncated, "packet body cut short");
    Reader r(in.subspan(body_start, len.value));
    std::size_t consumed = body_start + len.value;

    Packet packet = [&]() -> Packet {
        switch (type) {
            case PacketType::Publishg:
                if (opt.strict_3_1_1) fail(Kind::ProtocolError, "PUBLISHG rejected in strict 3.1.1 mode");
                return decode_publish(r, flags, true, opt);
            case PacketType::Publish:
                return decode_publish(r, flags, false, opt);
            case PacketType::Connect:
                return decode_connect(r, check_flags(type, flags, opt), opt);
            case PacketType::Connack:
                check_flags(type, flags, opt);
                return decode_connack(r);
            case PacketType::Puback:
                return decode_ack<PubackPacket>(r, check_flags(type, flags, opt), opt, type);
            case PacketType::Pubrec:
                return decode_ack<PubrecPacket>(r, check_flags(type, flags, opt), opt, type);
            case PacketType::Pubrel:
                return decode_ack<PubrelPacket>(r, check_flags(type, flags, opt), opt, type);
            case PacketType::Pubcomp:
                return decode_ack<PubcompPacket>(r, check_flags(type, flags, opt), opt, type);
            case PacketType::Subscribe:
                return decode_subscribe(r, check_flags(type, flags, opt), opt);
            case PacketType::Suback:
                check_flags(type, flags, opt);
                return decode_suback(r);
            case PacketType::Unsubscribe:
                return decode_unsubscribe(r, check_flags(type, flags, opt), opt);
            case PacketType::Unsuback:
                check_flags(type, flags, opt);
                return decode_unsuback(r);
            case PacketType::Pingreq: {
                bool geo = check_flags(type, flags, opt);
                PingreqPacket p;
                p.geolocation = read_geo(r, geo, opt);
                expect_end(r, type);
                return p;
            }
            case PacketType::Pingresp: {
                check_flags(type, flags, opt);
                expect_end(r, type);
                return PingrespPacket{};
            }
            case PacketType::Disconnect: {
                bool geo = check_flags(type, flags, opt);
                DisconnectPacket p;
                p.geolocation = read_geo(r, geo, opt);
                expect_end(r, type);
                return p;
            }
        }
        fail(Kind::UnknownPacketType, "unreachable");
    }();

    return {std::move(packet), consumed};
}

std::optional<std::size_t> frame_size(std::span<const uint8_t> buffer) {
    if (buffer.empty()) return std::nullopt;
    uint32_t value = 0;
    uint32_t multiplier = 1;
    for (std::size_t i = 0; i < 4; ++i) {
        if (1 + i >= buffer.size()) return std::nullopt;
        uint8_t byte = buffer[1 + i];
        value += static_cast<uint32_t>(byte & 0x7F) * multiplier;
        if ((byte & 0x80) == 0) return 1 + (i + 1) + value;
        multiplier *= 128;
    }
    fail(Kind::MalformedLength, "length field exceeds 4 bytes");
}

}  // namespace mqttg
