#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "generators.hpp"
#include "mqttg/wire.hpp"
#include "oracles.hpp"

using namespace mqttg;
using Kind = CodecError::Kind;

namespace {

std::vector<uint8_t> bytes(std::initializer_list<int> v) {
    std::vector<uint8_t> out;
    for (int b : v) out.push_back(static_cast<uint8_t>(b));
    return out;
}

Kind decode_kind(const std::vector<uint8_t>& in, DecodeOptions opt = {}) {
    try {
        decode_packet(in, opt);
    } catch (const CodecError& e) {
        return e.kind();
    }
    FAIL("expected a CodecError");
    return Kind::Truncated;
}

}  // namespace

TEST_CASE("mbi encodes the documented examples") {
    CHECK(encode_mbi(0) == bytes({0x00}));
    CHECK(encode_mbi(321) == bytes({0xC1, 0x02}));
    CHECK(encode_mbi(kMaxRemainingLength) == bytes({0xFF, 0xFF, 0xFF, 0x7F}));
    CHECK(encode_mbi(127) == bytes({0x7F}));
    CHECK(encode_mbi(128) == bytes({0x80, 0x01}));
}

TEST_CASE("mbi matches the digit-expansion oracle and stays minimal") {
    gen::PacketGen g(101);
    for (int i = 0; i < 5000; ++i) {
        uint32_t v = static_cast<uint32_t>(g.pick(kMaxRemainingLength + 1ull));
        auto enc = encode_mbi(v);
        CHECK(enc == oracles::mbi(v));
        auto dec = decode_mbi(enc);
        CHECK(dec.value == v);
        CHECK(dec.consumed == enc.size());
        // minimality: last byte never a bare continuation filler
        CHECK((enc.back() & 0x80) == 0);
        if (enc.size() > 1) CHECK(v >= 128u);
    }
}

TEST_CASE("mbi rejects out-of-range and malformed input") {
    CHECK_THROWS_AS(encode_mbi(kMaxRemainingLength + 1), CodecError);
    CHECK(decode_kind(bytes({0xC0, 0x80, 0x80, 0x80, 0x80}), {}) == Kind::MalformedLength);
    try {
        decode_mbi(bytes({0x80, 0x80, 0x80, 0x80}));
        FAIL("expected MalformedLength");
    } catch (const CodecError& e) {
        CHECK(e.kind() == Kind::MalformedLength);
    }
    try {
        decode_mbi(bytes({0x80}));
        FAIL("expected Truncated");
    } catch (const CodecError& e) {
        CHECK(e.kind() == Kind::Truncated);
    }
}

TEST_CASE("utf8 field framing") {
    CHECK(encode_utf8_field("") == bytes({0x00, 0x00}));
    CHECK(encode_utf8_field("a/b") == bytes({0x00, 0x03, 0x61, 0x2F, 0x62}));
    std::string big(70000, 'x');
    CHECK_THROWS_AS(encode_utf8_field(big), CodecError);
}

TEST_CASE("geolocation block layout") {
    GeolocationBlock zero{1, 0.0, 0.0, 0.0f};
    auto enc = encode_geolocation_block(zero);
    CHECK(enc.size() == 21);
    CHECK(enc[0] == 0x01);
    for (std::size_t i = 1; i < enc.size(); ++i) CHECK(enc[i] == 0);

    // frozen against the arithmetic IEEE-754 oracle
    GeolocationBlock b{1, 49.8483, -99.9501, 409.0f};
    auto expected = oracles::geo_block_bytes(1, 49.8483, -99.9501, 409.0f);
    auto got = encode_geolocation_block(b);
    CHECK(std::vector<uint8_t>(got.begin(), got.end()) == expected);
    CHECK(decode_geolocation_block(got) == b);
}

TEST_CASE("geolocation block is always 21 bytes and round-trips") {
    gen::PacketGen g(7);
    for (int i = 0; i < 2000; ++i) {
        GeolocationBlock b = g.geo();
        auto enc = encode_geolocation_block(b);
        CHECK(enc.size() == kGeolocationBlockSize);
        CHECK(decode_geolocation_block(enc) == b);
    }
}

TEST_CASE("geolocation block error paths") {
    std::vector<uint8_t> short_input(20, 0);
    CHECK_THROWS_AS(decode_geolocation_block(short_input), CodecError);

    GeolocationBlock nan_block{1, std::nan(""), 0.0, 0.0f};
    CHECK_THROWS_AS(encode_geolocation_block(nan_block), CodecError);

    // NaN bytes: rejected when finiteness is required, passed through when not
    auto nan_bytes = oracles::geo_block_bytes(1, 0.0, 0.0, 0.0f);
    for (int i = 1; i <= 8; ++i) nan_bytes[i] = 0xFF;  // lat = NaN
    CHECK_THROWS_AS(decode_geolocation_block(nan_bytes, true), CodecError);
    auto permissive = decode_geolocation_block(nan_bytes, false);
    CHECK(std::isnan(permissive.latitude));
}

TEST_CASE("pingreq fixed header with and without geolocation") {
    CHECK(encode_packet(PingreqPacket{}) == bytes({0xC0, 0x00}));

    GeolocationBlock b{1, 49.8483, -99.9501, 409.0f};
    auto enc = encode_packet(PingreqPacket{b});
    CHECK(enc.size() == 2 + 21);
    CHECK(enc[0] == 0xC8);  // type 12, geolocation flag
    CHECK(enc[1] == 0x15);  // remaining length 21
    auto block = oracles::geo_block_bytes(1, 49.8483, -99.9501, 409.0f);
    CHECK(std::vector<uint8_t>(enc.begin() + 2, enc.end()) == block);
}

TEST_CASE("publish with geolocation encodes as type 15") {
    PublishPacket p;
    p.topic = "a/b";
    p.payload = {'h', 'i'};
    p.geolocation = GeolocationBlock{1, 49.8483, -99.9501, 409.0f};
    auto enc = encode_packet(p);
    CHECK((enc[0] >> 4) == 0xF);
    CHECK(enc[0] == 0xF0);  // QoS 0, no flags

    p.qos = 1;
    p.packet_id = 10;
    enc = encode_packet(p);
    CHECK(enc[0] == 0xF2);

    p.geolocation.reset();
    enc = encode_packet(p);
    CHECK(enc[0] == 0x32);  // plain 3.1.1 publish
}

TEST_CASE("publishg field order: topic, packet id, block, payload") {
    PublishPacket p;
    p.topic = "a/b";
    p.qos = 1;
    p.packet_id = 10;
    p.payload = {'h', 'i'};
    p.geolocation = GeolocationBlock{1, 49.8483, -99.9501, 409.0f};
    auto enc = encode_packet(p);

    std::vector<uint8_t> expected = {0xF2, 0x1E, 0x00, 0x03, 'a', '/', 'b', 0x00, 0x0A};
    auto block = oracles::geo_block_bytes(1, 49.8483, -99.9501, 409.0f);
    expected.insert(expected.end(), block.begin(), block.end());
    expected.push_back('h');
    expected.push_back('i');
    CHECK(enc == expected);

    auto [decoded, consumed] = decode_packet(enc);
    CHECK(consumed == enc.size());
    CHECK(std::get<PublishPacket>(decoded) == p);
}

TEST_CASE("geolocation placement after the variable header") {
    // CONNECT: after keep-alive, before client id
    ConnectPacket c;
    c.client_id = "geo";
    c.keep_alive = 30;
    c.geolocation = GeolocationBlock{1, 49.8483, -99.9501, 409.0f};
    auto enc = encode_packet(c);
    CHECK(enc[0] == 0x18);  // CONNECT, geolocation flag
    // fixed(2) + name(6) + level(1) + flags(1) + keepalive(2) = offset 12
    auto block = oracles::geo_block_bytes(1, 49.8483, -99.9501, 409.0f);
    CHECK(std::vector<uint8_t>(enc.begin() + 12, enc.begin() + 12 + 21) == block);
    CHECK(std::get<ConnectPacket>(decode_packet(enc).packet) == c);

    // SUBSCRIBE: after packet id, before the filter list
    SubscribePacket s;
    s.packet_id = 5;
    s.entries = {{"a/+", 1}};
    s.geolocation = c.geolocation;
    enc = encode_packet(s);
    CHECK(enc[0] == 0x8A);  // 1000 1010: subscribe, geo flag | reserved 0010
    CHECK(std::vector<uint8_t>(enc.begin() + 4, enc.begin() + 4 + 21) == block);
    CHECK(std::get<SubscribePacket>(decode_packet(enc).packet) == s);

    // PUBACK: after packet id
    PubackPacket a;
    a.packet_id = 7;
    a.geolocation = c.geolocation;
    enc = encode_packet(a);
    CHECK(enc[0] == 0x48);
    CHECK(enc[1] == 23);
    CHECK(std::vector<uint8_t>(enc.begin() + 4, enc.end()) == block);
    CHECK(std::get<PubackPacket>(decode_packet(enc).packet) == a);
}

TEST_CASE("geolocation overhead is exactly the block plus length growth") {
    gen::PacketGen g(17);
    GeolocationBlock b{1, 12.5, -33.25, 100.0f};

    // payload-free packets at small sizes: exactly 21
    CHECK(encode_packet(PingreqPacket{b}).size() - encode_packet(PingreqPacket{}).size() == 21);
    CHECK(encode_packet(DisconnectPacket{b}).size() - encode_packet(DisconnectPacket{}).size() ==
          21);

    for (int i = 0; i < 500; ++i) {
        PublishPacket p;
        p.topic = g.topic();
        p.qos = static_cast<uint8_t>(g.pick(3));
        if (p.qos > 0) p.packet_id = g.packet_id();
        p.payload = g.payload(300);
        auto lean = encode_packet(p).size();
        p.geolocation = b;
        auto full = encode_packet(p).size();
        std::size_t growth = full - lean;
        CHECK((growth == 21 || growth == 22));
    }
}

TEST_CASE("decode rejects the geolocation dialect in strict mode") {
    GeolocationBlock b{1, 1.0, 2.0, 3.0f};
    DecodeOptions strict{.strict_3_1_1 = true, .require_finite_geo = true};

    PublishPacket p;
    p.topic = "t";
    p.geolocation = b;
    CHECK(decode_kind(encode_packet(p), strict) == Kind::ProtocolError);
    CHECK(decode_kind(encode_packet(PingreqPacket{b}), strict) == Kind::ProtocolError);
    CHECK(decode_kind(encode_packet(ConnectPacket{.client_id = "x", .geolocation = b}), strict) ==
          Kind::ProtocolError);

    // without geolocation the same packets pass strict decode
    p.geolocation.reset();
    CHECK_NOTHROW(decode_packet(encode_packet(p), strict));
    CHECK_NOTHROW(decode_packet(encode_packet(PingreqPacket{}), strict));
}

TEST_CASE("broker-origin types never accept the geolocation flag") {
    // CONNACK with bit 3 set
    CHECK(decode_kind(bytes({0x28, 0x02, 0x00, 0x00})) == Kind::ProtocolError);
    // SUBACK with bit 3 set
    CHECK(decode_kind(bytes({0x98, 0x03, 0x00, 0x01, 0x01})) == Kind::ProtocolError);
    // UNSUBACK with bit 3 set
    CHECK(decode_kind(bytes({0xB8, 0x02, 0x00, 0x01})) == Kind::ProtocolError);
    // PINGRESP with bit 3 set
    CHECK(decode_kind(bytes({0xD8, 0x00})) == Kind::ProtocolError);
}

TEST_CASE("structural decode errors carry typed kinds") {
    CHECK(decode_kind(bytes({0x00, 0x00})) == Kind::UnknownPacketType);
    CHECK(decode_kind(bytes({0xC0})) == Kind::Truncated);
    CHECK(decode_kind(bytes({0x30, 0x05, 0x00, 0x03, 'a'})) == Kind::Truncated);
    // PINGREQ with nonzero remaining length but no geolocation flag
    CHECK(decode_kind(bytes({0xC0, 0x01, 0x00})) == Kind::ProtocolError);
    // publish QoS 3
    CHECK(decode_kind(bytes({0x36, 0x05, 0x00, 0x01, 't', 0x00, 0x01})) == Kind::ProtocolError);
    // publish QoS 0 with DUP
    CHECK(decode_kind(bytes({0x38, 0x03, 0x00, 0x01, 't'})) == Kind::ProtocolError);
    // zero packet id on a QoS 1 publish
    CHECK(decode_kind(bytes({0x32, 0x05, 0x00, 0x01, 't', 0x00, 0x00})) == Kind::ProtocolError);
    // wildcard in a publish topic
    CHECK(decode_kind(bytes({0x30, 0x03, 0x00, 0x01, '#'})) == Kind::ProtocolError);
    // CONNECT reserved flag bit 0
    CHECK(decode_kind(bytes({0x10, 0x0D, 0x00, 0x04, 'M', 'Q', 'T', 'T', 0x04, 0x03, 0x00, 0x3C,
                             0x00, 0x01, 'a'})) == Kind::ProtocolError);
    // SUBSCRIBE with no filters
    CHECK(decode_kind(bytes({0x82, 0x02, 0x00, 0x01})) == Kind::ProtocolError);
    // trailing bytes in a PUBACK
    CHECK(decode_kind(bytes({0x40, 0x03, 0x00, 0x01, 0x00})) == Kind::ProtocolError);
}

TEST_CASE("encode validates packet invariants") {
    PublishPacket p;
    p.topic = "t";
    p.qos = 1;  // missing packet id
    CHECK_THROWS_AS(encode_packet(p), CodecError);

    p.packet_id = 1;
    p.qos = 0;
    p.dup = true;  // DUP on QoS 0
    CHECK_THROWS_AS(encode_packet(p), CodecError);

    p.dup = false;
    p.topic = "a/+";
    CHECK_THROWS_AS(encode_packet(p), CodecError);

    SubscribePacket s;
    s.packet_id = 1;  // empty filter list
    CHECK_THROWS_AS(encode_packet(s), CodecError);

    ConnectPacket c;
    c.client_id = "x";
    c.password = std::vector<uint8_t>{1};  // password without username
    CHECK_THROWS_AS(encode_packet(c), CodecError);
}

TEST_CASE("decode reports consumed bytes and ignores trailing data") {
    auto enc = encode_packet(PingreqPacket{});
    enc.push_back(0xAA);
    enc.push_back(0xBB);
    auto [packet, consumed] = decode_packet(enc);
    CHECK(consumed == 2);
    CHECK(std::holds_alternative<PingreqPacket>(packet));
}

TEST_CASE("round-trip holds for generated packets of every type") {
    gen::PacketGen g(42);
    for (int i = 0; i < 3000; ++i) {
        Packet p = g.packet();
        auto enc = encode_packet(p);
        auto [back, consumed] = decode_packet(enc);
        REQUIRE(consumed == enc.size());
        REQUIRE(back == p);
    }
}

TEST_CASE("frame_size matches encoded packet sizes") {
    gen::PacketGen g(43);
    for (int i = 0; i < 500; ++i) {
        auto enc = encode_packet(g.packet());
        auto size = frame_size(enc);
        REQUIRE(size.has_value());
        CHECK(*size == enc.size());
        // every strict prefix reports incomplete (or a smaller frame never)
        std::vector<uint8_t> prefix(enc.begin(), enc.begin() + static_cast<long>(enc.size() - 1));
        auto partial = frame_size(prefix);
        if (partial) CHECK(*partial > prefix.size());
    }
    CHECK_FALSE(frame_size({}).has_value());
    std::vector<uint8_t> only_type = {0x30};
    CHECK_FALSE(frame_size(only_type).has_value());
}
