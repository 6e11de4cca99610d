// Independent reference implementations used to freeze expected values.
// Everything here is computed from first principles (arithmetic decomposition,
// digit expansion) rather than by sharing code with the library.

#ifndef MQTTG_TEST_ORACLES_HPP
#define MQTTG_TEST_ORACLES_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracles {

// IEEE-754 binary64 little-endian bytes assembled from sign/exponent/mantissa
// computed arithmetically (normals and zero only; enough for test inputs).
inline std::array<uint8_t, 8> f64_le(double v) {
    uint64_t bits = 0;
    if (std::signbit(v)) bits |= 1ULL << 63;
    double a = std::fabs(v);
    if (a != 0.0) {
        int exp = 0;
        double m = std::frexp(a, &exp);  // a = m * 2^exp, m in [0.5, 1)
        uint64_t mantissa = static_cast<uint64_t>((m * 2.0 - 1.0) * 4503599627370496.0);  // 2^52
        uint64_t biased = static_cast<uint64_t>(exp - 1 + 1023);
        bits |= biased << 52;
        bits |= mantissa;
    }
    std::array<uint8_t, 8> out{};
    for (int i = 0; i < 8; ++i) out[i] = static_cast<uint8_t>(bits >> (8 * i));
    return out;
}

inline std::array<uint8_t, 4> f32_le(float v) {
    uint32_t bits = 0;
    if (std::signbit(v)) bits |= 1u << 31;
    double a = std::fabs(static_cast<double>(v));
    if (a != 0.0) {
        int exp = 0;
        double m = std::frexp(a, &exp);
        uint32_t mantissa = static_cast<uint32_t>((m * 2.0 - 1.0) * 8388608.0);  // 2^23
        uint32_t biased = static_cast<uint32_t>(exp - 1 + 127);
        bits |= biased << 23;
        bits |= mantissa;
    }
    std::array<uint8_t, 4> out{};
    for (int i = 0; i < 4; ++i) out[i] = static_cast<uint8_t>(bits >> (8 * i));
    return out;
}

// 21-byte geolocation block from the oracle serializers above.
inline std::vector<uint8_t> geo_block_bytes(uint8_t version, double lat, double lon, float elev) {
    std::vector<uint8_t> out;
    out.push_back(version);
    for (uint8_t b : f64_le(lat)) out.push_back(b);
    for (uint8_t b : f64_le(lon)) out.push_back(b);
    for (uint8_t b : f32_le(elev)) out.push_back(b);
    return out;
}

// Variable byte integer by base-128 digit expansion, continuation bit on all
// but the last digit.
inline std::vector<uint8_t> mbi(uint32_t v) {
    std::vector<uint8_t> digits;
    do {
        digits.push_back(static_cast<uint8_t>(v % 128));
        v /= 128;
    } while (v > 0);
    for (std::size_t i = 0; i + 1 < digits.size(); ++i) digits[i] |= 0x80;
    return digits;
}

}  // namespace oracles

#endif
