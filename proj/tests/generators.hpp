// Deterministic random packet/polygon generators shared by the property tests
// and the acceptance suite.

#ifndef MQTTG_TEST_GENERATORS_HPP
#define MQTTG_TEST_GENERATORS_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mqttg/geometry.hpp"
#include "mqttg/wire.hpp"

namespace gen {

class PacketGen {
public:
    explicit PacketGen(uint64_t seed) : rng_(seed) {}

    uint64_t pick(uint64_t n) { return rng_() % n; }
    bool coin() { return (rng_() & 1) != 0; }
    double real(double lo, double hi) {
        double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
        return lo + u * (hi - lo);
    }

    std::string word(std::size_t min_len = 1, std::size_t max_len = 10) {
        static const char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789_-";
        std::size_t len = min_len + pick(max_len - min_len + 1);
        std::string out;
        for (std::size_t i = 0; i < len; ++i) out.push_back(alphabet[pick(sizeof(alphabet) - 1)]);
        return out;
    }

    std::string topic(std::size_t max_levels = 4) {
        std::string out = word();
        std::size_t levels = pick(max_levels);
        for (std::size_t i = 0; i < levels; ++i) out += "/" + word();
        return out;
    }

    std::vector<uint8_t> payload(std::size_t max_len = 1024) {
        std::size_t len = pick(max_len + 1);
        std::vector<uint8_t> out(len);
        for (auto& b : out) b = static_cast<uint8_t>(rng_());
        return out;
    }

    uint16_t packet_id() { return static_cast<uint16_t>(1 + pick(65535)); }

    mqttg::GeolocationBlock geo() {
        mqttg::GeolocationBlock b;
        b.version = coin() ? 1 : static_cast<uint8_t>(pick(256));
        b.latitude = real(-90.0, 90.0);
        b.longitude = real(-180.0, 180.0);
        b.elevation = static_cast<float>(real(-500.0, 9000.0));
        return b;
    }

    std::optional<mqttg::GeolocationBlock> maybe_geo() {
        if (coin()) return geo();
        return std::nullopt;
    }

    // Any of the 15 wire types; publish-with-geolocation stands in for type 15.
    mqttg::Packet packet() {
        switch (pick(15)) {
            case 0: {
                mqttg::ConnectPacket p;
                p.clean_session = coin();
                p.keep_alive = static_cast<uint16_t>(pick(600));
                p.client_id = word(1, 20);
                if (coin()) {
                    mqttg::Will w;
                    w.topic = topic();
                    w.message = payload(64);
                    w.qos = static_cast<uint8_t>(pick(3));
                    w.retain = coin();
                    p.will = w;
                }
                if (coin()) {
                    p.username = word();
                    if (coin()) p.password = payload(32);
                }
                p.geolocation = maybe_geo();
                return p;
            }
            case 1:
                return mqttg::ConnackPacket{coin(), static_cast<uint8_t>(pick(6))};
            case 2:
            case 3: {
                mqttg::PublishPacket p;
                p.qos = static_cast<uint8_t>(pick(3));
                p.dup = p.qos > 0 && coin();
                p.retain = coin();
                p.topic = topic();
                if (p.qos > 0) p.packet_id = packet_id();
                p.payload = payload();
                p.geolocation = maybe_geo();
                return p;
            }
            case 4:
                return mqttg::PubackPacket{packet_id(), maybe_geo()};
            case 5:
                return mqttg::PubrecPacket{packet_id(), maybe_geo()};
            case 6:
                return mqttg::PubrelPacket{packet_id(), maybe_geo()};
            case 7:
                return mqttg::PubcompPacket{packet_id(), maybe_geo()};
            case 8: {
                mqttg::SubscribePacket p;
                p.packet_id = packet_id();
                std::size_t n = 1 + pick(4);
                for (std::size_t i = 0; i < n; ++i) {
                    p.entries.push_back({topic(), static_cast<uint8_t>(pick(3))});
                }
                p.geolocation = maybe_geo();
                return p;
            }
            case 9: {
                mqttg::SubackPacket p;
                p.packet_id = packet_id();
                std::size_t n = 1 + pick(4);
                for (std::size_t i = 0; i < n; ++i) {
                    p.return_codes.push_back(coin() ? static_cast<uint8_t>(pick(3)) : 0x80);
                }
                return p;
            }
            case 10: {
                mqttg::UnsubscribePacket p;
                p.packet_id = packet_id();
                std::size_t n = 1 + pick(4);
                for (std::size_t i = 0; i < n; ++i) p.filters.push_back(topic());
                p.geolocation = maybe_geo();
                return p;
            }
            case 11:
                return mqttg::UnsubackPacket{packet_id()};
            case 12:
                return mqttg::PingreqPacket{maybe_geo()};
            case 13:
                return mqttg::PingrespPacket{};
            default:
                return mqttg::DisconnectPacket{maybe_geo()};
        }
    }

    // Star-shaped (hence simple) polygon: sorted random angles, random radii
    // around a random center.
    std::vector<mqttg::GeoPoint> simple_polygon(std::size_t min_v = 3, std::size_t max_v = 12) {
        std::size_t n = min_v + pick(max_v - min_v + 1);
        double cx = real(-60.0, 60.0);
        double cy = real(-120.0, 120.0);
        std::vector<double> angles(n);
        for (auto& a : angles) a = real(0.0, 6.283185307179586);
        std::sort(angles.begin(), angles.end());
        // collapse nearly equal angles to keep edges non-degenerate
        std::vector<mqttg::GeoPoint> out;
        for (std::size_t i = 0; i < n; ++i) {
            if (i > 0 && angles[i] - angles[i - 1] < 1e-3) angles[i] = angles[i - 1] + 1e-3;
            double r = real(0.5, 8.0);
            out.push_back({cx + r * std::cos(angles[i]), cy + r * std::sin(angles[i])});
        }
        return out;
    }

    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
};

}  // namespace gen

#endif
