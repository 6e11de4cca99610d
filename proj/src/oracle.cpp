// Independent recomputation of expected routing decisions. Everything here is
// written against the delivery rules directly — its own wildcard matcher, its
// own winding-number containment — and shares no routing code with the broker.

#include <algorithm>
#include <cmath>
#include <map>

#include "mqttg/sim.hpp"
#include "sim_internal.hpp"

namespace mqttg::sim {

namespace {

double segment_distance(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) {
    const double abx = b.latitude - a.latitude;
    const double aby = b.longitude - a.longitude;
    const double apx = p.latitude - a.latitude;
    const double apy = p.longitude - a.longitude;
    const double ab2 = abx * abx + aby * aby;
    double t = 0.0;
    if (ab2 > 0.0) t = std::min(1.0, std::max(0.0, (apx * abx + apy * aby) / ab2));
    const double dx = apx - t * abx;
    const double dy = apy - t * aby;
    return std::sqrt(dx * dx + dy * dy);
}

// twice the signed area of the triangle (a, b, p); > 0 when p lies left of a->b
double is_left(const GeoPoint& a, const GeoPoint& b, const GeoPoint& p) {
    return (b.latitude - a.latitude) * (p.longitude - a.longitude) -
           (p.latitude - a.latitude) * (b.longitude - a.longitude);
}

std::vector<std::string_view> levels_of(std::string_view s) {
    std::vector<std::string_view> out;
    while (true) {
        auto slash = s.find('/');
        if (slash == std::string_view::npos) {
            out.push_back(s);
            return out;
        }
        out.push_back(s.substr(0, slash));
        s.remove_prefix(slash + 1);
    }
}

bool match_levels(std::span<const std::string_view> f, std::span<const std::string_view> t) {
    if (f.empty()) return t.empty();
    if (f.front() == "#") return true;
    if (t.empty()) return false;
    if (f.front() != "+" && f.front() != t.front()) return false;
    return match_levels(f.subspan(1), t.subspan(1));
}

struct OracleClient {
    const ScenarioClient* spec = nullptr;
    const PositionTrack* track = nullptr;
    std::optional<GeoPoint> stored;  // broker-visible last known location
};

bool contains(const Geofence& fence, const std::optional<GeoPoint>& anchor, const GeoPoint& subject,
              bool& decided) {
    decided = false;
    std::vector<GeoPoint> polygon;
    if (fence.mode == FenceMode::Dynamic) {
        if (!anchor) return false;
        polygon.reserve(fence.vertices.size());
        for (const auto& v : fence.vertices) {
            polygon.push_back({anchor->latitude + v.latitude, anchor->longitude + v.longitude});
        }
    } else {
        polygon = fence.vertices;
    }
    decided = true;
    return oracle_point_in_polygon(subject, polygon);
}

// Subscriber fence first, then publisher fence; an unevaluable check follows
// the fail-open/fail-closed policy.
Verdict expected_verdict(const OracleClient& sub, const OracleClient& pub,
                         const std::optional<GeoPoint>& origin, bool fail_closed) {
    if (sub.spec->fence) {
        bool decided = false;
        bool inside = false;
        if (origin) inside = contains(*sub.spec->fence, sub.stored, *origin, decided);
        if (decided ? !inside : fail_closed) return Verdict::SuppressedBySubscriberFence;
    }
    if (pub.spec->fence) {
        bool decided = false;
        bool inside = false;
        if (sub.stored) inside = contains(*pub.spec->fence, pub.stored, *sub.stored, decided);
        if (decided ? !inside : fail_closed) return Verdict::SuppressedByPublisherFence;
    }
    return Verdict::Forwarded;
}

}  // namespace

bool oracle_point_in_polygon(const GeoPoint& p, std::span<const GeoPoint> polygon) {
    const std::size_t n = polygon.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (segment_distance(p, polygon[i], polygon[(i + 1) % n]) <= kEdgeEpsilonDegrees) {
            return true;
        }
    }
    int winding = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const GeoPoint& a = polygon[i];
        const GeoPoint& b = polygon[(i + 1) % n];
        if (a.latitude <= p.latitude) {
            if (b.latitude > p.latitude && is_left(a, b, p) > 0.0) ++winding;
        } else {
            if (b.latitude <= p.latitude && is_left(a, b, p) < 0.0) --winding;
        }
    }
    return winding != 0;
}

bool oracle_topic_matches(std::string_view filter, std::string_view topic) {
    if (filter.empty() || topic.empty()) return false;
    if (topic.front() == '$' && (filter.front() == '+' || filter.front() == '#')) return false;
    auto f = levels_of(filter);
    auto t = levels_of(topic);
    return match_levels(f, t);
}

std::vector<RouteRecord> oracle_expected_deliveries(const Scenario& s) {
    if (auto err = validate_scenario(s)) {
        throw std::invalid_argument("invalid scenario: " + *err);
    }
    auto tracks = resolve_tracks(s);
    auto schedule = build_schedule(s);

    // client_id-ordered, matching the broker's session iteration
    std::map<std::string, OracleClient> clients;
    for (const auto& sc : s.clients) {
        clients[sc.client_id] = OracleClient{&sc, &tracks.at(sc.client_id), std::nullopt};
    }

    std::vector<RouteRecord> log;
    for (const auto& ev : schedule) {
        const auto& sc = s.clients[ev.client];
        OracleClient& self = clients.at(sc.client_id);
        switch (ev.kind) {
            case SimEvent::Kind::Setup:
            case SimEvent::Kind::Ping:
                // CONNECT / SUBSCRIBE / fence-set / PINGREQ all carry the
                // block while sharing, refreshing the stored location
                if (sc.share_location) self.stored = self.track->at(ev.time);
                break;
            case SimEvent::Kind::Publish: {
                std::optional<GeoPoint> origin;
                if (sc.share_location) {
                    origin = self.track->at(ev.time);
                    self.stored = origin;  // location update precedes routing
                } else {
                    origin = self.stored;
                }
                const auto& pub = sc.publishes[ev.publish_index];
                for (auto& [sub_id, sub] : clients) {
                    if (sub_id == sc.client_id) continue;
                    uint8_t best = 0;
                    bool matched = false;
                    for (const auto& entry : sub.spec->subscriptions) {
                        if (oracle_topic_matches(entry.filter, pub.topic)) {
                            matched = true;
                            best = std::max(best, entry.qos);
                        }
                    }
                    if (!matched) continue;
                    Verdict verdict = expected_verdict(sub, self, origin, s.fence_fail_closed);
                    log.push_back({sc.client_id, pub.topic, sub_id, verdict});
                    // a QoS>0 delivery is acknowledged immediately; the ack
                    // from a sharing subscriber carries its current position
                    if (verdict == Verdict::Forwarded && std::min(best, pub.qos) > 0 &&
                        sub.spec->share_location) {
                        sub.stored = sub.track->at(ev.time);
                    }
                }
                break;
            }
        }
    }
    return log;
}

}  // namespace mqttg::sim
