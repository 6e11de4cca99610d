#ifndef MQTTG_SIM_HPP
#define MQTTG_SIM_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mqttg/broker.hpp"
#include "mqttg/geometry.hpp"
#include "mqttg/wire.hpp"

namespace mqttg::sim {

// ---- scenario description ---------------------------------------------------

struct Movement {
    enum class Kind { Fixed, Waypoints, RandomWalk };
    Kind kind = Kind::Fixed;
    GeoPoint start;                                       // Fixed / RandomWalk
    float elevation = 0.0f;
    std::vector<std::pair<double, GeoPoint>> waypoints;   // (time, position), Waypoints
    double step_degrees = 0.0;                            // RandomWalk, per second
};

struct ScheduledPublish {
    double time = 0.0;
    std::string topic;
    std::vector<uint8_t> payload;
    uint8_t qos = 0;
    bool retain = false;
};

struct ScenarioClient {
    std::string client_id;
    Movement movement;
    bool share_location = true;
    std::vector<Subscription> subscriptions;
    std::optional<Geofence> fence;
    std::vector<ScheduledPublish> publishes;
};

// Deterministic by construction: the seed fixes every random-walk step and
// every transport drop decision, so identical scenarios give identical logs.
struct Scenario {
    uint64_t seed = 0;
    double duration = 10.0;
    double drop_probability = 0.0;  // PUBLISH/ack legs only; handshakes stay reliable
    double retransmit_timeout = 5.0;
    double drain_time = 30.0;       // extra simulated time for QoS flows to settle
    bool fence_fail_closed = false;
    std::vector<ScenarioClient> clients;
};

// Human-readable reason, or nullopt when the scenario is runnable.
std::optional<std::string> validate_scenario(const Scenario& s);

// Text format: global `key = value` lines plus one `client <id> { ... }` block
// per client. See the project README for the key reference.
Scenario parse_scenario(std::istream& in);
Scenario parse_scenario_file(const std::string& path);

// ---- movement resolution ------------------------------------------------------

// Position over time for one client, fully expanded from the scenario seed so
// that the runner and the oracle sample identical coordinates.
class PositionTrack {
public:
    static PositionTrack resolve(const Movement& m, uint64_t seed, double duration);
    GeoPoint at(double t) const;
    float elevation() const { return elevation_; }

private:
    Movement::Kind kind_ = Movement::Kind::Fixed;
    GeoPoint start_;
    float elevation_ = 0.0f;
    std::vector<std::pair<double, GeoPoint>> waypoints_;  // Waypoints
    std::vector<GeoPoint> steps_;                         // RandomWalk, index = whole second
};

std::map<std::string, PositionTrack> resolve_tracks(const Scenario& s);

// ---- results ------------------------------------------------------------------

struct Metrics {
    uint64_t published = 0;
    uint64_t forwarded = 0;
    uint64_t suppressed_by_subscriber_fence = 0;
    uint64_t suppressed_by_publisher_fence = 0;
    uint64_t bytes_on_wire = 0;
    uint64_t bytes_saved = 0;  // encoded size of every suppressed delivery
};

// One application-level message receipt at a subscriber.
struct AppMessage {
    std::string subscriber;
    std::string topic;
    std::vector<uint8_t> payload;
    uint8_t qos = 0;
    bool operator==(const AppMessage&) const = default;
};

// One PUBLISH observed on the simulated transport, dropped or not.
struct WirePublish {
    std::string from;
    std::string to;
    uint16_t packet_id = 0;
    bool dup = false;
    uint8_t qos = 0;
    std::vector<uint8_t> payload;
    bool dropped = false;
};

struct RunResult {
    Metrics metrics;
    std::vector<RouteRecord> delivery_log;
    std::vector<AppMessage> app_messages;
    std::vector<WirePublish> wire_publishes;
    std::vector<std::string> notes;
};

// Drives one broker instance and one client engine per scenario client over an
// in-memory transport with a simulated clock.
RunResult run_scenario(const Scenario& s);

// Expected delivery log recomputed from first principles: movement replay,
// its own wildcard matcher, and winding-number containment. Shares no routing
// code with the broker.
std::vector<RouteRecord> oracle_expected_deliveries(const Scenario& s);

// Winding-number containment with the same on-edge-inside contract as the
// production ray cast. Exposed as the independent geometry oracle.
bool oracle_point_in_polygon(const GeoPoint& p, std::span<const GeoPoint> polygon);

// Oracle-side wildcard matcher, written against the matching rules rather than
// sharing topic.cpp.
bool oracle_topic_matches(std::string_view filter, std::string_view topic);

std::string report_text(const Metrics& m);
std::string report_csv(const Metrics& m);  // header + one data row

}  // namespace mqttg::sim

#endif
