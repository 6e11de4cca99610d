#ifndef MQTTG_CLIENT_HPP
#define MQTTG_CLIENT_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mqttg/geometry.hpp"
#include "mqttg/wire.hpp"

namespace mqttg {

// Source of the client's own position. Consulted once per outbound packet
// while location sharing is on; never consulted while it is off.
class LocationProvider {
public:
    virtual ~LocationProvider() = default;
    virtual std::optional<GeolocationBlock> current() = 0;
};

class FixedLocationProvider : public LocationProvider {
public:
    explicit FixedLocationProvider(GeolocationBlock b) : block_(b) {}
    std::optional<GeolocationBlock> current() override { return block_; }

private:
    GeolocationBlock block_;
};

// Piecewise-linear path over time-stamped waypoints. The owner advances the
// clock; current() samples the path at the latest set time.
class ScriptedPathProvider : public LocationProvider {
public:
    struct Waypoint {
        double time = 0.0;
        GeolocationBlock location;
    };

    explicit ScriptedPathProvider(std::vector<Waypoint> waypoints);
    void set_time(double t) { time_ = t; }
    std::optional<GeolocationBlock> current() override;

private:
    std::vector<Waypoint> waypoints_;
    double time_ = 0.0;
};

class FunctionLocationProvider : public LocationProvider {
public:
    using Fn = std::function<std::optional<GeolocationBlock>()>;
    explicit FunctionLocationProvider(Fn fn) : fn_(std::move(fn)) {}
    std::optional<GeolocationBlock> current() override { return fn_(); }

private:
    Fn fn_;
};

struct ClientConfig {
    std::string client_id;
    std::string broker_host = "127.0.0.1";
    uint16_t broker_port = 1883;
    uint16_t keep_alive = 60;  // seconds, >= 1
    bool clean_session = true;
    bool share_location = false;
    uint8_t default_qos = 0;
    double retransmit_timeout = 5.0;
    double connect_timeout = 10.0;
    std::optional<Will> will;
};

class ClientError : public std::runtime_error {
public:
    enum class Kind { NotConnected, InvalidArgument, Busy };
    ClientError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct ClientEvent {
    enum class Type {
        Connected,
        ConnectRefused,  // code = CONNACK return code
        Disconnected,    // text = reason
        PublishDone,
        SubscribeDone,  // granted = SUBACK return codes
        UnsubscribeDone,
        FenceDone,
        Message,  // topic/payload/qos/retain/dup/geolocation
        Warning,
    };

    Type type;
    uint32_t token = 0;
    bool ok = true;
    uint8_t code = 0;
    std::vector<uint8_t> granted;
    std::string topic;
    std::vector<uint8_t> payload;
    uint8_t qos = 0;
    bool retain = false;
    bool dup = false;
    std::optional<GeolocationBlock> geolocation;
    std::string text;
};

// Sans-IO protocol engine for one connection. Every call returns the packets
// to put on the wire; protocol outcomes surface through take_events(). State
// is serialized by the caller (one engine per connection, calls in order).
class ClientEngine {
public:
    explicit ClientEngine(ClientConfig cfg, LocationProvider* location = nullptr);

    // CONNECT, with geolocation when sharing and the provider has a fix
    std::vector<Packet> begin(double now);
    std::vector<Packet> on_packet(const Packet& p, double now);
    // keepalive, CONNACK/PINGRESP deadlines, QoS retransmissions
    std::vector<Packet> on_tick(double now);
    // location heartbeat regardless of idle time
    std::vector<Packet> ping(double now);
    std::vector<Packet> disconnect(double now);

    uint32_t publish(const std::string& topic, std::vector<uint8_t> payload, uint8_t qos,
                     bool retain, double now, std::vector<Packet>& out);
    uint32_t subscribe(const std::vector<Subscription>& entries, double now,
                       std::vector<Packet>& out);
    uint32_t unsubscribe(const std::vector<std::string>& filters, double now,
                         std::vector<Packet>& out);
    uint32_t set_fence(const Geofence& fence, double now, std::vector<Packet>& out);
    uint32_t clear_fence(double now, std::vector<Packet>& out);

    std::vector<ClientEvent> take_events();

    bool connected() const { return state_ == State::Connected; }
    bool dead() const { return state_ == State::Dead; }
    // no unacknowledged operation in flight
    bool idle() const {
        return pending_publish_.empty() && pending_subscribe_.empty() &&
               pending_unsubscribe_.empty();
    }
    const ClientConfig& config() const { return cfg_; }

private:
    enum class State { Idle, Connecting, Connected, Dead };

    struct PendingPublish {
        enum class Stage { AwaitPuback, AwaitPubrec, AwaitPubcomp };
        uint32_t token = 0;
        PublishPacket packet;
        Stage stage = Stage::AwaitPuback;
        double last_sent = 0.0;
        bool fence_op = false;  // completion reported as FenceDone
    };

    std::optional<GeolocationBlock> sample_location();
    void attach_geo(Packet& p);
    Packet make_publish(const std::string& topic, std::vector<uint8_t> payload, uint8_t qos,
                        bool retain, uint16_t packet_id);
    uint16_t allocate_packet_id();
    uint32_t queue_publish(const std::string& topic, std::vector<uint8_t> payload, uint8_t qos,
                           bool retain, bool fence_op, double now, std::vector<Packet>& out);
    void emit(ClientEvent ev) { events_.push_back(std::move(ev)); }
    void warn(std::string text);
    void die(const std::string& reason);
    void require_connected() const;
    std::vector<Packet> stamp(std::vector<Packet> pkts, double now);

    ClientConfig cfg_;
    LocationProvider* location_ = nullptr;
    State state_ = State::Idle;
    uint32_t next_token_ = 1;
    uint16_t next_packet_id_ = 0;
    double connect_sent_ = 0.0;
    double last_send_ = 0.0;
    std::optional<double> ping_sent_;
    std::map<uint16_t, PendingPublish> pending_publish_;
    std::map<uint16_t, std::pair<uint32_t, std::size_t>> pending_subscribe_;  // pid -> (token, count)
    std::map<uint16_t, uint32_t> pending_unsubscribe_;
    std::set<uint16_t> qos2_inbound_;  // delivered ids awaiting PUBREL
    std::vector<ClientEvent> events_;
};

}  // namespace mqttg

#endif
