#ifndef MQTTG_BROKER_HPP
#define MQTTG_BROKER_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mqttg/geometry.hpp"
#include "mqttg/wire.hpp"

namespace mqttg {

enum class Verdict {
    Forwarded,
    SuppressedBySubscriberFence,
    SuppressedByPublisherFence,
};

const char* to_string(Verdict v);

// One routing decision for one (message, subscriber) pair. The outbound packet
// exists exactly when the verdict is Forwarded.
struct Delivery {
    std::string subscriber_id;
    std::optional<Packet> outbound;
    Verdict verdict = Verdict::Forwarded;
};

// Log record per routing decision, one line in the broker's event log.
struct RouteRecord {
    std::string publisher;
    std::string topic;
    std::string subscriber;
    Verdict verdict = Verdict::Forwarded;
    bool operator==(const RouteRecord&) const = default;
};

struct BrokerConfig {
    bool strict_3_1_1 = false;
    // When a fence check cannot be evaluated because a location is unknown,
    // fail-open passes the message; fail-closed suppresses it.
    bool fence_fail_closed = false;
    double retransmit_timeout = 5.0;  // seconds, QoS 1/2 redelivery
    uint16_t max_keep_alive = 0;      // cap on client keep-alive; 0 = accept as sent
};

using ConnId = uint64_t;

struct SendPacket {
    ConnId conn = 0;
    Packet packet;
};

struct ClosePeer {
    ConnId conn = 0;
    std::string reason;
};

struct Note {
    std::string text;
};

using Effect = std::variant<SendPacket, ClosePeer, RouteRecord, Note>;

struct SubscriptionEntry {
    std::string filter;
    uint8_t qos = 0;
    bool operator==(const SubscriptionEntry&) const = default;
};

struct RetainedMessage {
    std::string topic;
    std::vector<uint8_t> payload;
    uint8_t qos = 0;
    std::optional<GeolocationBlock> origin_location;
    bool carried_geo = false;  // original publish embedded the block itself
    std::string publisher_id;
};

struct InflightOut {
    enum class Stage { AwaitPuback, AwaitPubrec, AwaitPubcomp };
    PublishPacket message;  // as sent; retransmissions set DUP
    Stage stage = Stage::AwaitPuback;
    double last_sent = 0.0;
};

struct ClientSession {
    std::string client_id;
    std::optional<ConnId> conn;  // nullopt while a persistent session is offline
    bool clean_session = true;
    uint16_t keep_alive = 0;
    bool geo_capable = false;
    std::optional<GeolocationBlock> last_location;
    double location_updated_at = 0.0;
    std::optional<Geofence> fence;
    std::vector<SubscriptionEntry> subscriptions;
    std::map<uint16_t, InflightOut> inflight_out;
    std::set<uint16_t> qos2_inbound;  // routed ids awaiting PUBREL
    std::optional<Will> will;
    uint16_t next_packet_id = 0;
    double last_activity = 0.0;
};

// Transport-agnostic broker state machine. All state belongs to one logical
// event loop: transports feed decoded packets, socket closures, and clock
// ticks in, and apply the returned effects. Given a fixed event order the
// outputs are fully deterministic.
class Broker {
public:
    explicit Broker(BrokerConfig cfg = {});

    DecodeOptions decode_options() const;
    const BrokerConfig& config() const { return cfg_; }

    std::vector<Effect> on_packet(ConnId conn, const Packet& p, double now);
    std::vector<Effect> on_socket_closed(ConnId conn, double now);
    std::vector<Effect> on_tick(double now);

    // test/tool introspection
    const ClientSession* session(const std::string& client_id) const;
    const std::map<std::string, RetainedMessage>& retained() const { return retained_; }

private:
    std::vector<Effect> handle_connect(ConnId conn, const ConnectPacket& p, double now);
    void handle_publish(ClientSession& s, const PublishPacket& p, double now,
                        std::vector<Effect>& out);
    void handle_subscribe(ClientSession& s, const SubscribePacket& p, double now,
                          std::vector<Effect>& out);
    void handle_unsubscribe(ClientSession& s, const UnsubscribePacket& p,
                            std::vector<Effect>& out);
    void handle_sysg(ClientSession& s, const std::string& topic,
                     const std::vector<uint8_t>& payload, std::vector<Effect>& out);

    std::vector<Delivery> route_publish(ClientSession& publisher, const PublishPacket& p,
                                        double now);
    void emit_deliveries(const ClientSession& publisher, const std::string& topic,
                         std::vector<Delivery>&& deliveries, std::vector<Effect>& out);
    void replay_retained(ClientSession& s, const std::string& new_filter, double now,
                         std::vector<Effect>& out);

    Verdict fence_verdict(const ClientSession& subscriber, const ClientSession& publisher,
                          const std::optional<GeolocationBlock>& origin) const;
    bool fence_contains(const Geofence& fence, const std::optional<GeolocationBlock>& anchor,
                        const std::optional<GeolocationBlock>& subject, bool& decided) const;

    void update_last_location(ClientSession& s, const GeolocationBlock& g, double now);
    std::optional<uint16_t> allocate_packet_id(ClientSession& s) const;
    void teardown(ClientSession& s, bool publish_will, double now, std::vector<Effect>& out);

    ClientSession* session_of(ConnId conn);

    BrokerConfig cfg_;
    std::map<std::string, ClientSession> sessions_;  // ordered: deterministic routing
    std::map<ConnId, std::string> conn_client_;
    std::map<std::string, RetainedMessage> retained_;
};

}  // namespace mqttg

#endif
