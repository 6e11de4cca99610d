#include <algorithm>
#include <memory>
#include <sstream>

#include "mqttg/client.hpp"
#include "mqttg/sim.hpp"
#include "mqttg/topic.hpp"
#include "sim_internal.hpp"

namespace mqttg::sim {

namespace {

constexpr double kTickInterval = 0.5;
// engines never self-ping in the sim; the schedule drives location heartbeats
constexpr uint16_t kSimKeepAlive = 65535;

bool droppable(const Packet& p) {
    return std::holds_alternative<PublishPacket>(p) || std::holds_alternative<PubackPacket>(p) ||
           std::holds_alternative<PubrecPacket>(p) || std::holds_alternative<PubrelPacket>(p) ||
           std::holds_alternative<PubcompPacket>(p);
}

class Runner {
public:
    explicit Runner(const Scenario& s)
        : scenario_(s),
          tracks_(resolve_tracks(s)),
          broker_(BrokerConfig{
              .strict_3_1_1 = false,
              .fence_fail_closed = s.fence_fail_closed,
              .retransmit_timeout = s.retransmit_timeout,
              .max_keep_alive = 0,
          }) {
        drop_state_ = s.seed ^ 0xD50BBED50BBEULL;
        splitmix64(drop_state_);
        for (std::size_t i = 0; i < s.clients.size(); ++i) {
            const auto& sc = s.clients[i];
            providers_.push_back(std::make_unique<FunctionLocationProvider>(
                [this, i]() -> std::optional<GeolocationBlock> {
                    const auto& sc2 = scenario_.clients[i];
                    GeoPoint p = tracks_.at(sc2.client_id).at(now_);
                    GeolocationBlock b;
                    b.latitude = p.latitude;
                    b.longitude = p.longitude;
                    b.elevation = tracks_.at(sc2.client_id).elevation();
                    return b;
                }));
            ClientConfig cfg;
            cfg.client_id = sc.client_id;
            cfg.keep_alive = kSimKeepAlive;
            cfg.clean_session = true;
            cfg.share_location = sc.share_location;
            cfg.retransmit_timeout = s.retransmit_timeout;
            cfg.connect_timeout = 1e12;
            engines_.push_back(std::make_unique<ClientEngine>(cfg, providers_.back().get()));
        }
    }

    RunResult run() {
        auto schedule = build_schedule(scenario_);
        double next_tick = kTickInterval;
        for (const auto& ev : schedule) {
            while (next_tick < ev.time) {
                tick(next_tick);
                next_tick += kTickInterval;
            }
            now_ = ev.time;
            dispatch(ev);
        }
        // drain: let retransmissions finish after the schedule
        double t = next_tick;
        double end = scenario_.duration + scenario_.drain_time;
        while (t <= end) {
            tick(t);
            if (all_idle()) break;
            t += kTickInterval;
        }
        return std::move(result_);
    }

private:
    void dispatch(const SimEvent& ev) {
        auto& engine = *engines_[ev.client];
        const auto& sc = scenario_.clients[ev.client];
        switch (ev.kind) {
            case SimEvent::Kind::Setup: {
                for (auto& p : engine.begin(now_)) to_broker(ev.client, p);
                if (!sc.subscriptions.empty()) {
                    std::vector<Packet> out;
                    engine.subscribe(sc.subscriptions, now_, out);
                    for (auto& p : out) to_broker(ev.client, p);
                }
                if (sc.fence) {
                    std::vector<Packet> out;
                    engine.set_fence(*sc.fence, now_, out);
                    for (auto& p : out) to_broker(ev.client, p);
                }
                break;
            }
            case SimEvent::Kind::Ping: {
                for (auto& p : engine.ping(now_)) to_broker(ev.client, p);
                break;
            }
            case SimEvent::Kind::Publish: {
                const auto& pub = sc.publishes[ev.publish_index];
                std::vector<Packet> out;
                engine.publish(pub.topic, pub.payload, pub.qos, pub.retain, now_, out);
                result_.metrics.published++;
                current_publish_ = &pub;
                current_publisher_ = ev.client;
                for (auto& p : out) to_broker(ev.client, p);
                current_publish_ = nullptr;
                break;
            }
        }
        collect_events(ev.client);
    }

    void tick(double t) {
        now_ = t;
        for (std::size_t i = 0; i < engines_.size(); ++i) {
            for (auto& p : engines_[i]->on_tick(t)) to_broker(i, p);
            collect_events(i);
        }
        apply_effects(broker_.on_tick(t));
    }

    bool all_idle() const {
        for (std::size_t i = 0; i < engines_.size(); ++i) {
            if (!engines_[i]->idle()) return false;
            const auto* s = broker_.session(scenario_.clients[i].client_id);
            if (s != nullptr && !s->inflight_out.empty()) return false;
        }
        return true;
    }

    void observe(const Packet& p, const std::string& from, const std::string& to, bool dropped) {
        result_.metrics.bytes_on_wire += encode_packet(p).size();
        if (const auto* pub = std::get_if<PublishPacket>(&p)) {
            WirePublish w;
            w.from = from;
            w.to = to;
            w.packet_id = pub->packet_id;
            w.dup = pub->dup;
            w.qos = pub->qos;
            w.payload = pub->payload;
            w.dropped = dropped;
            result_.wire_publishes.push_back(std::move(w));
        }
    }

    bool roll_drop(const Packet& p) {
        if (scenario_.drop_probability <= 0.0 || !droppable(p)) return false;
        return uniform01(drop_state_) < scenario_.drop_probability;
    }

    void to_broker(std::size_t client, const Packet& p) {
        bool dropped = roll_drop(p);
        observe(p, scenario_.clients[client].client_id, "broker", dropped);
        if (dropped) return;
        apply_effects(broker_.on_packet(static_cast<ConnId>(client) + 1, p, now_));
    }

    void to_client(std::size_t client, const Packet& p) {
        bool dropped = roll_drop(p);
        observe(p, "broker", scenario_.clients[client].client_id, dropped);
        if (dropped) return;
        auto replies = engines_[client]->on_packet(p, now_);
        collect_events(client);
        for (auto& r : replies) to_broker(client, r);
    }

    void apply_effects(std::vector<Effect> effects) {
        for (auto& e : effects) {
            if (auto* send = std::get_if<SendPacket>(&e)) {
                to_client(static_cast<std::size_t>(send->conn) - 1, send->packet);
            } else if (auto* rec = std::get_if<RouteRecord>(&e)) {
                tally(*rec);
                result_.delivery_log.push_back(std::move(*rec));
            } else if (auto* note = std::get_if<Note>(&e)) {
                result_.notes.push_back(std::move(note->text));
            } else if (auto* close = std::get_if<ClosePeer>(&e)) {
                result_.notes.push_back("connection " + std::to_string(close->conn) +
                                        " closed: " + close->reason);
            }
        }
    }

    void tally(const RouteRecord& rec) {
        switch (rec.verdict) {
            case Verdict::Forwarded:
                result_.metrics.forwarded++;
                break;
            case Verdict::SuppressedBySubscriberFence:
                result_.metrics.suppressed_by_subscriber_fence++;
                break;
            case Verdict::SuppressedByPublisherFence:
                result_.metrics.suppressed_by_publisher_fence++;
                break;
        }
        if (rec.verdict != Verdict::Forwarded && current_publish_ != nullptr) {
            result_.metrics.bytes_saved += suppressed_size(rec);
        }
    }

    // Encoded size the delivery would have had. Mirrors the forwarding rules:
    // QoS = min(subscription, publish), geolocation only toward sharing
    // subscribers when the publish carried one.
    uint64_t suppressed_size(const RouteRecord& rec) const {
        const auto& pub = *current_publish_;
        const ScenarioClient* sub = nullptr;
        for (const auto& c : scenario_.clients) {
            if (c.client_id == rec.subscriber) sub = &c;
        }
        if (sub == nullptr) return 0;
        uint8_t best = 0;
        for (const auto& entry : sub->subscriptions) {
            if (topic_matches(entry.filter, pub.topic) && entry.qos > best) best = entry.qos;
        }
        PublishPacket would;
        would.topic = pub.topic;
        would.payload = pub.payload;
        would.qos = std::min(best, pub.qos);
        would.packet_id = would.qos > 0 ? 1 : 0;
        bool publisher_shares = scenario_.clients[current_publisher_].share_location;
        if (sub->share_location && publisher_shares) {
            GeolocationBlock b;
            const auto& track = tracks_.at(scenario_.clients[current_publisher_].client_id);
            GeoPoint pt = track.at(now_);
            b.latitude = pt.latitude;
            b.longitude = pt.longitude;
            b.elevation = track.elevation();
            would.geolocation = b;
        }
        return encode_packet(would).size();
    }

    void collect_events(std::size_t client) {
        for (auto& ev : engines_[client]->take_events()) {
            if (ev.type == ClientEvent::Type::Message) {
                result_.app_messages.push_back({scenario_.clients[client].client_id, ev.topic,
                                                ev.payload, ev.qos});
            } else if (ev.type == ClientEvent::Type::Warning) {
                result_.notes.push_back(scenario_.clients[client].client_id + ": " + ev.text);
            } else if (!ev.ok) {
                result_.notes.push_back(scenario_.clients[client].client_id +
                                        ": operation failed: " + ev.text);
            }
        }
    }

    const Scenario& scenario_;
    std::map<std::string, PositionTrack> tracks_;
    Broker broker_;
    std::vector<std::unique_ptr<FunctionLocationProvider>> providers_;
    std::vector<std::unique_ptr<ClientEngine>> engines_;
    double now_ = 0.0;
    uint64_t drop_state_ = 0;
    const ScheduledPublish* current_publish_ = nullptr;
    std::size_t current_publisher_ = 0;
    RunResult result_;
};

}  // namespace

RunResult run_scenario(const Scenario& s) {
    if (auto err = validate_scenario(s)) {
        throw std::invalid_argument("invalid scenario: " + *err);
    }
    Runner runner(s);
    return runner.run();
}

std::string report_text(const Metrics& m) {
    std::ostringstream os;
    double ratio = m.bytes_on_wire > 0
                       ? static_cast<double>(m.bytes_saved) / static_cast<double>(m.bytes_on_wire)
                       : 0.0;
    os << "published                       " << m.published << "\n"
       << "forwarded                       " << m.forwarded << "\n"
       << "suppressed_by_subscriber_fence  " << m.suppressed_by_subscriber_fence << "\n"
       << "suppressed_by_publisher_fence   " << m.suppressed_by_publisher_fence << "\n"
       << "bytes_on_wire                   " << m.bytes_on_wire << "\n"
       << "bytes_saved                     " << m.bytes_saved << "\n"
       << "savings_ratio                   " << ratio << "\n";
    return os.str();
}

std::string report_csv(const Metrics& m) {
    std::ostringstream os;
    double ratio = m.bytes_on_wire > 0
                       ? static_cast<double>(m.bytes_saved) / static_cast<double>(m.bytes_on_wire)
                       : 0.0;
    os << "published,forwarded,suppressed_by_subscriber_fence,suppressed_by_publisher_fence,"
          "bytes_on_wire,bytes_saved,savings_ratio\n";
    os << m.published << ',' << m.forwarded << ',' << m.suppressed_by_subscriber_fence << ','
       << m.suppressed_by_publisher_fence << ',' << m.bytes_on_wire << ',' << m.bytes_saved << ','
       << ratio << "\n";
    return os.str();
}

}  // namespace mqttg::sim
