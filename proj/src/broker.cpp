#include "mqttg/broker.hpp"

#include <algorithm>

#include "mqttg/sysg.hpp"
#include "mqttg/topic.hpp"

namespace mqttg {

namespace {

GeoPoint to_point(const GeolocationBlock& g) { return {g.latitude, g.longitude}; }

// Highest QoS among the session's filters matching the topic, or nullopt.
std::optional<uint8_t> matching_qos(const ClientSession& s, const std::string& topic) {
    std::optional<uint8_t> best;
    for (const auto& sub : s.subscriptions) {
        if (topic_matches(sub.filter, topic)) {
            if (!best || sub.qos > *best) best = sub.qos;
        }
    }
    return best;
}

}  // namespace

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::Forwarded: return "FORWARDED";
        case Verdict::SuppressedBySubscriberFence: return "SUPPRESSED_BY_SUBSCRIBER_FENCE";
        case Verdict::SuppressedByPublisherFence: return "SUPPRESSED_BY_PUBLISHER_FENCE";
    }
    return "?";
}

Broker::Broker(BrokerConfig cfg) : cfg_(cfg) {}

DecodeOptions Broker::decode_options() const {
    DecodeOptions opt;
    opt.strict_3_1_1 = cfg_.strict_3_1_1;
    return opt;
}

const ClientSession* Broker::session(const std::string& client_id) const {
    auto it = sessions_.find(client_id);
    return it == sessions_.end() ? nullptr : &it->second;
}

ClientSession* Broker::session_of(ConnId conn) {
    auto it = conn_client_.find(conn);
    if (it == conn_client_.end()) return nullptr;
    auto sit = sessions_.find(it->second);
    return sit == sessions_.end() ? nullptr : &sit->second;
}

void Broker::update_last_location(ClientSession& s, const GeolocationBlock& g, double now) {
    s.last_location = g;
    s.location_updated_at = std::max(s.location_updated_at, now);
    s.geo_capable = true;
}

std::vector<Effect> Broker::on_packet(ConnId conn, const Packet& p, double now) {
    std::vector<Effect> out;

    if (const auto* c = std::get_if<ConnectPacket>(&p)) {
        if (session_of(conn) != nullptr) {
            // [MQTT-3.1.0-2] a second CONNECT is a protocol violation
            out.push_back(ClosePeer{conn, "second CONNECT on live connection"});
            auto closed = on_socket_closed(conn, now);
            out.insert(out.end(), closed.begin(), closed.end());
            return out;
        }
        return handle_connect(conn, *c, now);
    }

    ClientSession* s = session_of(conn);
    if (s == nullptr) {
        out.push_back(ClosePeer{conn, "first packet was not CONNECT"});
        return out;
    }
    s->last_activity = now;

    if (auto g = packet_geolocation(p)) {
        update_last_location(*s, *g, now);
        if (g->version != 1) {
            out.push_back(Note{"client " + s->client_id + " sent geolocation version " +
                               std::to_string(g->version)});
        }
    }

    if (const auto* pub = std::get_if<PublishPacket>(&p)) {
        handle_publish(*s, *pub, now, out);
    } else if (const auto* sub = std::get_if<SubscribePacket>(&p)) {
        handle_subscribe(*s, *sub, now, out);
    } else if (const auto* unsub = std::get_if<UnsubscribePacket>(&p)) {
        handle_unsubscribe(*s, *unsub, out);
    } else if (std::holds_alternative<PingreqPacket>(p)) {
        out.push_back(SendPacket{conn, PingrespPacket{}});
    } else if (std::holds_alternative<DisconnectPacket>(p)) {
        s->will.reset();  // graceful close never publishes the will
        out.push_back(ClosePeer{conn, "client disconnect"});
        teardown(*s, false, now, out);
    } else if (const auto* ack = std::get_if<PubackPacket>(&p)) {
        auto it = s->inflight_out.find(ack->packet_id);
        if (it != s->inflight_out.end() && it->second.stage == InflightOut::Stage::AwaitPuback) {
            s->inflight_out.erase(it);
        } else {
            out.push_back(Note{"PUBACK for unknown packet id " + std::to_string(ack->packet_id) +
                               " from " + s->client_id});
        }
    } else if (const auto* rec = std::get_if<PubrecPacket>(&p)) {
        auto it = s->inflight_out.find(rec->packet_id);
        if (it != s->inflight_out.end() && it->second.stage == InflightOut::Stage::AwaitPubrec) {
            it->second.stage = InflightOut::Stage::AwaitPubcomp;
            it->second.last_sent = now;
            out.push_back(SendPacket{conn, PubrelPacket{rec->packet_id, std::nullopt}});
        } else if (it != s->inflight_out.end() &&
                   it->second.stage == InflightOut::Stage::AwaitPubcomp) {
            // duplicate PUBREC: answer again, state unchanged
            out.push_back(SendPacket{conn, PubrelPacket{rec->packet_id, std::nullopt}});
        } else {
            out.push_back(Note{"PUBREC for unknown packet id " + std::to_string(rec->packet_id) +
                               " from " + s->client_id});
        }
    } else if (const auto* rel = std::get_if<PubrelPacket>(&p)) {
        // always answered, or a lost PUBCOMP would wedge the sender
        if (s->qos2_inbound.erase(rel->packet_id) == 0) {
            out.push_back(Note{"PUBREL for unknown packet id " + std::to_string(rel->packet_id) +
                               " from " + s->client_id});
        }
        out.push_back(SendPacket{conn, PubcompPacket{rel->packet_id, std::nullopt}});
    } else if (const auto* comp = std::get_if<PubcompPacket>(&p)) {
        auto it = s->inflight_out.find(comp->packet_id);
        if (it != s->inflight_out.end() && it->second.stage == InflightOut::Stage::AwaitPubcomp) {
            s->inflight_out.erase(it);
        } else {
            out.push_back(Note{"PUBCOMP for unknown packet id " + std::to_string(comp->packet_id) +
                               " from " + s->client_id});
        }
    } else {
        // CONNACK/SUBACK/UNSUBACK/PINGRESP are broker-origin only
        out.push_back(ClosePeer{conn, "broker-origin packet from client"});
        teardown(*s, true, now, out);
    }
    return out;
}

std::vector<Effect> Broker::handle_connect(ConnId conn, const ConnectPacket& p, double now) {
    std::vector<Effect> out;

    if (p.protocol_name != "MQTT") {
        out.push_back(ClosePeer{conn, "unknown protocol name"});
        return out;
    }
    if (p.protocol_level != 4) {
        out.push_back(SendPacket{conn, ConnackPacket{false, 1}});
        out.push_back(ClosePeer{conn, "unacceptable protocol level"});
        return out;
    }
    if (p.client_id.empty()) {
        out.push_back(SendPacket{conn, ConnackPacket{false, 2}});
        out.push_back(ClosePeer{conn, "empty client id"});
        return out;
    }

    auto existing = sessions_.find(p.client_id);
    if (existing != sessions_.end() && existing->second.conn) {
        // [MQTT-3.1.4-2] client id takeover: drop the older connection, which
        // counts as an abnormal close (the will fires)
        out.push_back(ClosePeer{*existing->second.conn, "session taken over by new connection"});
        teardown(existing->second, true, now, out);
        existing = sessions_.find(p.client_id);
    }

    bool resumed = existing != sessions_.end() && !p.clean_session;
    if (existing != sessions_.end() && !resumed) sessions_.erase(existing);

    ClientSession& s = sessions_[p.client_id];
    s.client_id = p.client_id;
    s.conn = conn;
    s.clean_session = p.clean_session;
    s.keep_alive = p.keep_alive;
    if (cfg_.max_keep_alive > 0 && (s.keep_alive == 0 || s.keep_alive > cfg_.max_keep_alive)) {
        s.keep_alive = cfg_.max_keep_alive;
    }
    s.will = p.will;
    s.last_activity = now;
    s.geo_capable = false;  // re-established per connection
    conn_client_[conn] = p.client_id;

    if (p.geolocation) {
        update_last_location(s, *p.geolocation, now);
    }

    out.push_back(SendPacket{conn, ConnackPacket{resumed, 0}});

    if (resumed) {
        // [MQTT-4.4.0-1] unfinished QoS flows restart when the session resumes
        for (auto& [pid, inflight] : s.inflight_out) {
            inflight.last_sent = now;
            if (inflight.stage == InflightOut::Stage::AwaitPubcomp) {
                out.push_back(SendPacket{conn, PubrelPacket{pid, std::nullopt}});
            } else {
                PublishPacket dup = inflight.message;
                dup.dup = true;
                out.push_back(SendPacket{conn, dup});
            }
        }
    }
    return out;
}

void Broker::handle_publish(ClientSession& s, const PublishPacket& p, double now,
                            std::vector<Effect>& out) {
    bool route = true;

    if (p.qos == 2) {
        if (s.qos2_inbound.contains(p.packet_id)) {
            route = false;  // redelivery of an already-routed message
        } else {
            s.qos2_inbound.insert(p.packet_id);
        }
    }

    if (route) {
        if (is_sysg_topic(p.topic)) {
            handle_sysg(s, p.topic, p.payload, out);
        } else {
            if (p.retain) {
                if (p.payload.empty()) {
                    retained_.erase(p.topic);
                } else {
                    RetainedMessage r;
                    r.topic = p.topic;
                    r.payload = p.payload;
                    r.qos = p.qos;
                    r.carried_geo = p.geolocation.has_value();
                    r.origin_location = p.geolocation ? p.geolocation : s.last_location;
                    r.publisher_id = s.client_id;
                    retained_[p.topic] = std::move(r);
                }
            }
            emit_deliveries(s, p.topic, route_publish(s, p, now), out);
        }
    }

    if (p.qos == 1) {
        out.push_back(SendPacket{*s.conn, PubackPacket{p.packet_id, std::nullopt}});
    } else if (p.qos == 2) {
        out.push_back(SendPacket{*s.conn, PubrecPacket{p.packet_id, std::nullopt}});
    }
}

std::vector<Delivery> Broker::route_publish(ClientSession& publisher, const PublishPacket& p,
                                            double now) {
    std::vector<Delivery> deliveries;
    const std::optional<GeolocationBlock> origin =
        p.geolocation ? p.geolocation : publisher.last_location;

    for (auto& [id, sub] : sessions_) {
        if (id == publisher.client_id) continue;  // no echo to the publisher
        auto sub_qos = matching_qos(sub, p.topic);
        if (!sub_qos) continue;

        Verdict verdict = fence_verdict(sub, publisher, origin);
        if (verdict != Verdict::Forwarded) {
            deliveries.push_back({id, std::nullopt, verdict});
            continue;
        }

        PublishPacket outp;
        outp.topic = p.topic;
        outp.payload = p.payload;
        outp.qos = std::min(*sub_qos, p.qos);
        outp.retain = false;  // [MQTT-3.3.1-9]
        if (sub.geo_capable && p.geolocation) outp.geolocation = p.geolocation;

        if (outp.qos == 0) {
            if (!sub.conn) continue;  // QoS 0 is not queued for offline sessions
        } else {
            auto pid = allocate_packet_id(sub);
            if (!pid) {
                // id space exhausted; deliver without a delivery guarantee
                outp.qos = 0;
                if (!sub.conn) continue;
            } else {
                outp.packet_id = *pid;
                InflightOut inflight;
                inflight.message = outp;
                inflight.stage = outp.qos == 1 ? InflightOut::Stage::AwaitPuback
                                               : InflightOut::Stage::AwaitPubrec;
                inflight.last_sent = now;
                sub.inflight_out.emplace(*pid, std::move(inflight));
            }
        }
        deliveries.push_back({id, outp, Verdict::Forwarded});
    }
    return deliveries;
}

void Broker::emit_deliveries(const ClientSession& publisher, const std::string& topic,
                             std::vector<Delivery>&& deliveries, std::vector<Effect>& out) {
    for (auto& d : deliveries) {
        out.push_back(RouteRecord{publisher.client_id, topic, d.subscriber_id, d.verdict});
        if (d.outbound) {
            auto it = sessions_.find(d.subscriber_id);
            if (it != sessions_.end() && it->second.conn) {
                out.push_back(SendPacket{*it->second.conn, std::move(*d.outbound)});
            }
        }
    }
}

Verdict Broker::fence_verdict(const ClientSession& subscriber, const ClientSession& publisher,
                              const std::optional<GeolocationBlock>& origin) const {
    bool decided = false;
    if (subscriber.fence) {
        bool inside = fence_contains(*subscriber.fence, subscriber.last_location, origin, decided);
        if (decided && !inside) return Verdict::SuppressedBySubscriberFence;
        if (!decided && cfg_.fence_fail_closed) return Verdict::SuppressedBySubscriberFence;
    }
    if (publisher.fence) {
        bool inside =
            fence_contains(*publisher.fence, publisher.last_location, subscriber.last_location, decided);
        if (decided && !inside) return Verdict::SuppressedByPublisherFence;
        if (!decided && cfg_.fence_fail_closed) return Verdict::SuppressedByPublisherFence;
    }
    return Verdict::Forwarded;
}

bool Broker::fence_contains(const Geofence& fence, const std::optional<GeolocationBlock>& anchor,
                            const std::optional<GeolocationBlock>& subject, bool& decided) const {
    decided = false;
    if (!subject) return false;
    if (fence.mode == FenceMode::Dynamic && !anchor) return false;
    std::optional<GeoPoint> anchor_pt;
    if (anchor) anchor_pt = to_point(*anchor);
    auto polygon = resolve_fence(fence, anchor_pt);
    decided = true;
    return point_in_polygon(to_point(*subject), polygon);
}

void Broker::handle_subscribe(ClientSession& s, const SubscribePacket& p, double now,
                              std::vector<Effect>& out) {
    SubackPacket ack;
    ack.packet_id = p.packet_id;
    std::vector<std::string> accepted;
    for (const auto& e : p.entries) {
        if (!valid_topic_filter(e.filter)) {
            ack.return_codes.push_back(0x80);
            out.push_back(Note{"rejected invalid filter '" + e.filter + "' from " + s.client_id});
            continue;
        }
        auto it = std::find_if(s.subscriptions.begin(), s.subscriptions.end(),
                               [&](const SubscriptionEntry& se) { return se.filter == e.filter; });
        if (it != s.subscriptions.end()) {
            it->qos = e.qos;
        } else {
            s.subscriptions.push_back({e.filter, e.qos});
        }
        ack.return_codes.push_back(e.qos);
        accepted.push_back(e.filter);
    }
    out.push_back(SendPacket{*s.conn, std::move(ack)});

    for (const auto& filter : accepted) {
        replay_retained(s, filter, now, out);
    }
}

void Broker::replay_retained(ClientSession& s, const std::string& new_filter, double now,
                             std::vector<Effect>& out) {
    for (auto& [topic, r] : retained_) {
        if (!topic_matches(new_filter, topic)) continue;

        // publisher-side fence does not apply: only the stored origin is known
        bool suppressed = false;
        if (s.fence) {
            bool decided = false;
            bool inside = fence_contains(*s.fence, s.last_location, r.origin_location, decided);
            suppressed = decided ? !inside : cfg_.fence_fail_closed;
        }
        if (suppressed) {
            out.push_back(RouteRecord{r.publisher_id, topic, s.client_id,
                                      Verdict::SuppressedBySubscriberFence});
            continue;
        }

        auto sub_qos = matching_qos(s, topic);
        PublishPacket outp;
        outp.topic = topic;
        outp.payload = r.payload;
        outp.qos = std::min(sub_qos.value_or(0), r.qos);
        outp.retain = true;  // [MQTT-3.3.1-8]
        if (s.geo_capable && r.carried_geo) outp.geolocation = r.origin_location;
        if (outp.qos > 0) {
            auto pid = allocate_packet_id(s);
            if (!pid) {
                outp.qos = 0;
            } else {
                outp.packet_id = *pid;
                InflightOut inflight;
                inflight.message = outp;
                inflight.stage = outp.qos == 1 ? InflightOut::Stage::AwaitPuback
                                               : InflightOut::Stage::AwaitPubrec;
                inflight.last_sent = now;
                s.inflight_out.emplace(*pid, std::move(inflight));
            }
        }
        out.push_back(RouteRecord{r.publisher_id, topic, s.client_id, Verdict::Forwarded});
        out.push_back(SendPacket{*s.conn, std::move(outp)});
    }
}

void Broker::handle_unsubscribe(ClientSession& s, const UnsubscribePacket& p,
                                std::vector<Effect>& out) {
    for (const auto& f : p.filters) {
        std::erase_if(s.subscriptions,
                      [&](const SubscriptionEntry& se) { return se.filter == f; });
    }
    out.push_back(SendPacket{*s.conn, UnsubackPacket{p.packet_id}});
}

void Broker::handle_sysg(ClientSession& s, const std::string& topic,
                         const std::vector<uint8_t>& payload, std::vector<Effect>& out) {
    s.geo_capable = true;  // any $SYSg traffic marks the client as dialect-aware
    if (topic == kSysgSetTopic) {
        try {
            Geofence fence = decode_fence_payload(payload);
            if (auto issue = fence_issue(fence)) {
                out.push_back(Note{"fence from " + s.client_id + " rejected: " +
                                   to_string(*issue)});
                return;
            }
            s.fence = std::move(fence);
            out.push_back(Note{"fence installed for " + s.client_id});
        } catch (const CodecError& e) {
            out.push_back(Note{"fence from " + s.client_id + " rejected: " + e.what()});
        }
    } else if (topic == kSysgClearTopic) {
        s.fence.reset();  // idempotent
        out.push_back(Note{"fence cleared for " + s.client_id});
    } else {
        out.push_back(Note{"unknown $SYSg topic '" + topic + "' from " + s.client_id});
    }
}

std::optional<uint16_t> Broker::allocate_packet_id(ClientSession& s) const {
    if (s.inflight_out.size() >= 65535) return std::nullopt;
    uint16_t candidate = s.next_packet_id;
    do {
        candidate = static_cast<uint16_t>(candidate % 65535 + 1);  // wraps 1..65535
    } while (s.inflight_out.contains(candidate));
    s.next_packet_id = candidate;
    return candidate;
}

void Broker::teardown(ClientSession& s, bool publish_will, double now, std::vector<Effect>& out) {
    if (publish_will && s.will) {
        Will will = *s.will;
        s.will.reset();
        PublishPacket p;
        p.topic = will.topic;
        p.payload = will.message;
        p.qos = will.qos;
        p.retain = will.retain;
        if (valid_topic_name(p.topic) && !is_sysg_topic(p.topic)) {
            if (p.retain) {
                if (p.payload.empty()) {
                    retained_.erase(p.topic);
                } else {
                    RetainedMessage r;
                    r.topic = p.topic;
                    r.payload = p.payload;
                    r.qos = p.qos;
                    r.origin_location = s.last_location;
                    r.publisher_id = s.client_id;
                    retained_[p.topic] = std::move(r);
                }
            }
            emit_deliveries(s, p.topic, route_publish(s, p, now), out);
        }
    }
    if (s.conn) {
        conn_client_.erase(*s.conn);
        s.conn.reset();
    }
    if (s.clean_session) {
        sessions_.erase(s.client_id);
    }
}

std::vector<Effect> Broker::on_socket_closed(ConnId conn, double now) {
    std::vector<Effect> out;
    ClientSession* s = session_of(conn);
    conn_client_.erase(conn);
    if (s == nullptr) return out;
    // close without DISCONNECT is abnormal: the will fires
    teardown(*s, true, now, out);
    return out;
}

std::vector<Effect> Broker::on_tick(double now) {
    std::vector<Effect> out;
    std::vector<ConnId> expired;

    for (auto& [id, s] : sessions_) {
        if (!s.conn) continue;
        if (s.keep_alive > 0 && now - s.last_activity > 1.5 * s.keep_alive) {
            expired.push_back(*s.conn);
            continue;
        }
        for (auto& [pid, inflight] : s.inflight_out) {
            if (now - inflight.last_sent < cfg_.retransmit_timeout) continue;
            inflight.last_sent = now;
            if (inflight.stage == InflightOut::Stage::AwaitPubcomp) {
                out.push_back(SendPacket{*s.conn, PubrelPacket{pid, std::nullopt}});
            } else {
                PublishPacket dup = inflight.message;
                dup.dup = dup.qos > 0;
                out.push_back(SendPacket{*s.conn, std::move(dup)});
            }
        }
    }

    for (ConnId conn : expired) {
        out.push_back(ClosePeer{conn, "keep-alive timeout"});
        auto closed = on_socket_closed(conn, now);
        out.insert(out.end(), closed.begin(), closed.end());
    }
    return out;
}

}  // namespace mqttg
