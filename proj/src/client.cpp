#include "mqttg/client.hpp"

#include <algorithm>

#include "mqttg/sysg.hpp"
#include "mqttg/topic.hpp"

namespace mqttg {

ScriptedPathProvider::ScriptedPathProvider(std::vector<Waypoint> waypoints)
    : waypoints_(std::move(waypoints)) {
    std::sort(waypoints_.begin(), waypoints_.end(),
              [](const Waypoint& a, const Waypoint& b) { return a.time < b.time; });
}

std::optional<GeolocationBlock> ScriptedPathProvider::current() {
    if (waypoints_.empty()) return std::nullopt;
    if (time_ <= waypoints_.front().time) return waypoints_.front().location;
    if (time_ >= waypoints_.back().time) return waypoints_.back().location;
    for (std::size_t i = 1; i < waypoints_.size(); ++i) {
        if (time_ > waypoints_[i].time) continue;
        const auto& a = waypoints_[i - 1];
        const auto& b = waypoints_[i];
        double span = b.time - a.time;
        double t = span > 0.0 ? (time_ - a.time) / span : 0.0;
        GeolocationBlock out = a.location;
        out.latitude += t * (b.location.latitude - a.location.latitude);
        out.longitude += t * (b.location.longitude - a.location.longitude);
        out.elevation += static_cast<float>(t * (b.location.elevation - a.location.elevation));
        return out;
    }
    return waypoints_.back().location;
}

ClientEngine::ClientEngine(ClientConfig cfg, LocationProvider* location)
    : cfg_(std::move(cfg)), location_(location) {
    if (cfg_.client_id.empty()) {
        throw ClientError(ClientError::Kind::InvalidArgument, "client id must be nonempty");
    }
    if (cfg_.keep_alive < 1) {
        throw ClientError(ClientError::Kind::InvalidArgument, "keep alive must be >= 1");
    }
}

std::optional<GeolocationBlock> ClientEngine::sample_location() {
    if (!cfg_.share_location || location_ == nullptr) return std::nullopt;
    return location_->current();
}

void ClientEngine::attach_geo(Packet& p) {
    auto geo = sample_location();
    if (!geo) return;
    std::visit(
        [&](auto& v) {
            if constexpr (requires { v.geolocation; }) v.geolocation = geo;
        },
        p);
}

std::vector<Packet> ClientEngine::stamp(std::vector<Packet> pkts, double now) {
    if (!pkts.empty()) last_send_ = now;
    return pkts;
}

std::vector<Packet> ClientEngine::begin(double now) {
    ConnectPacket c;
    c.client_id = cfg_.client_id;
    c.clean_session = cfg_.clean_session;
    c.keep_alive = cfg_.keep_alive;
    c.will = cfg_.will;
    Packet p = c;
    attach_geo(p);
    state_ = State::Connecting;
    connect_sent_ = now;
    return stamp({std::move(p)}, now);
}

uint16_t ClientEngine::allocate_packet_id() {
    auto taken = [&](uint16_t id) {
        return pending_publish_.contains(id) || pending_subscribe_.contains(id) ||
               pending_unsubscribe_.contains(id);
    };
    if (pending_publish_.size() + pending_subscribe_.size() + pending_unsubscribe_.size() >= 65535) {
        throw ClientError(ClientError::Kind::Busy, "packet id space exhausted");
    }
    uint16_t candidate = next_packet_id_;
    do {
        candidate = static_cast<uint16_t>(candidate % 65535 + 1);
    } while (taken(candidate));
    next_packet_id_ = candidate;
    return candidate;
}

void ClientEngine::require_connected() const {
    if (state_ != State::Connected) {
        throw ClientError(ClientError::Kind::NotConnected, "not connected");
    }
}

Packet ClientEngine::make_publish(const std::string& topic, std::vector<uint8_t> payload,
                                  uint8_t qos, bool retain, uint16_t packet_id) {
    PublishPacket p;
    p.topic = topic;
    p.payload = std::move(payload);
    p.qos = qos;
    p.retain = retain;
    p.packet_id = packet_id;
    Packet out = std::move(p);
    attach_geo(out);
    return out;
}

uint32_t ClientEngine::queue_publish(const std::string& topic, std::vector<uint8_t> payload,
                                     uint8_t qos, bool retain, bool fence_op, double now,
                                     std::vector<Packet>& out) {
    require_connected();
    if (qos > 2) throw ClientError(ClientError::Kind::InvalidArgument, "QoS out of range");
    uint32_t token = next_token_++;
    uint16_t pid = qos > 0 ? allocate_packet_id() : 0;
    Packet p = make_publish(topic, std::move(payload), qos, retain, pid);
    if (qos > 0) {
        PendingPublish pending;
        pending.token = token;
        pending.packet = std::get<PublishPacket>(p);
        pending.stage = qos == 1 ? PendingPublish::Stage::AwaitPuback
                                 : PendingPublish::Stage::AwaitPubrec;
        pending.last_sent = now;
        pending.fence_op = fence_op;
        pending_publish_.emplace(pid, std::move(pending));
    }
    out.push_back(std::move(p));
    last_send_ = now;
    if (qos == 0) {
        ClientEvent ev;
        ev.type = fence_op ? ClientEvent::Type::FenceDone : ClientEvent::Type::PublishDone;
        ev.token = token;
        emit(std::move(ev));
    }
    return token;
}

uint32_t ClientEngine::publish(const std::string& topic, std::vector<uint8_t> payload, uint8_t qos,
                               bool retain, double now, std::vector<Packet>& out) {
    if (!valid_topic_name(topic)) {
        throw ClientError(ClientError::Kind::InvalidArgument, "invalid publish topic");
    }
    return queue_publish(topic, std::move(payload), qos, retain, false, now, out);
}

uint32_t ClientEngine::subscribe(const std::vector<Subscription>& entries, double now,
                                 std::vector<Packet>& out) {
    require_connected();
    if (entries.empty()) {
        throw ClientError(ClientError::Kind::InvalidArgument, "no filters given");
    }
    for (const auto& e : entries) {
        if (!valid_topic_filter(e.filter)) {
            throw ClientError(ClientError::Kind::InvalidArgument,
                              "invalid topic filter '" + e.filter + "'");
        }
        if (e.qos > 2) throw ClientError(ClientError::Kind::InvalidArgument, "QoS out of range");
    }
    uint32_t token = next_token_++;
    uint16_t pid = allocate_packet_id();
    SubscribePacket p;
    p.packet_id = pid;
    p.entries = entries;
    Packet pkt = std::move(p);
    attach_geo(pkt);
    pending_subscribe_.emplace(pid, std::make_pair(token, entries.size()));
    out.push_back(std::move(pkt));
    last_send_ = now;
    return token;
}

uint32_t ClientEngine::unsubscribe(const std::vector<std::string>& filters, double now,
                                   std::vector<Packet>& out) {
    require_connected();
    if (filters.empty()) {
        throw ClientError(ClientError::Kind::InvalidArgument, "no filters given");
    }
    for (const auto& f : filters) {
        if (!valid_topic_filter(f)) {
            throw ClientError(ClientError::Kind::InvalidArgument, "invalid topic filter '" + f + "'");
        }
    }
    uint32_t token = next_token_++;
    uint16_t pid = allocate_packet_id();
    UnsubscribePacket p;
    p.packet_id = pid;
    p.filters = filters;
    Packet pkt = std::move(p);
    attach_geo(pkt);
    pending_unsubscribe_.emplace(pid, token);
    out.push_back(std::move(pkt));
    last_send_ = now;
    return token;
}

uint32_t ClientEngine::set_fence(const Geofence& fence, double now, std::vector<Packet>& out) {
    if (auto issue = fence_issue(fence)) {
        throw ClientError(ClientError::Kind::InvalidArgument,
                          std::string("invalid fence: ") + to_string(*issue));
    }
    return queue_publish(std::string(kSysgSetTopic), encode_fence_payload(fence), 1, false, true,
                         now, out);
}

uint32_t ClientEngine::clear_fence(double now, std::vector<Packet>& out) {
    return queue_publish(std::string(kSysgClearTopic), {}, 1, false, true, now, out);
}

std::vector<Packet> ClientEngine::ping(double now) {
    require_connected();
    PingreqPacket p;
    Packet pkt = p;
    attach_geo(pkt);
    if (!ping_sent_) ping_sent_ = now;
    return stamp({std::move(pkt)}, now);
}

std::vector<Packet> ClientEngine::disconnect(double now) {
    if (state_ != State::Connected) {
        state_ = State::Dead;
        return {};
    }
    DisconnectPacket p;
    Packet pkt = p;
    attach_geo(pkt);
    state_ = State::Dead;
    ClientEvent ev;
    ev.type = ClientEvent::Type::Disconnected;
    ev.text = "client-initiated disconnect";
    emit(std::move(ev));
    return stamp({std::move(pkt)}, now);
}

void ClientEngine::warn(std::string text) {
    ClientEvent ev;
    ev.type = ClientEvent::Type::Warning;
    ev.text = std::move(text);
    emit(std::move(ev));
}

void ClientEngine::die(const std::string& reason) {
    state_ = State::Dead;
    for (auto& [pid, pending] : pending_publish_) {
        ClientEvent ev;
        ev.type = pending.fence_op ? ClientEvent::Type::FenceDone : ClientEvent::Type::PublishDone;
        ev.token = pending.token;
        ev.ok = false;
        ev.text = "aborted: " + reason;
        emit(std::move(ev));
    }
    pending_publish_.clear();
    for (auto& [pid, entry] : pending_subscribe_) {
        ClientEvent ev;
        ev.type = ClientEvent::Type::SubscribeDone;
        ev.token = entry.first;
        ev.ok = false;
        ev.text = "aborted: " + reason;
        emit(std::move(ev));
    }
    pending_subscribe_.clear();
    for (auto& [pid, token] : pending_unsubscribe_) {
        ClientEvent ev;
        ev.type = ClientEvent::Type::UnsubscribeDone;
        ev.token = token;
        ev.ok = false;
        ev.text = "aborted: " + reason;
        emit(std::move(ev));
    }
    pending_unsubscribe_.clear();
    ClientEvent ev;
    ev.type = ClientEvent::Type::Disconnected;
    ev.text = reason;
    emit(std::move(ev));
}

std::vector<Packet> ClientEngine::on_packet(const Packet& p, double now) {
    std::vector<Packet> out;
    if (state_ == State::Dead || state_ == State::Idle) return out;

    if (const auto* ack = std::get_if<ConnackPacket>(&p)) {
        if (state_ != State::Connecting) {
            warn("unexpected CONNACK");
            return out;
        }
        if (ack->return_code == 0) {
            state_ = State::Connected;
            ClientEvent ev;
            ev.type = ClientEvent::Type::Connected;
            ev.code = 0;
            emit(std::move(ev));
        } else {
            ClientEvent ev;
            ev.type = ClientEvent::Type::ConnectRefused;
            ev.code = ack->return_code;
            ev.ok = false;
            emit(std::move(ev));
            state_ = State::Dead;
        }
        return out;
    }

    if (const auto* pub = std::get_if<PublishPacket>(&p)) {
        bool deliver = true;
        if (pub->qos == 2) {
            if (qos2_inbound_.contains(pub->packet_id)) {
                deliver = false;
            } else {
                qos2_inbound_.insert(pub->packet_id);
            }
        }
        if (deliver) {
            ClientEvent ev;
            ev.type = ClientEvent::Type::Message;
            ev.topic = pub->topic;
            ev.payload = pub->payload;
            ev.qos = pub->qos;
            ev.retain = pub->retain;
            ev.dup = pub->dup;
            ev.geolocation = pub->geolocation;
            emit(std::move(ev));
        }
        if (pub->qos == 1) {
            Packet ack = PubackPacket{pub->packet_id, std::nullopt};
            attach_geo(ack);
            out.push_back(std::move(ack));
        } else if (pub->qos == 2) {
            Packet rec = PubrecPacket{pub->packet_id, std::nullopt};
            attach_geo(rec);
            out.push_back(std::move(rec));
        }
        return stamp(std::move(out), now);
    }

    if (const auto* ack = std::get_if<PubackPacket>(&p)) {
        auto it = pending_publish_.find(ack->packet_id);
        if (it != pending_publish_.end() && it->second.stage == PendingPublish::Stage::AwaitPuback) {
            ClientEvent ev;
            ev.type = it->second.fence_op ? ClientEvent::Type::FenceDone
                                          : ClientEvent::Type::PublishDone;
            ev.token = it->second.token;
            emit(std::move(ev));
            pending_publish_.erase(it);
        } else {
            warn("PUBACK for unknown packet id " + std::to_string(ack->packet_id));
        }
        return out;
    }

    if (const auto* rec = std::get_if<PubrecPacket>(&p)) {
        auto it = pending_publish_.find(rec->packet_id);
        if (it != pending_publish_.end() &&
            (it->second.stage == PendingPublish::Stage::AwaitPubrec ||
             it->second.stage == PendingPublish::Stage::AwaitPubcomp)) {
            it->second.stage = PendingPublish::Stage::AwaitPubcomp;
            it->second.last_sent = now;
            Packet rel = PubrelPacket{rec->packet_id, std::nullopt};
            attach_geo(rel);
            out.push_back(std::move(rel));
        } else {
            warn("PUBREC for unknown packet id " + std::to_string(rec->packet_id));
        }
        return stamp(std::move(out), now);
    }

    if (const auto* rel = std::get_if<PubrelPacket>(&p)) {
        qos2_inbound_.erase(rel->packet_id);
        Packet comp = PubcompPacket{rel->packet_id, std::nullopt};
        attach_geo(comp);
        out.push_back(std::move(comp));
        return stamp(std::move(out), now);
    }

    if (const auto* comp = std::get_if<PubcompPacket>(&p)) {
        auto it = pending_publish_.find(comp->packet_id);
        if (it != pending_publish_.end() &&
            it->second.stage == PendingPublish::Stage::AwaitPubcomp) {
            ClientEvent ev;
            ev.type = it->second.fence_op ? ClientEvent::Type::FenceDone
                                          : ClientEvent::Type::PublishDone;
            ev.token = it->second.token;
            emit(std::move(ev));
            pending_publish_.erase(it);
        } else {
            warn("PUBCOMP for unknown packet id " + std::to_string(comp->packet_id));
        }
        return out;
    }

    if (const auto* suback = std::get_if<SubackPacket>(&p)) {
        auto it = pending_subscribe_.find(suback->packet_id);
        if (it == pending_subscribe_.end()) {
            warn("SUBACK for unknown packet id " + std::to_string(suback->packet_id));
            return out;
        }
        ClientEvent ev;
        ev.type = ClientEvent::Type::SubscribeDone;
        ev.token = it->second.first;
        ev.granted = suback->return_codes;
        ev.ok = suback->return_codes.size() == it->second.second &&
                std::none_of(suback->return_codes.begin(), suback->return_codes.end(),
                             [](uint8_t rc) { return rc == 0x80; });
        emit(std::move(ev));
        pending_subscribe_.erase(it);
        return out;
    }

    if (const auto* unsuback = std::get_if<UnsubackPacket>(&p)) {
        auto it = pending_unsubscribe_.find(unsuback->packet_id);
        if (it == pending_unsubscribe_.end()) {
            warn("UNSUBACK for unknown packet id " + std::to_string(unsuback->packet_id));
            return out;
        }
        ClientEvent ev;
        ev.type = ClientEvent::Type::UnsubscribeDone;
        ev.token = it->second;
        emit(std::move(ev));
        pending_unsubscribe_.erase(it);
        return out;
    }

    if (std::holds_alternative<PingrespPacket>(p)) {
        ping_sent_.reset();
        return out;
    }

    warn("unexpected packet from broker");
    return out;
}

std::vector<Packet> ClientEngine::on_tick(double now) {
    std::vector<Packet> out;

    if (state_ == State::Connecting && now - connect_sent_ > cfg_.connect_timeout) {
        die("connect timeout");
        return out;
    }
    if (state_ != State::Connected) return out;

    if (ping_sent_ && now - *ping_sent_ > 1.5 * cfg_.keep_alive) {
        die("no PINGRESP within 1.5x keep-alive");
        return out;
    }

    if (!ping_sent_ && now - last_send_ >= cfg_.keep_alive) {
        PingreqPacket p;
        Packet pkt = p;
        attach_geo(pkt);
        ping_sent_ = now;
        out.push_back(std::move(pkt));
    }

    for (auto& [pid, pending] : pending_publish_) {
        if (now - pending.last_sent < cfg_.retransmit_timeout) continue;
        pending.last_sent = now;
        if (pending.stage == PendingPublish::Stage::AwaitPubcomp) {
            Packet rel = PubrelPacket{pid, std::nullopt};
            attach_geo(rel);
            out.push_back(std::move(rel));
        } else {
            PublishPacket dup = pending.packet;
            dup.dup = true;
            Packet pkt = std::move(dup);
            // geolocation resampled: retransmission carries the latest fix
            attach_geo(pkt);
            out.push_back(std::move(pkt));
        }
    }

    return stamp(std::move(out), now);
}

std::vector<ClientEvent> ClientEngine::take_events() {
    std::vector<ClientEvent> out;
    out.swap(events_);
    return out;
}

}  // namespace mqttg
