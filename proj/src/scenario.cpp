#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mqttg/sim.hpp"
#include "mqttg/topic.hpp"
#include "sim_internal.hpp"

namespace mqttg::sim {

namespace {

bool finite_point(const GeoPoint& p) {
    return std::isfinite(p.latitude) && std::isfinite(p.longitude);
}

bool in_range(const GeoPoint& p) {
    return p.latitude >= -90.0 && p.latitude <= 90.0 && p.longitude >= -180.0 &&
           p.longitude <= 180.0;
}

}  // namespace

// ---- movement -----------------------------------------------------------------

PositionTrack PositionTrack::resolve(const Movement& m, uint64_t seed, double duration) {
    PositionTrack t;
    t.kind_ = m.kind;
    t.start_ = m.start;
    t.elevation_ = m.elevation;
    t.waypoints_ = m.waypoints;
    std::sort(t.waypoints_.begin(), t.waypoints_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (m.kind == Movement::Kind::RandomWalk) {
        uint64_t state = seed;
        std::size_t steps = static_cast<std::size_t>(std::ceil(duration)) + 1;
        t.steps_.reserve(steps + 1);
        GeoPoint p = m.start;
        t.steps_.push_back(p);
        for (std::size_t i = 0; i < steps; ++i) {
            p.latitude += m.step_degrees * (2.0 * uniform01(state) - 1.0);
            p.longitude += m.step_degrees * (2.0 * uniform01(state) - 1.0);
            t.steps_.push_back(p);
        }
    }
    return t;
}

GeoPoint PositionTrack::at(double t) const {
    switch (kind_) {
        case Movement::Kind::Fixed:
            return start_;
        case Movement::Kind::RandomWalk: {
            if (steps_.empty()) return start_;
            double idx = std::floor(std::max(t, 0.0));
            std::size_t i = std::min(static_cast<std::size_t>(idx), steps_.size() - 1);
            return steps_[i];
        }
        case Movement::Kind::Waypoints: {
            if (waypoints_.empty()) return start_;
            if (t <= waypoints_.front().first) return waypoints_.front().second;
            if (t >= waypoints_.back().first) return waypoints_.back().second;
            for (std::size_t i = 1; i < waypoints_.size(); ++i) {
                if (t > waypoints_[i].first) continue;
                const auto& [ta, pa] = waypoints_[i - 1];
                const auto& [tb, pb] = waypoints_[i];
                double span = tb - ta;
                double f = span > 0.0 ? (t - ta) / span : 0.0;
                return {pa.latitude + f * (pb.latitude - pa.latitude),
                        pa.longitude + f * (pb.longitude - pa.longitude)};
            }
            return waypoints_.back().second;
        }
    }
    return start_;
}

std::map<std::string, PositionTrack> resolve_tracks(const Scenario& s) {
    std::map<std::string, PositionTrack> tracks;
    for (std::size_t i = 0; i < s.clients.size(); ++i) {
        tracks.emplace(s.clients[i].client_id,
                       PositionTrack::resolve(s.clients[i].movement,
                                              client_rng_state(s.seed, i), s.duration));
    }
    return tracks;
}

// ---- schedule -------------------------------------------------------------------

std::vector<SimEvent> build_schedule(const Scenario& s) {
    std::vector<SimEvent> events;
    uint64_t seq = 0;
    for (std::size_t c = 0; c < s.clients.size(); ++c) {
        events.push_back({0.0, seq++, SimEvent::Kind::Setup, c, 0});
    }
    for (double t = 1.0; t <= s.duration; t += 1.0) {
        for (std::size_t c = 0; c < s.clients.size(); ++c) {
            if (!s.clients[c].share_location) continue;
            events.push_back({t, seq++, SimEvent::Kind::Ping, c, 0});
        }
    }
    for (std::size_t c = 0; c < s.clients.size(); ++c) {
        for (std::size_t i = 0; i < s.clients[c].publishes.size(); ++i) {
            events.push_back({s.clients[c].publishes[i].time, seq++, SimEvent::Kind::Publish, c, i});
        }
    }
    std::stable_sort(events.begin(), events.end(), [](const SimEvent& a, const SimEvent& b) {
        if (a.time != b.time) return a.time < b.time;
        return a.seq < b.seq;
    });
    return events;
}

// ---- validation -----------------------------------------------------------------

std::optional<std::string> validate_scenario(const Scenario& s) {
    if (!(s.duration > 0.0) || !std::isfinite(s.duration)) return "duration must be positive";
    if (s.drop_probability < 0.0 || s.drop_probability > 1.0) {
        return "drop_probability must be in [0, 1]";
    }
    if (!(s.retransmit_timeout > 0.0)) return "retransmit_timeout must be positive";
    if (s.drain_time < 0.0) return "drain_time must be nonnegative";
    if (s.clients.empty()) return "scenario has no clients";

    std::set<std::string> ids;
    for (const auto& c : s.clients) {
        if (c.client_id.empty()) return "client id must be nonempty";
        if (!ids.insert(c.client_id).second) return "duplicate client id '" + c.client_id + "'";

        const Movement& m = c.movement;
        if (m.kind == Movement::Kind::Waypoints) {
            if (m.waypoints.empty()) return c.client_id + ": waypoint movement needs waypoints";
            for (const auto& [t, p] : m.waypoints) {
                if (!std::isfinite(t) || t < 0.0) return c.client_id + ": bad waypoint time";
                if (!finite_point(p) || !in_range(p)) return c.client_id + ": waypoint out of range";
            }
        } else {
            if (!finite_point(m.start) || !in_range(m.start)) {
                return c.client_id + ": start position out of range";
            }
        }
        if (m.kind == Movement::Kind::RandomWalk &&
            (!std::isfinite(m.step_degrees) || m.step_degrees < 0.0)) {
            return c.client_id + ": random walk step must be nonnegative";
        }

        for (const auto& sub : c.subscriptions) {
            if (!valid_topic_filter(sub.filter)) {
                return c.client_id + ": invalid filter '" + sub.filter + "'";
            }
            if (sub.qos > 2) return c.client_id + ": subscription QoS out of range";
        }
        if (c.fence) {
            if (auto issue = fence_issue(*c.fence)) {
                return c.client_id + ": invalid fence: " + to_string(*issue);
            }
        }
        for (const auto& p : c.publishes) {
            if (!std::isfinite(p.time) || p.time < 0.0 || p.time > s.duration) {
                return c.client_id + ": publish time outside [0, duration]";
            }
            if (!valid_topic_name(p.topic) || p.topic.front() == '$') {
                return c.client_id + ": invalid publish topic '" + p.topic + "'";
            }
            if (p.qos > 2) return c.client_id + ": publish QoS out of range";
        }
    }
    return std::nullopt;
}

// ---- parser ---------------------------------------------------------------------

namespace {

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
    throw std::runtime_error("scenario line " + std::to_string(line_no) + ": " + what);
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_num(const std::string& tok, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) parse_fail(line_no, "bad number '" + tok + "'");
        return v;
    } catch (const std::invalid_argument&) {
        parse_fail(line_no, "bad number '" + tok + "'");
    } catch (const std::out_of_range&) {
        parse_fail(line_no, "number out of range '" + tok + "'");
    }
    parse_fail(line_no, "bad number");
}

bool parse_bool(const std::string& tok, std::size_t line_no) {
    if (tok == "true" || tok == "on" || tok == "1") return true;
    if (tok == "false" || tok == "off" || tok == "0") return false;
    parse_fail(line_no, "bad boolean '" + tok + "'");
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

// "lat,lon" pair
GeoPoint parse_point(const std::string& tok, std::size_t line_no) {
    auto comma = tok.find(',');
    if (comma == std::string::npos) parse_fail(line_no, "expected lat,lon but got '" + tok + "'");
    return {parse_num(tok.substr(0, comma), line_no), parse_num(tok.substr(comma + 1), line_no)};
}

uint8_t parse_qos_token(const std::string& tok, std::size_t line_no) {
    if (tok.size() == 4 && tok.starts_with("qos") && tok[3] >= '0' && tok[3] <= '2') {
        return static_cast<uint8_t>(tok[3] - '0');
    }
    parse_fail(line_no, "expected qos0|qos1|qos2 but got '" + tok + "'");
}

void parse_client_line(ScenarioClient& c, const std::string& key, const std::string& value,
                       std::size_t line_no) {
    if (key == "movement") {
        auto toks = split_ws(value);
        if (toks.empty()) parse_fail(line_no, "movement needs a kind");
        if (toks[0] == "fixed") {
            if (toks.size() != 3) parse_fail(line_no, "movement = fixed <lat> <lon>");
            c.movement.kind = Movement::Kind::Fixed;
            c.movement.start = {parse_num(toks[1], line_no), parse_num(toks[2], line_no)};
        } else if (toks[0] == "random_walk") {
            if (toks.size() != 4) parse_fail(line_no, "movement = random_walk <step> <lat> <lon>");
            c.movement.kind = Movement::Kind::RandomWalk;
            c.movement.step_degrees = parse_num(toks[1], line_no);
            c.movement.start = {parse_num(toks[2], line_no), parse_num(toks[3], line_no)};
        } else if (toks[0] == "waypoints") {
            if (toks.size() < 2) parse_fail(line_no, "movement = waypoints <t>:<lat>,<lon> ...");
            c.movement.kind = Movement::Kind::Waypoints;
            for (std::size_t i = 1; i < toks.size(); ++i) {
                auto colon = toks[i].find(':');
                if (colon == std::string::npos) parse_fail(line_no, "waypoint needs t:lat,lon");
                double t = parse_num(toks[i].substr(0, colon), line_no);
                c.movement.waypoints.emplace_back(t, parse_point(toks[i].substr(colon + 1), line_no));
            }
        } else {
            parse_fail(line_no, "unknown movement kind '" + toks[0] + "'");
        }
    } else if (key == "elevation") {
        c.movement.elevation = static_cast<float>(parse_num(value, line_no));
    } else if (key == "share_location") {
        c.share_location = parse_bool(value, line_no);
    } else if (key == "subscribe") {
        auto toks = split_ws(value);
        if (toks.size() != 2) parse_fail(line_no, "subscribe = qos<q> <filter>");
        c.subscriptions.push_back({toks[1], parse_qos_token(toks[0], line_no)});
    } else if (key == "fence") {
        auto toks = split_ws(value);
        if (toks.size() < 4) parse_fail(line_no, "fence = static|dynamic <lat,lon> x3+");
        Geofence f;
        if (toks[0] == "static") {
            f.mode = FenceMode::Static;
        } else if (toks[0] == "dynamic") {
            f.mode = FenceMode::Dynamic;
        } else {
            parse_fail(line_no, "fence mode must be static or dynamic");
        }
        for (std::size_t i = 1; i < toks.size(); ++i) {
            f.vertices.push_back(parse_point(toks[i], line_no));
        }
        c.fence = std::move(f);
    } else if (key == "publish") {
        // publish = <time> qos<q> [retain] <topic> <payload...>
        std::istringstream is(value);
        std::string time_tok, qos_tok, next;
        if (!(is >> time_tok >> qos_tok >> next)) {
            parse_fail(line_no, "publish = <time> qos<q> [retain] <topic> [payload]");
        }
        ScheduledPublish p;
        p.time = parse_num(time_tok, line_no);
        p.qos = parse_qos_token(qos_tok, line_no);
        if (next == "retain") {
            p.retain = true;
            if (!(is >> next)) parse_fail(line_no, "publish missing topic");
        }
        p.topic = next;
        std::string payload;
        std::getline(is, payload);
        payload = trim(payload);
        p.payload.assign(payload.begin(), payload.end());
        c.publishes.push_back(std::move(p));
    } else {
        parse_fail(line_no, "unknown client key '" + key + "'");
    }
}

}  // namespace

Scenario parse_scenario(std::istream& in) {
    Scenario s;
    ScenarioClient* current = nullptr;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;

        if (t == "}") {
            if (current == nullptr) parse_fail(line_no, "'}' outside a client block");
            current = nullptr;
            continue;
        }
        if (t.starts_with("client ")) {
            if (current != nullptr) parse_fail(line_no, "nested client block");
            auto toks = split_ws(t);
            if (toks.size() != 3 || toks[2] != "{") parse_fail(line_no, "client <id> {");
            s.clients.push_back(ScenarioClient{});
            s.clients.back().client_id = toks[1];
            current = &s.clients.back();
            continue;
        }

        auto eq = t.find('=');
        if (eq == std::string::npos) parse_fail(line_no, "expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));

        if (current != nullptr) {
            parse_client_line(*current, key, value, line_no);
        } else if (key == "seed") {
            try {
                s.seed = static_cast<uint64_t>(std::stoull(value));
            } catch (const std::exception&) {
                parse_fail(line_no, "bad seed '" + value + "'");
            }
        } else if (key == "duration") {
            s.duration = parse_num(value, line_no);
        } else if (key == "drop_probability") {
            s.drop_probability = parse_num(value, line_no);
        } else if (key == "retransmit_timeout") {
            s.retransmit_timeout = parse_num(value, line_no);
        } else if (key == "drain_time") {
            s.drain_time = parse_num(value, line_no);
        } else if (key == "fence_fail_closed") {
            s.fence_fail_closed = parse_bool(value, line_no);
        } else {
            parse_fail(line_no, "unknown key '" + key + "'");
        }
    }
    if (current != nullptr) throw std::runtime_error("scenario ended inside a client block");
    if (auto err = validate_scenario(s)) throw std::runtime_error("invalid scenario: " + *err);
    return s;
}

Scenario parse_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file '" + path + "'");
    return parse_scenario(in);
}

}  // namespace mqttg::sim
