// mqttg: broker daemon, one-shot publisher, streaming subscriber, wire-format
// inspector, and scenario simulator.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "mqttg/broker.hpp"
#include "mqttg/client.hpp"
#include "mqttg/sim.hpp"
#include "mqttg/sysg.hpp"
#include "mqttg/tcp.hpp"

namespace {

using namespace mqttg;

TcpBrokerServer* g_server = nullptr;

void on_signal(int) {
    if (g_server != nullptr) g_server->stop();
}

bool parse_host_port(const std::string& s, std::string& host, uint16_t& port) {
    auto colon = s.rfind(':');
    if (colon == std::string::npos || colon + 1 >= s.size()) return false;
    host = s.substr(0, colon);
    try {
        int p = std::stoi(s.substr(colon + 1));
        if (p < 1 || p > 65535) return false;
        port = static_cast<uint16_t>(p);
    } catch (const std::exception&) {
        return false;
    }
    return !host.empty();
}

// Fence file: line 1 "static" or "dynamic", then one "lat lon" pair per line.
Geofence parse_fence_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open fence file '" + path + "'");
    std::string mode;
    if (!(in >> mode)) throw std::runtime_error("fence file is empty");
    Geofence f;
    if (mode == "static") {
        f.mode = FenceMode::Static;
    } else if (mode == "dynamic") {
        f.mode = FenceMode::Dynamic;
    } else {
        throw std::runtime_error("fence file must start with 'static' or 'dynamic'");
    }
    double lat = 0, lon = 0;
    while (in >> lat >> lon) f.vertices.push_back({lat, lon});
    if (!in.eof()) throw std::runtime_error("malformed vertex line in fence file");
    if (auto issue = fence_issue(f)) {
        throw std::runtime_error(std::string("invalid fence: ") + to_string(*issue));
    }
    return f;
}

std::string geo_summary(const GeolocationBlock& g) {
    std::ostringstream os;
    os << "v" << static_cast<int>(g.version) << " lat=" << std::setprecision(10) << g.latitude
       << " lon=" << g.longitude << " elev=" << g.elevation;
    return os.str();
}

std::string describe(const Packet& p);

// ---- broker ----------------------------------------------------------------

struct BrokerArgs {
    std::string listen = "127.0.0.1:1883";
    std::string config_file;
    bool fence_fail_closed = false;
    bool strict = false;
};

int run_broker(const BrokerArgs& args) {
    BrokerConfig cfg;
    std::string listen = args.listen;

    if (!args.config_file.empty()) {
        std::ifstream in(args.config_file);
        if (!in) {
            std::cerr << "cannot open config file '" << args.config_file << "'\n";
            return 2;
        }
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            std::istringstream is(line);
            std::string key;
            if (!(is >> key)) continue;
            std::string eq, value;
            if (key.find('=') != std::string::npos) {
                auto pos = key.find('=');
                value = key.substr(pos + 1);
                key = key.substr(0, pos);
                if (value.empty()) is >> value;
            } else {
                is >> eq >> value;
                if (eq != "=") {
                    std::cerr << args.config_file << ":" << line_no << ": expected key = value\n";
                    return 2;
                }
            }
            if (key == "listen") {
                listen = value;
            } else if (key == "strict") {
                cfg.strict_3_1_1 = value == "true" || value == "1" || value == "on";
            } else if (key == "fence_fail_closed") {
                cfg.fence_fail_closed = value == "true" || value == "1" || value == "on";
            } else if (key == "retransmit_timeout") {
                cfg.retransmit_timeout = std::stod(value);
            } else if (key == "max_keep_alive") {
                cfg.max_keep_alive = static_cast<uint16_t>(std::stoi(value));
            } else {
                std::cerr << args.config_file << ":" << line_no << ": unknown key '" << key << "'\n";
                return 2;
            }
        }
    }

    // flags override the file
    if (args.strict) cfg.strict_3_1_1 = true;
    if (args.fence_fail_closed) cfg.fence_fail_closed = true;
    if (args.listen != "127.0.0.1:1883") listen = args.listen;

    std::string host;
    uint16_t port = 0;
    if (!parse_host_port(listen, host, port)) {
        std::cerr << "bad listen address '" << listen << "' (expected host:port)\n";
        return 2;
    }

    Broker broker(cfg);
    try {
        TcpBrokerServer server(broker, host, port);
        server.set_route_logger([](const RouteRecord& r) {
            std::cout << "ROUTE " << r.publisher << " " << r.topic << " " << r.subscriber << " "
                      << to_string(r.verdict) << "\n"
                      << std::flush;
        });
        server.set_note_logger([](const std::string& s) { std::cerr << s << "\n"; });
        g_server = &server;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cerr << "listening on " << host << ":" << server.port() << "\n";
        server.run();
        g_server = nullptr;
    } catch (const BindError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    return 0;
}

// ---- shared client plumbing --------------------------------------------------

// Pumps the connection until `done` reports true. Returns false on timeout or
// connection loss.
bool pump(ClientEngine& engine, TcpClientConn& conn, double deadline,
          const std::function<bool()>& done,
          const std::function<void(const ClientEvent&)>& on_event) {
    while (monotonic_seconds() < deadline) {
        if (done()) return true;
        std::optional<Packet> p;
        try {
            p = conn.recv(0.1);
        } catch (const std::exception&) {
            return false;
        }
        double now = monotonic_seconds();
        if (p) {
            for (auto& reply : engine.on_packet(*p, now)) conn.send(reply);
        }
        for (auto& out : engine.on_tick(now)) conn.send(out);
        for (auto& ev : engine.take_events()) on_event(ev);
        if (engine.dead()) return done();
    }
    return done();
}

struct PubArgs {
    std::string broker = "127.0.0.1:1883";
    std::string topic;
    std::string message;
    int qos = 0;
    bool retain = false;
    std::string client_id = "mqttg-pub";
    double lat = 0, lon = 0, elev = 0;
    bool has_lat = false, has_lon = false, has_elev = false;
    double timeout = 10.0;
};

int run_pub(const PubArgs& args) {
    ClientConfig cfg;
    cfg.client_id = args.client_id;
    std::unique_ptr<LocationProvider> provider;
    if (args.has_lat || args.has_lon || args.has_elev) {
        if (!args.has_lat || !args.has_lon) {
            std::cerr << "--lat and --lon must be given together\n";
            return 1;
        }
        GeolocationBlock b;
        b.latitude = args.lat;
        b.longitude = args.lon;
        b.elevation = static_cast<float>(args.elev);
        provider = std::make_unique<FixedLocationProvider>(b);
        cfg.share_location = true;
    }

    std::string host;
    uint16_t port = 0;
    if (!parse_host_port(args.broker, host, port)) {
        std::cerr << "bad broker address '" << args.broker << "'\n";
        return 1;
    }

    try {
        TcpClientConn conn;
        conn.connect(host, port, args.timeout);
        ClientEngine engine(cfg, provider.get());
        double now = monotonic_seconds();
        for (auto& p : engine.begin(now)) conn.send(p);

        bool refused = false;
        auto on_event = [&](const ClientEvent& ev) {
            if (ev.type == ClientEvent::Type::ConnectRefused) {
                std::cerr << "connection refused, return code " << static_cast<int>(ev.code)
                          << "\n";
                refused = true;
            }
        };
        double deadline = monotonic_seconds() + args.timeout;
        if (!pump(engine, conn, deadline, [&] { return engine.connected() || refused; },
                  on_event) ||
            refused) {
            if (!refused) std::cerr << "timed out waiting for CONNACK\n";
            return 1;
        }

        std::vector<Packet> out;
        uint32_t token = engine.publish(args.topic,
                                        std::vector<uint8_t>(args.message.begin(),
                                                             args.message.end()),
                                        static_cast<uint8_t>(args.qos), args.retain,
                                        monotonic_seconds(), out);
        for (auto& p : out) conn.send(p);

        bool complete = false, failed = false;
        auto on_pub_event = [&](const ClientEvent& ev) {
            if (ev.type == ClientEvent::Type::PublishDone && ev.token == token) {
                complete = ev.ok;
                failed = !ev.ok;
            }
        };
        if (!pump(engine, conn, deadline, [&] { return complete || failed; }, on_pub_event) ||
            failed) {
            std::cerr << "publish did not complete\n";
            return 1;
        }
        for (auto& p : engine.disconnect(monotonic_seconds())) conn.send(p);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}

struct SubArgs {
    std::string broker = "127.0.0.1:1883";
    std::vector<std::string> topics;
    std::string fence_file;
    int qos = 0;
    std::string client_id = "mqttg-sub";
    double lat = 0, lon = 0, elev = 0;
    bool has_lat = false, has_lon = false;
    double timeout = 10.0;
    long max_messages = -1;  // stop after N messages; -1 = run forever
    double run_for = 0.0;    // stop after this many seconds; 0 = run forever
};

int run_sub(const SubArgs& args) {
    Geofence fence;
    bool has_fence = false;
    if (!args.fence_file.empty()) {
        try {
            fence = parse_fence_file(args.fence_file);
            has_fence = true;
        } catch (const std::exception& e) {
            std::cerr << e.what() << "\n";
            return 2;
        }
    }

    ClientConfig cfg;
    cfg.client_id = args.client_id;
    std::unique_ptr<LocationProvider> provider;
    if (args.has_lat && args.has_lon) {
        GeolocationBlock b;
        b.latitude = args.lat;
        b.longitude = args.lon;
        b.elevation = static_cast<float>(args.elev);
        provider = std::make_unique<FixedLocationProvider>(b);
        cfg.share_location = true;
    }

    std::string host;
    uint16_t port = 0;
    if (!parse_host_port(args.broker, host, port)) {
        std::cerr << "bad broker address '" << args.broker << "'\n";
        return 1;
    }

    try {
        TcpClientConn conn;
        conn.connect(host, port, args.timeout);
        ClientEngine engine(cfg, provider.get());
        double now = monotonic_seconds();
        for (auto& p : engine.begin(now)) conn.send(p);

        bool refused = false;
        auto on_event = [&](const ClientEvent& ev) {
            if (ev.type == ClientEvent::Type::ConnectRefused) refused = true;
        };
        double deadline = monotonic_seconds() + args.timeout;
        if (!pump(engine, conn, deadline, [&] { return engine.connected() || refused; },
                  on_event) ||
            refused) {
            std::cerr << (refused ? "connection refused\n" : "timed out waiting for CONNACK\n");
            return 1;
        }

        std::vector<Packet> out;
        std::vector<Subscription> subs;
        for (const auto& t : args.topics) subs.push_back({t, static_cast<uint8_t>(args.qos)});
        engine.subscribe(subs, monotonic_seconds(), out);
        if (has_fence) engine.set_fence(fence, monotonic_seconds(), out);
        for (auto& p : out) conn.send(p);

        long printed = 0;
        double stop_at = args.run_for > 0 ? monotonic_seconds() + args.run_for : 1e300;
        auto on_msg = [&](const ClientEvent& ev) {
            if (ev.type != ClientEvent::Type::Message) return;
            std::cout << ev.topic << "\t"
                      << std::string(ev.payload.begin(), ev.payload.end());
            if (ev.geolocation) {
                std::cout << "\t" << geo_summary(*ev.geolocation);
            }
            std::cout << "\n" << std::flush;
            ++printed;
        };
        pump(engine, conn, stop_at,
             [&] { return args.max_messages >= 0 && printed >= args.max_messages; }, on_msg);
        for (auto& p : engine.disconnect(monotonic_seconds())) conn.send(p);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}

// ---- decode ------------------------------------------------------------------

std::string describe(const Packet& p) {
    std::ostringstream os;
    os << to_string(packet_type(p));
    auto geo = packet_geolocation(p);

    if (const auto* c = std::get_if<ConnectPacket>(&p)) {
        os << " client_id=" << c->client_id << " keep_alive=" << c->keep_alive
           << " clean_session=" << (c->clean_session ? 1 : 0);
        if (c->will) os << " will_topic=" << c->will->topic;
        if (c->username) os << " username=" << *c->username;
    } else if (const auto* c = std::get_if<ConnackPacket>(&p)) {
        os << " session_present=" << (c->session_present ? 1 : 0)
           << " return_code=" << static_cast<int>(c->return_code);
    } else if (const auto* pub = std::get_if<PublishPacket>(&p)) {
        os << " topic=" << pub->topic << " qos=" << static_cast<int>(pub->qos)
           << " retain=" << (pub->retain ? 1 : 0) << " dup=" << (pub->dup ? 1 : 0);
        if (pub->qos > 0) os << " packet_id=" << pub->packet_id;
        os << " payload_len=" << pub->payload.size();
    } else if (const auto* a = std::get_if<PubackPacket>(&p)) {
        os << " packet_id=" << a->packet_id;
    } else if (const auto* a = std::get_if<PubrecPacket>(&p)) {
        os << " packet_id=" << a->packet_id;
    } else if (const auto* a = std::get_if<PubrelPacket>(&p)) {
        os << " packet_id=" << a->packet_id;
    } else if (const auto* a = std::get_if<PubcompPacket>(&p)) {
        os << " packet_id=" << a->packet_id;
    } else if (const auto* s = std::get_if<SubscribePacket>(&p)) {
        os << " packet_id=" << s->packet_id;
        for (const auto& e : s->entries) {
            os << " filter=" << e.filter << ":qos" << static_cast<int>(e.qos);
        }
    } else if (const auto* s = std::get_if<SubackPacket>(&p)) {
        os << " packet_id=" << s->packet_id << " granted=";
        for (std::size_t i = 0; i < s->return_codes.size(); ++i) {
            if (i > 0) os << ",";
            os << static_cast<int>(s->return_codes[i]);
        }
    } else if (const auto* u = std::get_if<UnsubscribePacket>(&p)) {
        os << " packet_id=" << u->packet_id;
        for (const auto& f : u->filters) os << " filter=" << f;
    } else if (const auto* u = std::get_if<UnsubackPacket>(&p)) {
        os << " packet_id=" << u->packet_id;
    }

    if (geo) {
        os << " + geolocation " << geo_summary(*geo);
    } else {
        os << ", no geolocation";
    }
    return os.str();
}

int run_decode(const std::string& hex, const std::string& file, bool strict) {
    std::vector<uint8_t> bytes;
    if (!hex.empty()) {
        std::string cleaned;
        for (char ch : hex) {
            if (!std::isspace(static_cast<unsigned char>(ch))) cleaned.push_back(ch);
        }
        if (cleaned.size() % 2 != 0) {
            std::cerr << "hex input must have an even number of digits\n";
            return 1;
        }
        for (std::size_t i = 0; i < cleaned.size(); i += 2) {
            auto nibble = [](char ch) -> int {
                if (ch >= '0' && ch <= '9') return ch - '0';
                if (ch >= 'a' && ch <= 'f') return ch - 'a' + 10;
                if (ch >= 'A' && ch <= 'F') return ch - 'A' + 10;
                return -1;
            };
            int hi = nibble(cleaned[i]);
            int lo = nibble(cleaned[i + 1]);
            if (hi < 0 || lo < 0) {
                std::cerr << "invalid hex digit\n";
                return 1;
            }
            bytes.push_back(static_cast<uint8_t>(hi << 4 | lo));
        }
    } else {
        std::ifstream in(file, std::ios::binary);
        if (!in) {
            std::cerr << "cannot open '" << file << "'\n";
            return 1;
        }
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    DecodeOptions opt;
    opt.strict_3_1_1 = strict;
    std::size_t offset = 0;
    int count = 0;
    while (offset < bytes.size()) {
        try {
            auto decoded = decode_packet(std::span(bytes).subspan(offset), opt);
            std::cout << describe(decoded.packet) << "\n";
            offset += decoded.consumed;
            ++count;
        } catch (const CodecError& e) {
            std::cerr << to_string(e.kind()) << ": " << e.what() << "\n";
            return 1;
        }
    }
    if (count == 0) {
        std::cerr << "no input bytes\n";
        return 1;
    }
    return 0;
}

// ---- sim -----------------------------------------------------------------------

int run_sim(const std::string& scenario_path, const std::string& csv_path, bool print_log) {
    try {
        sim::Scenario scenario = sim::parse_scenario_file(scenario_path);
        sim::RunResult result = sim::run_scenario(scenario);
        if (print_log) {
            for (const auto& r : result.delivery_log) {
                std::cout << "ROUTE " << r.publisher << " " << r.topic << " " << r.subscriber
                          << " " << to_string(r.verdict) << "\n";
            }
        }
        std::cout << sim::report_text(result.metrics);
        if (!csv_path.empty()) {
            std::ofstream out(csv_path);
            if (!out) {
                std::cerr << "cannot write '" << csv_path << "'\n";
                return 2;
            }
            out << sim::report_csv(result.metrics);
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MQTT broker, clients, and simulator with geolocation routing"};
    app.require_subcommand(1);

    BrokerArgs broker_args;
    auto* broker_cmd = app.add_subcommand("broker", "run the broker daemon");
    broker_cmd->add_option("--listen", broker_args.listen, "listen address host:port");
    broker_cmd->add_option("--config", broker_args.config_file, "key = value config file");
    broker_cmd->add_flag("--fence-fail-closed", broker_args.fence_fail_closed,
                         "suppress deliveries when a location is unknown");
    broker_cmd->add_flag("--strict", broker_args.strict, "reject the geolocation dialect");

    PubArgs pub_args;
    auto* pub_cmd = app.add_subcommand("pub", "publish one message");
    pub_cmd->add_option("--broker", pub_args.broker, "broker address host:port");
    pub_cmd->add_option("--topic", pub_args.topic, "topic")->required();
    pub_cmd->add_option("--message", pub_args.message, "payload")->required();
    pub_cmd->add_option("--qos", pub_args.qos, "QoS 0..2")->check(CLI::Range(0, 2));
    pub_cmd->add_flag("--retain", pub_args.retain, "set the RETAIN flag");
    pub_cmd->add_option("--client-id", pub_args.client_id, "client identifier");
    pub_cmd->add_option("--lat", pub_args.lat, "latitude");
    pub_cmd->add_option("--lon", pub_args.lon, "longitude");
    pub_cmd->add_option("--elev", pub_args.elev, "elevation metres");
    pub_cmd->add_option("--timeout", pub_args.timeout, "seconds to wait for completion");

    SubArgs sub_args;
    auto* sub_cmd = app.add_subcommand("sub", "subscribe and print messages");
    sub_cmd->add_option("--broker", sub_args.broker, "broker address host:port");
    sub_cmd->add_option("--topic", sub_args.topics, "topic filter (repeatable)")->required();
    sub_cmd->add_option("--fence", sub_args.fence_file, "fence file to submit via $SYSg");
    sub_cmd->add_option("--qos", sub_args.qos, "QoS 0..2")->check(CLI::Range(0, 2));
    sub_cmd->add_option("--client-id", sub_args.client_id, "client identifier");
    sub_cmd->add_option("--lat", sub_args.lat, "latitude");
    sub_cmd->add_option("--lon", sub_args.lon, "longitude");
    sub_cmd->add_option("--elev", sub_args.elev, "elevation metres");
    sub_cmd->add_option("--count", sub_args.max_messages, "exit after N messages");
    sub_cmd->add_option("--for", sub_args.run_for, "exit after this many seconds");
    sub_cmd->add_option("--timeout", sub_args.timeout, "connect timeout seconds");

    std::string decode_hex, decode_file;
    bool decode_strict = false;
    auto* decode_cmd = app.add_subcommand("decode", "dump packets from hex or a file");
    auto* hex_opt = decode_cmd->add_option("--hex", decode_hex, "packet bytes as hex");
    auto* file_opt = decode_cmd->add_option("--file", decode_file, "file of raw packet bytes");
    decode_cmd->add_flag("--strict", decode_strict, "reject the geolocation dialect");
    hex_opt->excludes(file_opt);

    std::string sim_scenario, sim_csv;
    bool sim_log = false;
    auto* sim_cmd = app.add_subcommand("sim", "run a simulation scenario");
    auto* sim_run = sim_cmd->add_subcommand("run", "run a scenario file");
    sim_run->add_option("scenario", sim_scenario, "scenario file")->required();
    sim_run->add_option("--csv", sim_csv, "write metrics CSV to this path");
    sim_run->add_flag("--log", sim_log, "print the delivery log");
    sim_cmd->require_subcommand(1);

    CLI11_PARSE(app, argc, argv);

    if (broker_cmd->parsed()) return run_broker(broker_args);
    if (pub_cmd->parsed()) {
        pub_args.has_lat = pub_cmd->count("--lat") > 0;
        pub_args.has_lon = pub_cmd->count("--lon") > 0;
        pub_args.has_elev = pub_cmd->count("--elev") > 0;
        return run_pub(pub_args);
    }
    if (sub_cmd->parsed()) {
        sub_args.has_lat = sub_cmd->count("--lat") > 0;
        sub_args.has_lon = sub_cmd->count("--lon") > 0;
        return run_sub(sub_args);
    }
    if (decode_cmd->parsed()) {
        if (decode_hex.empty() && decode_file.empty()) {
            std::cerr << "decode needs --hex or --file\n";
            return 1;
        }
        return run_decode(decode_hex, decode_file, decode_strict);
    }
    if (sim_cmd->parsed()) return run_sim(sim_scenario, sim_csv, sim_log);
    return 1;
}
