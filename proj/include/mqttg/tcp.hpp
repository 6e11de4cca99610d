#ifndef MQTTG_TCP_HPP
#define MQTTG_TCP_HPP

#include <atomic>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include "mqttg/broker.hpp"

namespace mqttg {

struct BindError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConnectError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// poll()-driven single-threaded server: one event loop owning the broker,
// per-connection read buffers and write queues. run() blocks until stop().
class TcpBrokerServer {
public:
    TcpBrokerServer(Broker& broker, const std::string& host, uint16_t port);  // throws BindError
    ~TcpBrokerServer();

    TcpBrokerServer(const TcpBrokerServer&) = delete;
    TcpBrokerServer& operator=(const TcpBrokerServer&) = delete;

    uint16_t port() const { return port_; }
    void run();
    void stop();  // safe from signal handlers and other threads

    void set_route_logger(std::function<void(const RouteRecord&)> fn) { on_route_ = std::move(fn); }
    void set_note_logger(std::function<void(const std::string&)> fn) { on_note_ = std::move(fn); }

private:
    struct Conn;
    void apply_effects(std::vector<Effect> effects);

    Broker& broker_;
    int listen_fd_ = -1;
    int wake_pipe_[2] = {-1, -1};
    uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::map<ConnId, Conn> conns_;
    ConnId next_conn_ = 1;
    std::function<void(const RouteRecord&)> on_route_;
    std::function<void(const std::string&)> on_note_;
};

// Blocking client socket with packet framing, for the CLI tools and tests.
class TcpClientConn {
public:
    TcpClientConn() = default;
    ~TcpClientConn();

    TcpClientConn(const TcpClientConn&) = delete;
    TcpClientConn& operator=(const TcpClientConn&) = delete;

    void connect(const std::string& host, uint16_t port, double timeout_s);  // throws ConnectError
    void send(const Packet& p);
    // next packet, or nullopt on timeout; throws on EOF or decode error
    std::optional<Packet> recv(double timeout_s, const DecodeOptions& opt = {});
    void close();
    bool open() const { return fd_ >= 0; }

private:
    int fd_ = -1;
    std::vector<uint8_t> buffer_;
};

double monotonic_seconds();

}  // namespace mqttg

#endif
