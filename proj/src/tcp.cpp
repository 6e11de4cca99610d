#include "mqttg/tcp.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <deque>

namespace mqttg {

namespace {

void set_nonblocking(int fd) {
    int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

int resolve_and_connect(const std::string& host, uint16_t port, double timeout_s) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    std::string port_str = std::to_string(port);
    int rc = getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res);
    if (rc != 0) throw ConnectError("cannot resolve " + host + ": " + gai_strerror(rc));

    int fd = -1;
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        fd = socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        set_nonblocking(fd);
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
        if (errno == EINPROGRESS) {
            pollfd pfd{fd, POLLOUT, 0};
            int pr = poll(&pfd, 1, static_cast<int>(timeout_s * 1000));
            int err = 0;
            socklen_t len = sizeof(err);
            if (pr > 0 && getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) == 0 && err == 0) break;
        }
        ::close(fd);
        fd = -1;
    }
    freeaddrinfo(res);
    if (fd < 0) throw ConnectError("cannot connect to " + host + ":" + port_str);
    int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags & ~O_NONBLOCK);
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return fd;
}

}  // namespace

double monotonic_seconds() {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

// ---- server -----------------------------------------------------------------

struct TcpBrokerServer::Conn {
    int fd = -1;
    std::vector<uint8_t> in;
    std::deque<uint8_t> out;
    bool closing = false;  // flush remaining output, then close
};

TcpBrokerServer::TcpBrokerServer(Broker& broker, const std::string& host, uint16_t port)
    : broker_(broker) {
    listen_fd_ = socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw BindError("socket: " + std::string(strerror(errno)));
    int one = 1;
    setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw BindError("invalid listen address '" + host + "'");
    }
    if (bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        std::string err = strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw BindError("cannot bind " + host + ":" + std::to_string(port) + ": " + err);
    }
    if (listen(listen_fd_, 64) != 0) {
        std::string err = strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw BindError("listen: " + err);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
    set_nonblocking(listen_fd_);

    if (pipe(wake_pipe_) != 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw BindError("pipe: " + std::string(strerror(errno)));
    }
    set_nonblocking(wake_pipe_[0]);
    set_nonblocking(wake_pipe_[1]);
}

TcpBrokerServer::~TcpBrokerServer() {
    for (auto& [id, c] : conns_) {
        if (c.fd >= 0) ::close(c.fd);
    }
    if (listen_fd_ >= 0) ::close(listen_fd_);
    if (wake_pipe_[0] >= 0) ::close(wake_pipe_[0]);
    if (wake_pipe_[1] >= 0) ::close(wake_pipe_[1]);
}

void TcpBrokerServer::stop() {
    stopping_.store(true);
    char b = 1;
    [[maybe_unused]] ssize_t n = write(wake_pipe_[1], &b, 1);
}

void TcpBrokerServer::apply_effects(std::vector<Effect> effects) {
    for (auto& e : effects) {
        if (auto* send = std::get_if<SendPacket>(&e)) {
            auto it = conns_.find(send->conn);
            if (it == conns_.end()) continue;
            auto bytes = encode_packet(send->packet);
            it->second.out.insert(it->second.out.end(), bytes.begin(), bytes.end());
        } else if (auto* close_peer = std::get_if<ClosePeer>(&e)) {
            auto it = conns_.find(close_peer->conn);
            if (it != conns_.end()) it->second.closing = true;
            if (on_note_) on_note_("closing connection " + std::to_string(close_peer->conn) +
                                   ": " + close_peer->reason);
        } else if (auto* rec = std::get_if<RouteRecord>(&e)) {
            if (on_route_) on_route_(*rec);
        } else if (auto* note = std::get_if<Note>(&e)) {
            if (on_note_) on_note_(note->text);
        }
    }
}

void TcpBrokerServer::run() {
    const DecodeOptions decode_opt = broker_.decode_options();

    while (!stopping_.load()) {
        std::vector<pollfd> fds;
        fds.push_back({listen_fd_, POLLIN, 0});
        fds.push_back({wake_pipe_[0], POLLIN, 0});
        std::vector<ConnId> order;
        for (auto& [id, c] : conns_) {
            short events = POLLIN;
            if (!c.out.empty()) events |= POLLOUT;
            fds.push_back({c.fd, events, 0});
            order.push_back(id);
        }

        int pr = poll(fds.data(), fds.size(), 100);
        double now = monotonic_seconds();
        if (pr < 0) {
            if (errno == EINTR) continue;
            break;
        }

        if (fds[0].revents & POLLIN) {
            while (true) {
                int cfd = accept(listen_fd_, nullptr, nullptr);
                if (cfd < 0) break;
                set_nonblocking(cfd);
                int one = 1;
                setsockopt(cfd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
                Conn c;
                c.fd = cfd;
                conns_.emplace(next_conn_++, std::move(c));
            }
        }
        if (fds[1].revents & POLLIN) {
            char buf[16];
            while (read(wake_pipe_[0], buf, sizeof(buf)) > 0) {
            }
        }

        std::vector<ConnId> dead;
        for (std::size_t i = 0; i < order.size(); ++i) {
            ConnId id = order[i];
            auto& pfd = fds[i + 2];
            auto it = conns_.find(id);
            if (it == conns_.end()) continue;
            Conn& c = it->second;

            if (pfd.revents & (POLLERR | POLLHUP)) {
                dead.push_back(id);
                continue;
            }
            if (pfd.revents & POLLIN) {
                uint8_t buf[4096];
                while (true) {
                    ssize_t n = read(c.fd, buf, sizeof(buf));
                    if (n > 0) {
                        c.in.insert(c.in.end(), buf, buf + n);
                    } else if (n == 0) {
                        dead.push_back(id);
                        break;
                    } else {
                        if (errno != EAGAIN && errno != EWOULDBLOCK) dead.push_back(id);
                        break;
                    }
                }
                // frame and dispatch every complete packet in the buffer
                while (!c.closing) {
                    std::optional<std::size_t> size;
                    try {
                        size = frame_size(c.in);
                    } catch (const CodecError&) {
                        if (on_note_) on_note_("malformed length from connection " +
                                               std::to_string(id));
                        c.closing = true;
                        apply_effects(broker_.on_socket_closed(id, now));
                        break;
                    }
                    if (!size || c.in.size() < *size) break;
                    try {
                        auto decoded = decode_packet(std::span(c.in.data(), *size), decode_opt);
                        c.in.erase(c.in.begin(), c.in.begin() + static_cast<long>(*size));
                        apply_effects(broker_.on_packet(id, decoded.packet, now));
                    } catch (const CodecError& e) {
                        if (on_note_) on_note_("protocol error from connection " +
                                               std::to_string(id) + ": " + e.what());
                        c.closing = true;
                        apply_effects(broker_.on_socket_closed(id, now));
                        break;
                    }
                }
            }
            if (!c.out.empty()) {
                std::vector<uint8_t> chunk(c.out.begin(), c.out.end());
                ssize_t n = write(c.fd, chunk.data(), chunk.size());
                if (n > 0) {
                    c.out.erase(c.out.begin(), c.out.begin() + n);
                } else if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK) {
                    dead.push_back(id);
                }
            }
            if (c.closing && c.out.empty()) dead.push_back(id);
        }

        for (ConnId id : dead) {
            auto it = conns_.find(id);
            if (it == conns_.end()) continue;
            bool was_closing = it->second.closing;
            ::close(it->second.fd);
            conns_.erase(it);
            if (!was_closing) {
                // peer vanished without DISCONNECT
                apply_effects(broker_.on_socket_closed(id, now));
            }
        }

        apply_effects(broker_.on_tick(now));
    }
}

// ---- client -----------------------------------------------------------------

TcpClientConn::~TcpClientConn() { close(); }

void TcpClientConn::connect(const std::string& host, uint16_t port, double timeout_s) {
    close();
    fd_ = resolve_and_connect(host, port, timeout_s);
}

void TcpClientConn::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
    buffer_.clear();
}

void TcpClientConn::send(const Packet& p) {
    if (fd_ < 0) throw ConnectError("not connected");
    auto bytes = encode_packet(p);
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        ssize_t n = write(fd_, bytes.data() + sent, bytes.size() - sent);
        if (n <= 0) {
            if (n < 0 && errno == EINTR) continue;
            throw ConnectError("send failed: " + std::string(strerror(errno)));
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::optional<Packet> TcpClientConn::recv(double timeout_s, const DecodeOptions& opt) {
    if (fd_ < 0) throw ConnectError("not connected");
    double deadline = monotonic_seconds() + timeout_s;
    while (true) {
        if (auto size = frame_size(buffer_); size && buffer_.size() >= *size) {
            auto decoded = decode_packet(std::span(buffer_.data(), *size), opt);
            buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<long>(*size));
            return decoded.packet;
        }
        double remaining = deadline - monotonic_seconds();
        if (remaining <= 0) return std::nullopt;
        pollfd pfd{fd_, POLLIN, 0};
        int pr = poll(&pfd, 1, static_cast<int>(remaining * 1000) + 1);
        if (pr == 0) return std::nullopt;
        if (pr < 0) {
            if (errno == EINTR) continue;
            throw ConnectError("poll failed: " + std::string(strerror(errno)));
        }
        uint8_t buf[4096];
        ssize_t n = read(fd_, buf, sizeof(buf));
        if (n == 0) throw ConnectError("connection closed by broker");
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw ConnectError("recv failed: " + std::string(strerror(errno)));
        }
        buffer_.insert(buffer_.end(), buf, buf + n);
    }
}

}  // namespace mqttg
