/*
 Copyright 2026 The rwhil Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <chrono>
#include <cstring>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rwhil/runlog.hpp"
#include "rwhil/topics.hpp"
#include "rwhil/wire.hpp"

namespace rwhil {

class BusError : public std::runtime_error {
public:
    explicit BusError(const std::string& what) : std::runtime_error(what) {}
};

namespace net {

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    Socket& operator=(Socket&& other) noexcept {
        if (this != &other) {
            close_fd();
            fd_ = other.fd_;
            other.fd_ = -1;
        }
        return *this;
    }
    ~Socket() { close_fd(); }

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void close_fd() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
};

inline sockaddr_in make_addr(const std::string& host, int port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        throw BusError("bad host address: " + host);
    }
    return addr;
}

/// Bind + listen; returns the socket and the actual port (for port 0).
inline std::pair<Socket, int> listen_on(const std::string& host, int port,
                                        int backlog = 8) {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) {
        throw BusError("socket() failed");
    }
    const int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = make_addr(host, port);
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        throw BusError("bind() failed on " + host + ":" + std::to_string(port));
    }
    if (::listen(s.fd(), backlog) != 0) {
        throw BusError("listen() failed");
    }
    socklen_t len = sizeof addr;
    ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    return {std::move(s), ntohs(addr.sin_port)};
}

inline Socket connect_to(const std::string& host, int port) {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) {
        throw BusError("socket() failed");
    }
    sockaddr_in addr = make_addr(host, port);
    if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        throw BusError("connect() failed to " + host + ":" + std::to_string(port));
    }
    const int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return s;
}

inline void send_all(const Socket& s, const std::uint8_t* data, std::size_t len) {
    std::size_t sent = 0;
    while (sent < len) {
        const ssize_t n = ::send(s.fd(), data + sent, len - sent, MSG_NOSIGNAL);
        if (n <= 0) {
            throw BusError("send() failed");
        }
        sent += static_cast<std::size_t>(n);
    }
}

}  // namespace net

/// Arrival-time statistics for one topic against its expected period.
class RateSupervisor {
public:
    RateSupervisor(std::string topic, double expected_period, double tolerance = 0.5)
        : topic_(std::move(topic)),
          expected_period_(expected_period),
          tolerance_(tolerance) {}

    void feed(double t) {
        if (has_prev_) {
            const double period = t - prev_;
            periods_.push_back(period);
            if (period > expected_period_ * (1.0 + tolerance_)) {
                // count every missed slot, so a long stall shows its true size
                const auto missed =
                    static_cast<long>(std::lround(period / expected_period_)) - 1;
                overruns_ += std::max(1L, missed);
            }
        }
        has_prev_ = true;
        prev_ = t;
    }

    TopicRateStats report() const {
        TopicRateStats r;
        r.topic = topic_;
        r.expected_period = expected_period_;
        r.period = summarize(periods_);
        r.overruns = overruns_;
        return r;
    }

private:
    std::string topic_;
    double expected_period_;
    double tolerance_;
    std::vector<double> periods_;
    bool has_prev_ = false;
    double prev_ = 0.0;
    long overruns_ = 0;
};

/// Node-side endpoint: connects to the broker, announces a role, subscribes,
/// publishes sequence-stamped frames and tracks per-topic gaps on receive.
class BusClient {
public:
    BusClient(const std::string& host, int port, NodeRole role)
        : sock_(net::connect_to(host, port)), role_(role) {
        Envelope hello;
        hello.topic = static_cast<std::uint16_t>(Topic::hello);
        hello.seq = next_seq(hello.topic);
        hello.payload = encode_role(role);
        send_frame(hello);
    }

    void subscribe(const std::vector<Topic>& topics) {
        std::vector<std::uint16_t> ids;
        ids.reserve(topics.size());
        for (Topic t : topics) {
            ids.push_back(static_cast<std::uint16_t>(t));
        }
        Envelope env;
        env.topic = static_cast<std::uint16_t>(Topic::subscribe);
        env.seq = next_seq(env.topic);
        env.payload = encode_subscribe(ids);
        send_frame(env);
    }

    void publish(Topic topic, std::vector<std::uint8_t> payload,
                 std::uint64_t timestamp_ns) {
        Envelope env;
        env.topic = static_cast<std::uint16_t>(topic);
        env.seq = next_seq(env.topic);
        env.timestamp_ns = timestamp_ns;
        env.payload = std::move(payload);
        send_frame(env);
    }

    /// Reads whatever is available within the timeout; empty vector on quiet.
    /// Throws BusError when the broker goes away.
    std::vector<Envelope> poll(int timeout_ms) {
        pollfd pfd{sock_.fd(), POLLIN, 0};
        const int rc = ::poll(&pfd, 1, timeout_ms);
        if (rc < 0) {
            throw BusError("poll() failed");
        }
        if (rc == 0) {
            return {};
        }
        std::array<std::uint8_t, 65536> buf;
        const ssize_t n = ::recv(sock_.fd(), buf.data(), buf.size(), 0);
        if (n <= 0) {
            throw BusError("broker connection closed");
        }
        auto frames = reader_.feed(buf.data(), static_cast<std::size_t>(n));
        for (const Envelope& env : frames) {
            auto [it, fresh] = expected_seq_.try_emplace(env.topic, env.seq);
            if (!fresh) {
                if (env.seq > it->second + 1) {
                    gaps_ += env.seq - it->second - 1;
                }
                it->second = env.seq;
            }
        }
        return frames;
    }

    NodeRole role() const { return role_; }
    std::uint64_t sequence_gaps() const { return gaps_; }
    const FrameCounters& counters() const { return reader_.counters(); }

private:
    std::uint64_t next_seq(std::uint16_t topic) { return ++seq_[topic]; }

    void send_frame(const Envelope& env) {
        const auto bytes = encode_frame(env);
        net::send_all(sock_, bytes.data(), bytes.size());
    }

    net::Socket sock_;
    NodeRole role_;
    FrameReader reader_;
    std::map<std::uint16_t, std::uint64_t> seq_;
    std::map<std::uint16_t, std::uint64_t> expected_seq_;
    std::uint64_t gaps_ = 0;
};

struct BrokerResult {
    bool completed = false;
    bool node_down = false;
    std::string down_role;
    std::uint64_t frames_routed = 0;
    std::uint64_t crc_errors = 0;
    std::vector<TopicRateStats> rates;
};

/// Star-topology hub living in the harness process. Accepts one connection
/// per expected role, broadcasts the scenario, then drives the shared clock:
/// every node gets TICK(k), processes it, publishes, and answers TICK_ACK(k);
/// queued frames are delivered between ticks in a fixed role order, so an
/// accelerated run is deterministic. In real-time mode ticks are paced on the
/// wall clock and delivery is immediate.
class Broker {
public:
    struct Options {
        std::string host = "127.0.0.1";
        int port = 0;
        int expected_nodes = 3;
        double bus_tick = 0.05;
        double duration = 0.0;
        bool accelerated = true;
        int accept_timeout_ms = 10000;
        int ack_timeout_ms = 30000;
    };

    explicit Broker(const Options& opts) : opts_(opts) {
        auto [sock, port] = net::listen_on(opts.host, opts.port);
        listener_ = std::move(sock);
        port_ = port;
    }

    int port() const { return port_; }

    /// Accept all nodes, broadcast the config payload, run the clock to the
    /// end of the scenario (or until a node dies).
    BrokerResult run(const std::vector<std::uint8_t>& config_payload) {
        BrokerResult result;
        try {
            accept_nodes();
        } catch (const BusError&) {
            result.node_down = true;
            result.down_role = "accept-timeout";
            return result;
        }

        Envelope cfg;
        cfg.topic = static_cast<std::uint16_t>(Topic::config);
        cfg.seq = 1;
        cfg.payload = config_payload;
        broadcast(cfg);

        const auto t0 = std::chrono::steady_clock::now();
        const auto ticks =
            static_cast<std::uint64_t>(std::llround(opts_.duration / opts_.bus_tick));
        std::uint64_t k = 0;
        for (; k <= ticks; ++k) {
            if (!opts_.accelerated) {
                const auto due = t0 + std::chrono::duration_cast<
                                          std::chrono::steady_clock::duration>(
                                          std::chrono::duration<double>(
                                              static_cast<double>(k) * opts_.bus_tick));
                while (std::chrono::steady_clock::now() < due) {
                    if (!pump(1, /*deliver_immediately=*/true)) {
                        finish_node_down(result);
                        return result;
                    }
                }
            }
            TickPayload tick{k, static_cast<double>(k) * opts_.bus_tick};
            Envelope env;
            env.topic = static_cast<std::uint16_t>(Topic::tick);
            env.seq = k + 1;
            env.timestamp_ns = virtual_ns(tick.t);
            env.payload = encode_tick(tick);
            broadcast(env);

            if (!wait_for_acks(k, result)) {
                finish_node_down(result);
                return result;
            }
            deliver_queued();
        }

        Envelope bye;
        bye.topic = static_cast<std::uint16_t>(Topic::shutdown);
        bye.seq = 1;
        broadcast(bye);
        // let nodes drain and close
        pump(50, true);
        result.completed = true;
        collect_stats(result);
        return result;
    }

private:
    struct Connection {
        net::Socket sock;
        NodeRole role = NodeRole::sim;
        bool identified = false;
        bool alive = true;
        FrameReader reader;
        std::vector<std::uint16_t> subscriptions;
        std::uint64_t last_ack = std::uint64_t(-1);
    };

    static std::uint64_t virtual_ns(double t) {
        return static_cast<std::uint64_t>(t * 1e9);
    }

    void accept_nodes() {
        const auto deadline = std::chrono::steady_clock::now() +
                              std::chrono::milliseconds(opts_.accept_timeout_ms);
        while (identified_count() < opts_.expected_nodes) {
            if (std::chrono::steady_clock::now() > deadline) {
                throw BusError("timed out waiting for nodes");
            }
            pollfd pfd{listener_.fd(), POLLIN, 0};
            if (::poll(&pfd, 1, 100) > 0) {
                const int fd = ::accept(listener_.fd(), nullptr, nullptr);
                if (fd >= 0) {
                    const int one = 1;
                    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
                    Connection c;
                    c.sock = net::Socket(fd);
                    conns_.push_back(std::move(c));
                }
            }
            pump(1, false);  // pick up HELLO / SUBSCRIBE frames
        }
    }

    int identified_count() const {
        int n = 0;
        for (const auto& c : conns_) {
            n += c.identified ? 1 : 0;
        }
        return n;
    }

    void broadcast(const Envelope& env) {
        const auto bytes = encode_frame(env);
        for (auto& c : conns_) {
            if (!c.alive) {
                continue;
            }
            try {
                net::send_all(c.sock, bytes.data(), bytes.size());
            } catch (const BusError&) {
                c.alive = false;
            }
        }
    }

    /// Reads pending bytes from every node; routes or queues data frames.
    /// Returns false as soon as any identified node is gone.
    bool pump(int timeout_ms, bool deliver_immediately) {
        std::vector<pollfd> pfds;
        pfds.reserve(conns_.size());
        for (auto& c : conns_) {
            pfds.push_back({c.alive ? c.sock.fd() : -1, POLLIN, 0});
        }
        if (::poll(pfds.data(), pfds.size(), timeout_ms) < 0) {
            throw BusError("poll() failed");
        }
        bool all_alive = true;
        for (std::size_t i = 0; i < conns_.size(); ++i) {
            Connection& c = conns_[i];
            if (!c.alive || !(pfds[i].revents & (POLLIN | POLLHUP | POLLERR))) {
                continue;
            }
            std::array<std::uint8_t, 65536> buf;
            const ssize_t n = ::recv(c.sock.fd(), buf.data(), buf.size(), 0);
            if (n <= 0) {
                c.alive = false;
                if (c.identified) {
                    all_alive = false;
                    down_role_ = node_role_name(c.role);
                }
                continue;
            }
            for (Envelope& env : c.reader.feed(buf.data(), static_cast<std::size_t>(n))) {
                handle_frame(c, std::move(env), deliver_immediately);
            }
        }
        for (const auto& c : conns_) {
            if (c.identified && !c.alive) {
                all_alive = false;
            }
        }
        return all_alive;
    }

    void handle_frame(Connection& from, Envelope&& env, bool deliver_immediately) {
        const auto topic = static_cast<Topic>(env.topic);
        switch (topic) {
            case Topic::hello: {
                const auto role = decode_role(env.payload);
                if (role) {
                    from.role = *role;
                    from.identified = true;
                }
                return;
            }
            case Topic::subscribe: {
                const auto topics = decode_subscribe(env.payload);
                if (topics) {
                    from.subscriptions = *topics;
                }
                return;
            }
            case Topic::tick_ack: {
                const auto tick = decode_tick(env.payload);
                if (tick) {
                    from.last_ack = tick->index;
                }
                return;
            }
            default:
                break;
        }
        // data frame: rate bookkeeping, then route
        auto it = supervisors_.find(env.topic);
        if (it != supervisors_.end()) {
            it->second.feed(static_cast<double>(env.timestamp_ns) * 1e-9);
        }
        if (deliver_immediately) {
            route(env);
        } else {
            queue_.push_back(std::move(env));
        }
    }

    void route(const Envelope& env) {
        const auto bytes = encode_frame(env);
        // fixed delivery order keeps accelerated runs reproducible
        for (NodeRole role : {NodeRole::sim, NodeRole::controller, NodeRole::rw}) {
            for (auto& c : conns_) {
                if (!c.alive || !c.identified || c.role != role) {
                    continue;
                }
                if (std::find(c.subscriptions.begin(), c.subscriptions.end(),
                              env.topic) == c.subscriptions.end()) {
                    continue;
                }
                try {
                    net::send_all(c.sock, bytes.data(), bytes.size());
                    ++routed_;
                } catch (const BusError&) {
                    c.alive = false;
                }
            }
        }
    }

    void deliver_queued() {
        for (const Envelope& env : queue_) {
            route(env);
        }
        queue_.clear();
    }

    bool wait_for_acks(std::uint64_t k, BrokerResult&) {
        const auto deadline = std::chrono::steady_clock::now() +
                              std::chrono::milliseconds(opts_.ack_timeout_ms);
        while (true) {
            bool all = true;
            for (const auto& c : conns_) {
                if (c.identified && c.alive && c.last_ack != k) {
                    all = false;
                }
            }
            if (all) {
                return true;
            }
            if (!pump(5, false)) {
                return false;
            }
            if (std::chrono::steady_clock::now() > deadline) {
                down_role_ = "ack-timeout";
                return false;
            }
        }
    }

    void finish_node_down(BrokerResult& result) {
        Envelope env;
        env.topic = static_cast<std::uint16_t>(Topic::node_down);
        env.seq = 1;
        env.payload.assign(down_role_.begin(), down_role_.end());
        broadcast(env);
        Envelope bye;
        bye.topic = static_cast<std::uint16_t>(Topic::shutdown);
        bye.seq = 1;
        broadcast(bye);
        result.node_down = true;
        result.down_role = down_role_;
        collect_stats(result);
    }

    void collect_stats(BrokerResult& result) {
        result.frames_routed = routed_;
        for (const auto& c : conns_) {
            result.crc_errors += c.reader.counters().crc_errors();
        }
        for (const auto& [topic, sup] : supervisors_) {
            result.rates.push_back(sup.report());
        }
    }

public:
    /// Registers a per-topic arrival-rate check (publisher timestamps).
    void supervise(Topic topic, double expected_period, double tolerance = 0.5) {
        supervisors_.emplace(static_cast<std::uint16_t>(topic),
                             RateSupervisor(topic_name(topic), expected_period,
                                            tolerance));
    }

private:
    Options opts_;
    net::Socket listener_;
    int port_ = 0;
    std::vector<Connection> conns_;
    std::vector<Envelope> queue_;
    std::map<std::uint16_t, RateSupervisor> supervisors_;
    std::uint64_t routed_ = 0;
    std::string down_role_ = "unknown";
};

}  // namespace rwhil
