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

#include <optional>
#include <string>

#include "rwhil/attitude.hpp"
#include "rwhil/wheel.hpp"
#include "rwhil/wire.hpp"

namespace rwhil {

/// Topic ids are part of the wire contract. 1-9 carry run data, 10-19 are
/// liveness, 30+ are broker control traffic.
enum class Topic : std::uint16_t {
    config = 1,      ///< harness -> all, full scenario as canonical JSON
    est_state = 2,   ///< simulator -> controller
    rw_cmd = 3,      ///< controller -> wheel node
    rw_state = 4,    ///< wheel node -> controller and simulator
    health_tlm = 5,  ///< controller -> simulator/logger
    heartbeat = 10,
    hello = 30,
    subscribe = 31,
    tick = 32,
    tick_ack = 33,
    node_down = 34,
    shutdown = 35,
};

inline bool topic_known(std::uint16_t id) {
    switch (static_cast<Topic>(id)) {
        case Topic::config:
        case Topic::est_state:
        case Topic::rw_cmd:
        case Topic::rw_state:
        case Topic::health_tlm:
        case Topic::heartbeat:
        case Topic::hello:
        case Topic::subscribe:
        case Topic::tick:
        case Topic::tick_ack:
        case Topic::node_down:
        case Topic::shutdown:
            return true;
    }
    return false;
}

inline const char* topic_name(Topic t) {
    switch (t) {
        case Topic::config: return "CONFIG";
        case Topic::est_state: return "EST_STATE";
        case Topic::rw_cmd: return "RW_CMD";
        case Topic::rw_state: return "RW_STATE";
        case Topic::health_tlm: return "HEALTH_TLM";
        case Topic::heartbeat: return "HEARTBEAT";
        case Topic::hello: return "HELLO";
        case Topic::subscribe: return "SUBSCRIBE";
        case Topic::tick: return "TICK";
        case Topic::tick_ack: return "TICK_ACK";
        case Topic::node_down: return "NODE_DOWN";
        case Topic::shutdown: return "SHUTDOWN";
    }
    return "UNKNOWN";
}

enum class NodeRole : std::uint8_t { sim = 0, controller = 1, rw = 2 };

inline const char* node_role_name(NodeRole r) {
    switch (r) {
        case NodeRole::sim: return "sim";
        case NodeRole::controller: return "controller";
        case NodeRole::rw: return "rw";
    }
    return "unknown";
}

struct EstStatePayload {
    double t = 0.0;
    Vec3 sigma_hat = Vec3::Zero();
    Vec3 omega_hat = Vec3::Zero();
    Vec3 sigma_d = Vec3::Zero();
    Vec3 omega_d = Vec3::Zero();
    Vec3 omega_dot_d = Vec3::Zero();
};

struct RwCmdPayload {
    double t = 0.0;
    CommandMode mode = CommandMode::velocity;
    VecX value;  ///< [A] or [rad/s] per wheel
    std::uint32_t fault_mask = 0;
};

struct RwStatePayload {
    double t = 0.0;
    VecX omega_meas;
    VecX current_meas;
};

struct HealthTlmPayload {
    double t = 0.0;
    VecX theta_hat;
    double lambda = 0.0;
};

struct TickPayload {
    std::uint64_t index = 0;
    double t = 0.0;
};

namespace detail {
inline void put_vec3(std::vector<std::uint8_t>& out, const Vec3& v) {
    wire::put_f64(out, v.x());
    wire::put_f64(out, v.y());
    wire::put_f64(out, v.z());
}
inline Vec3 get_vec3(const std::uint8_t* p) {
    return {wire::get_f64(p), wire::get_f64(p + 8), wire::get_f64(p + 16)};
}
}  // namespace detail

inline std::vector<std::uint8_t> encode_est_state(const EstStatePayload& m) {
    std::vector<std::uint8_t> out;
    out.reserve(16 * 8);
    wire::put_f64(out, m.t);
    detail::put_vec3(out, m.sigma_hat);
    detail::put_vec3(out, m.omega_hat);
    detail::put_vec3(out, m.sigma_d);
    detail::put_vec3(out, m.omega_d);
    detail::put_vec3(out, m.omega_dot_d);
    return out;
}

inline std::optional<EstStatePayload> decode_est_state(const std::vector<std::uint8_t>& p) {
    if (p.size() != 16 * 8) {
        return std::nullopt;
    }
    EstStatePayload m;
    m.t = wire::get_f64(p.data());
    m.sigma_hat = detail::get_vec3(p.data() + 8);
    m.omega_hat = detail::get_vec3(p.data() + 32);
    m.sigma_d = detail::get_vec3(p.data() + 56);
    m.omega_d = detail::get_vec3(p.data() + 80);
    m.omega_dot_d = detail::get_vec3(p.data() + 104);
    return m;
}

inline std::vector<std::uint8_t> encode_rw_cmd(const RwCmdPayload& m) {
    std::vector<std::uint8_t> out;
    wire::put_f64(out, m.t);
    out.push_back(static_cast<std::uint8_t>(m.mode));
    for (int i = 0; i < m.value.size(); ++i) {
        wire::put_f64(out, m.value[i]);
    }
    wire::put_u32(out, m.fault_mask);
    return out;
}

inline std::optional<RwCmdPayload> decode_rw_cmd(const std::vector<std::uint8_t>& p) {
    if (p.size() < 13 || (p.size() - 13) % 8 != 0) {
        return std::nullopt;
    }
    RwCmdPayload m;
    m.t = wire::get_f64(p.data());
    const std::uint8_t mode = p[8];
    if (mode > 1) {
        return std::nullopt;
    }
    m.mode = static_cast<CommandMode>(mode);
    const auto n = (p.size() - 13) / 8;
    m.value.resize(static_cast<long>(n));
    for (std::size_t i = 0; i < n; ++i) {
        m.value[static_cast<long>(i)] = wire::get_f64(p.data() + 9 + 8 * i);
    }
    m.fault_mask = wire::get_u32(p.data() + 9 + 8 * n);
    return m;
}

inline std::vector<std::uint8_t> encode_rw_state(const RwStatePayload& m) {
    std::vector<std::uint8_t> out;
    wire::put_f64(out, m.t);
    for (int i = 0; i < m.omega_meas.size(); ++i) {
        wire::put_f64(out, m.omega_meas[i]);
    }
    for (int i = 0; i < m.current_meas.size(); ++i) {
        wire::put_f64(out, m.current_meas[i]);
    }
    return out;
}

inline std::optional<RwStatePayload> decode_rw_state(const std::vector<std::uint8_t>& p) {
    if (p.size() < 8 || (p.size() - 8) % 16 != 0) {
        return std::nullopt;
    }
    RwStatePayload m;
    m.t = wire::get_f64(p.data());
    const auto n = (p.size() - 8) / 16;
    m.omega_meas.resize(static_cast<long>(n));
    m.current_meas.resize(static_cast<long>(n));
    for (std::size_t i = 0; i < n; ++i) {
        m.omega_meas[static_cast<long>(i)] = wire::get_f64(p.data() + 8 + 8 * i);
        m.current_meas[static_cast<long>(i)] = wire::get_f64(p.data() + 8 + 8 * (n + i));
    }
    return m;
}

inline std::vector<std::uint8_t> encode_health_tlm(const HealthTlmPayload& m) {
    std::vector<std::uint8_t> out;
    wire::put_f64(out, m.t);
    for (int i = 0; i < m.theta_hat.size(); ++i) {
        wire::put_f64(out, m.theta_hat[i]);
    }
    wire::put_f64(out, m.lambda);
    return out;
}

inline std::optional<HealthTlmPayload> decode_health_tlm(const std::vector<std::uint8_t>& p) {
    if (p.size() < 16 || (p.size() - 16) % 8 != 0) {
        return std::nullopt;
    }
    HealthTlmPayload m;
    m.t = wire::get_f64(p.data());
    const auto n = (p.size() - 16) / 8;
    m.theta_hat.resize(static_cast<long>(n));
    for (std::size_t i = 0; i < n; ++i) {
        m.theta_hat[static_cast<long>(i)] = wire::get_f64(p.data() + 8 + 8 * i);
    }
    m.lambda = wire::get_f64(p.data() + 8 + 8 * n);
    return m;
}

inline std::vector<std::uint8_t> encode_tick(const TickPayload& m) {
    std::vector<std::uint8_t> out;
    wire::put_u64(out, m.index);
    wire::put_f64(out, m.t);
    return out;
}

inline std::optional<TickPayload> decode_tick(const std::vector<std::uint8_t>& p) {
    if (p.size() != 16) {
        return std::nullopt;
    }
    TickPayload m;
    m.index = wire::get_u64(p.data());
    m.t = wire::get_f64(p.data() + 8);
    return m;
}

inline std::vector<std::uint8_t> encode_role(NodeRole role) {
    return {static_cast<std::uint8_t>(role)};
}

inline std::optional<NodeRole> decode_role(const std::vector<std::uint8_t>& p) {
    if (p.size() != 1 || p[0] > 2) {
        return std::nullopt;
    }
    return static_cast<NodeRole>(p[0]);
}

inline std::vector<std::uint8_t> encode_subscribe(const std::vector<std::uint16_t>& topics) {
    std::vector<std::uint8_t> out;
    wire::put_u16(out, static_cast<std::uint16_t>(topics.size()));
    for (std::uint16_t t : topics) {
        wire::put_u16(out, t);
    }
    return out;
}

inline std::optional<std::vector<std::uint16_t>> decode_subscribe(
    const std::vector<std::uint8_t>& p) {
    if (p.size() < 2) {
        return std::nullopt;
    }
    const std::uint16_t count = wire::get_u16(p.data());
    if (p.size() != 2u + 2u * count) {
        return std::nullopt;
    }
    std::vector<std::uint16_t> topics(count);
    for (std::uint16_t i = 0; i < count; ++i) {
        topics[i] = wire::get_u16(p.data() + 2 + 2 * i);
    }
    return topics;
}

}  // namespace rwhil
