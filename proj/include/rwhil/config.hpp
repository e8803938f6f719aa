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

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "rwhil/controller.hpp"
#include "rwhil/dynamics.hpp"
#include "rwhil/guidance.hpp"
#include "rwhil/mekf.hpp"
#include "rwhil/sensors.hpp"
#include "rwhil/wheel.hpp"

namespace rwhil {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class RunMode : std::uint8_t { mil = 0, distributed = 1 };

/// Where the simulator takes wheel accelerations from when it propagates the
/// equations of motion: the command stream itself (reference behavior), the
/// differentiated speed telemetry, or the current telemetry.
enum class WheelAccelSource : std::uint8_t {
    commanded = 0,
    differentiated = 1,
    current_based = 2,
};

struct TimingConfig {
    double dynamics_step = 0.01;     ///< truth integrator step [s]
    double bus_tick = 0.05;          ///< lockstep tick of the message bus [s]
    double control_period = 0.1;     ///< controller loop period [s]
    double telemetry_period = 0.05;  ///< wheel telemetry period [s]
};

struct BusConfig {
    std::string host = "127.0.0.1";
    int port = 0;  ///< 0: pick an ephemeral port
};

/// One file fully determines a run.
struct ScenarioConfig {
    int schema_version = 1;
    RunMode mode = RunMode::mil;
    bool accelerated = true;
    bool noise_enabled = true;
    CommandMode command_mode = CommandMode::velocity;
    bool deadband_compensation = false;  ///< current mode only: sign-offset shift
    WheelAccelSource accel_source = WheelAccelSource::commanded;

    // spacecraft
    Mat3 inertia = Mat3::Identity();
    double mass = 0.0;
    MatX wheel_axes;         ///< 3 x N, unit columns
    double wheel_inertia = 0.0;

    WheelParams wheel;
    double wheel_step = 0.01;  ///< device model substep [s]

    ControlGains gains;
    IclParams icl;

    SensorSuiteParams sensors;
    double ekf_init_attitude_std = 0.0;
    double ekf_init_bias_std = 0.0;
    double ekf_gate_chi2 = 0.0;

    OrbitModel orbit;
    GuidanceTimeline timeline;

    Vec3 sigma0 = Vec3::Zero();
    Vec3 omega0 = Vec3::Zero();
    VecX wheel_speed0;

    TimingConfig timing;
    std::uint64_t seed_sensors = 1;
    std::uint64_t seed_wheels = 2;

    std::vector<FaultEvent> faults;
    BusConfig bus;

    int wheel_count() const { return static_cast<int>(wheel_axes.cols()); }
};

/// Shipped defaults: the degraded-wheel scenario on the flight-like
/// parameter set (20 kg class satellite, four-wheel pyramid).
inline ScenarioConfig default_scenario() {
    ScenarioConfig c;
    c.inertia = Vec3(0.30, 0.42, 0.42).asDiagonal();
    c.mass = 20.0;
    const double a = 1.0 / std::sqrt(3.0);
    c.wheel_axes.resize(3, 4);
    c.wheel_axes << a, -a,  a, -a,
                    a,  a, -a, -a,
                    a,  a,  a,  a;
    c.wheel_inertia = 1.2e-4;

    c.wheel.torque_constant = 0.05;
    c.wheel.inertia = c.wheel_inertia;
    c.wheel.torque_max = 50e-3;
    c.wheel.speed_max = 366.0;
    c.wheel.current_deadband = 0.3;
    c.wheel.velocity_loop_kp = 0.01;
    c.wheel.velocity_loop_ki = 0.05;
    c.wheel.telemetry_lowpass_hz = 5.0;
    c.wheel.tach_noise_hi = 0.2;
    c.wheel.tach_noise_lo = 4.0;
    c.wheel.tach_noise_threshold = 20.0;
    c.wheel.current_noise = 0.01;
    c.wheel.friction = 1e-6;
    c.wheel_step = 0.01;

    c.gains.alpha = 3e-2 * Mat3::Identity();
    c.gains.beta = 5e-3;
    c.gains.k_fb = 1e-2 * Mat3::Identity();
    c.gains.gamma = 100.0 * MatX::Identity(4, 4);
    c.gains.k_icl = 1.0 * MatX::Identity(4, 4);
    c.gains.lambda_min = 1e-7;
    c.gains.theta_min = 0.05;
    c.gains.theta_max = 1.0;
    c.icl.window = 10.0;
    c.icl.capacity = 20;
    c.icl.admit_ratio = 0.01;

    c.sensors.gyro_rate_hz = 10.0;
    c.sensors.mag_rate_hz = 2.0;
    c.sensors.sun_rate_hz = 2.0;
    c.sensors.gyro_noise = 5e-4;
    c.sensors.gyro_bias_walk = 1e-6;
    c.sensors.gyro_bias0 = Vec3(2e-4, -1e-4, 1.5e-4);
    c.sensors.vector_noise = 5e-3;
    c.sensors.ref_mag = Vec3(1.0, 0.0, 0.0);
    c.sensors.ref_sun = Vec3(0.0, 0.0, 1.0);
    c.ekf_init_attitude_std = 0.5;
    c.ekf_init_bias_std = 1e-3;
    c.ekf_gate_chi2 = 16.27;

    c.orbit.rate = 0.0011;
    c.orbit.phase0 = 0.0;
    c.orbit.normal = Vec3(0.0, -1.0, 0.0);
    c.orbit.nadir_epoch = Vec3(0.0, 0.0, 1.0);
    c.timeline.duration = 4000.0;
    c.timeline.switch_period = 720.0;
    c.timeline.nadir_hold_after = 2000.0;

    c.sigma0 = Vec3(0.10, -0.08, 0.12);
    c.omega0 = Vec3::Zero();
    c.wheel_speed0 = VecX::Zero(4);
    c.wheel_speed0 << 100.0, -100.0, -100.0, 100.0;

    c.faults.push_back({0.0, 2, FaultKind::scale, 0.5, FaultTarget::command});
    return c;
}

inline SpacecraftParams spacecraft_params(const ScenarioConfig& c) {
    SpacecraftParams p;
    p.inertia = c.inertia;
    p.inertia_inv = c.inertia.inverse();
    p.mass = c.mass;
    p.wheel_axes = c.wheel_axes;
    p.wheel_inertia = c.wheel_inertia;
    p.wheel_speed_max = c.wheel.speed_max;
    return p;
}

inline MekfParams mekf_params(const ScenarioConfig& c) {
    MekfParams p;
    p.gyro_noise = c.sensors.gyro_noise;
    p.gyro_bias_walk = c.sensors.gyro_bias_walk;
    p.vector_noise = c.sensors.vector_noise;
    p.init_attitude_std = c.ekf_init_attitude_std;
    p.init_bias_std = c.ekf_init_bias_std;
    p.gate_chi2 = c.ekf_gate_chi2;
    return p;
}

namespace cfgdetail {

using nlohmann::json;

inline void require_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
        }
    }
}

inline Vec3 vec3_of(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) {
        throw ConfigError(where + " must be an array of 3 numbers");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline double positive(double v, const std::string& where) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError(where + " must be positive and finite");
    }
    return v;
}

template <typename T>
T get_or(const json& j, const std::string& key, const T& fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace cfgdetail

inline nlohmann::json config_to_json(const ScenarioConfig& c) {
    using nlohmann::json;
    json j;
    j["schema_version"] = c.schema_version;
    j["mode"] = c.mode == RunMode::mil ? "mil" : "distributed";
    j["accelerated"] = c.accelerated;
    j["noise"] = c.noise_enabled;
    j["command_mode"] =
        c.command_mode == CommandMode::velocity ? "velocity" : "current";
    j["deadband_compensation"] = c.deadband_compensation;
    switch (c.accel_source) {
        case WheelAccelSource::commanded: j["wheel_accel_source"] = "commanded"; break;
        case WheelAccelSource::differentiated:
            j["wheel_accel_source"] = "differentiated";
            break;
        case WheelAccelSource::current_based:
            j["wheel_accel_source"] = "current_based";
            break;
    }

    j["spacecraft"]["inertia_diag"] = {c.inertia(0, 0), c.inertia(1, 1),
                                       c.inertia(2, 2)};
    j["spacecraft"]["mass_kg"] = c.mass;
    json axes = json::array();
    for (int w = 0; w < c.wheel_count(); ++w) {
        axes.push_back({c.wheel_axes(0, w), c.wheel_axes(1, w), c.wheel_axes(2, w)});
    }
    j["spacecraft"]["wheel_axes"] = axes;
    j["spacecraft"]["wheel_inertia"] = c.wheel_inertia;

    j["wheels"] = {{"torque_constant", c.wheel.torque_constant},
                   {"torque_max", c.wheel.torque_max},
                   {"speed_max", c.wheel.speed_max},
                   {"current_deadband", c.wheel.current_deadband},
                   {"velocity_loop_kp", c.wheel.velocity_loop_kp},
                   {"velocity_loop_ki", c.wheel.velocity_loop_ki},
                   {"telemetry_lowpass_hz", c.wheel.telemetry_lowpass_hz},
                   {"tach_noise_hi", c.wheel.tach_noise_hi},
                   {"tach_noise_lo", c.wheel.tach_noise_lo},
                   {"tach_noise_threshold", c.wheel.tach_noise_threshold},
                   {"current_noise", c.wheel.current_noise},
                   {"friction", c.wheel.friction},
                   {"step_s", c.wheel_step}};

    j["gains"] = {{"alpha", c.gains.alpha(0, 0)},
                  {"beta", c.gains.beta},
                  {"k", c.gains.k_fb(0, 0)},
                  {"gamma", c.gains.gamma(0, 0)},
                  {"k_icl", c.gains.k_icl(0, 0)},
                  {"lambda_min", c.gains.lambda_min},
                  {"theta_min", c.gains.theta_min},
                  {"theta_max", c.gains.theta_max}};
    j["icl"] = {{"window_s", c.icl.window},
                {"capacity", c.icl.capacity},
                {"admit_ratio", c.icl.admit_ratio}};

    j["sensors"] = {{"gyro_rate_hz", c.sensors.gyro_rate_hz},
                    {"mag_rate_hz", c.sensors.mag_rate_hz},
                    {"sun_rate_hz", c.sensors.sun_rate_hz},
                    {"gyro_noise", c.sensors.gyro_noise},
                    {"gyro_bias_walk", c.sensors.gyro_bias_walk},
                    {"gyro_bias0",
                     {c.sensors.gyro_bias0.x(), c.sensors.gyro_bias0.y(),
                      c.sensors.gyro_bias0.z()}},
                    {"vector_noise", c.sensors.vector_noise},
                    {"ref_mag",
                     {c.sensors.ref_mag.x(), c.sensors.ref_mag.y(),
                      c.sensors.ref_mag.z()}},
                    {"ref_sun",
                     {c.sensors.ref_sun.x(), c.sensors.ref_sun.y(),
                      c.sensors.ref_sun.z()}}};
    j["ekf"] = {{"init_attitude_std", c.ekf_init_attitude_std},
                {"init_bias_std", c.ekf_init_bias_std},
                {"gate_chi2", c.ekf_gate_chi2}};

    j["orbit"] = {{"rate", c.orbit.rate},
                  {"phase0", c.orbit.phase0},
                  {"normal",
                   {c.orbit.normal.x(), c.orbit.normal.y(), c.orbit.normal.z()}},
                  {"nadir_epoch",
                   {c.orbit.nadir_epoch.x(), c.orbit.nadir_epoch.y(),
                    c.orbit.nadir_epoch.z()}}};
    j["guidance"] = {{"duration_s", c.timeline.duration},
                     {"switch_period_s", c.timeline.switch_period},
                     {"nadir_hold_after_s", c.timeline.nadir_hold_after}};

    j["initial"]["sigma"] = {c.sigma0.x(), c.sigma0.y(), c.sigma0.z()};
    j["initial"]["omega"] = {c.omega0.x(), c.omega0.y(), c.omega0.z()};
    json speeds = json::array();
    for (int w = 0; w < c.wheel_speed0.size(); ++w) {
        speeds.push_back(c.wheel_speed0[w]);
    }
    j["initial"]["wheel_speeds"] = speeds;

    j["timing"] = {{"dynamics_step_s", c.timing.dynamics_step},
                   {"bus_tick_s", c.timing.bus_tick},
                   {"control_period_s", c.timing.control_period},
                   {"telemetry_period_s", c.timing.telemetry_period}};
    j["seeds"] = {{"sensors", c.seed_sensors}, {"wheels", c.seed_wheels}};

    json faults = json::array();
    for (const auto& f : c.faults) {
        json ev;
        ev["t_s"] = f.t;
        ev["wheel"] = f.wheel;
        switch (f.kind) {
            case FaultKind::scale: ev["kind"] = "scale"; break;
            case FaultKind::disconnect: ev["kind"] = "disconnect"; break;
            case FaultKind::reconnect: ev["kind"] = "reconnect"; break;
        }
        ev["value"] = f.value;
        ev["target"] = f.target == FaultTarget::command ? "command" : "device";
        faults.push_back(ev);
    }
    j["faults"] = faults;
    j["bus"] = {{"host", c.bus.host}, {"port", c.bus.port}};
    return j;
}

inline ScenarioConfig config_from_json(const nlohmann::json& j) {
    using cfgdetail::get_or;
    using cfgdetail::positive;
    using cfgdetail::require_keys;
    using cfgdetail::vec3_of;
    using nlohmann::json;

    require_keys(j,
                 {"schema_version", "mode", "accelerated", "noise", "command_mode",
                  "deadband_compensation", "wheel_accel_source", "spacecraft",
                  "wheels", "gains", "icl", "sensors", "ekf", "orbit", "guidance",
                  "initial", "timing", "seeds", "faults", "bus"},
                 "top level");

    ScenarioConfig c = default_scenario();
    c.faults.clear();  // the default fault schedule never survives an explicit file

    c.schema_version = get_or(j, "schema_version", 1);
    if (c.schema_version != 1) {
        throw ConfigError("unsupported schema_version");
    }
    if (j.contains("mode")) {
        const auto m = j.at("mode").get<std::string>();
        if (m == "mil") {
            c.mode = RunMode::mil;
        } else if (m == "distributed" || m == "dist") {
            c.mode = RunMode::distributed;
        } else {
            throw ConfigError("mode must be 'mil' or 'distributed'");
        }
    }
    c.accelerated = get_or(j, "accelerated", c.accelerated);
    c.noise_enabled = get_or(j, "noise", c.noise_enabled);
    if (j.contains("command_mode")) {
        const auto m = j.at("command_mode").get<std::string>();
        if (m == "velocity") {
            c.command_mode = CommandMode::velocity;
        } else if (m == "current") {
            c.command_mode = CommandMode::current;
        } else {
            throw ConfigError("command_mode must be 'velocity' or 'current'");
        }
    }
    c.deadband_compensation = get_or(j, "deadband_compensation", false);
    if (j.contains("wheel_accel_source")) {
        const auto s = j.at("wheel_accel_source").get<std::string>();
        if (s == "commanded") {
            c.accel_source = WheelAccelSource::commanded;
        } else if (s == "differentiated") {
            c.accel_source = WheelAccelSource::differentiated;
        } else if (s == "current_based") {
            c.accel_source = WheelAccelSource::current_based;
        } else {
            throw ConfigError("unknown wheel_accel_source '" + s + "'");
        }
    }

    if (j.contains("spacecraft")) {
        const json& s = j.at("spacecraft");
        require_keys(s, {"inertia_diag", "mass_kg", "wheel_axes", "wheel_inertia"},
                     "spacecraft");
        if (s.contains("inertia_diag")) {
            const Vec3 d = vec3_of(s.at("inertia_diag"), "spacecraft.inertia_diag");
            for (int i = 0; i < 3; ++i) {
                positive(d[i], "spacecraft.inertia_diag");
            }
            c.inertia = d.asDiagonal();
        }
        c.mass = positive(get_or(s, "mass_kg", c.mass), "spacecraft.mass_kg");
        if (s.contains("wheel_axes")) {
            const json& axes = s.at("wheel_axes");
            if (!axes.is_array() || axes.size() < 3) {
                throw ConfigError("spacecraft.wheel_axes needs at least 3 wheels");
            }
            c.wheel_axes.resize(3, static_cast<long>(axes.size()));
            for (std::size_t w = 0; w < axes.size(); ++w) {
                Vec3 ax = vec3_of(axes[w], "spacecraft.wheel_axes");
                if (std::abs(ax.norm() - 1.0) > 1e-3) {
                    throw ConfigError("spacecraft.wheel_axes columns must be unit");
                }
                c.wheel_axes.col(static_cast<long>(w)) = ax.normalized();
            }
        }
        c.wheel_inertia = positive(get_or(s, "wheel_inertia", c.wheel_inertia),
                                   "spacecraft.wheel_inertia");
        c.wheel.inertia = c.wheel_inertia;
    }

    if (j.contains("wheels")) {
        const json& w = j.at("wheels");
        require_keys(w,
                     {"torque_constant", "torque_max", "speed_max",
                      "current_deadband", "velocity_loop_kp", "velocity_loop_ki",
                      "telemetry_lowpass_hz", "tach_noise_hi", "tach_noise_lo",
                      "tach_noise_threshold", "current_noise", "friction", "step_s"},
                     "wheels");
        c.wheel.torque_constant = positive(
            get_or(w, "torque_constant", c.wheel.torque_constant),
            "wheels.torque_constant");
        c.wheel.torque_max =
            positive(get_or(w, "torque_max", c.wheel.torque_max), "wheels.torque_max");
        c.wheel.speed_max =
            positive(get_or(w, "speed_max", c.wheel.speed_max), "wheels.speed_max");
        c.wheel.current_deadband = get_or(w, "current_deadband", c.wheel.current_deadband);
        if (c.wheel.current_deadband < 0.0) {
            throw ConfigError("wheels.current_deadband must be >= 0");
        }
        c.wheel.velocity_loop_kp = positive(
            get_or(w, "velocity_loop_kp", c.wheel.velocity_loop_kp),
            "wheels.velocity_loop_kp");
        c.wheel.velocity_loop_ki = positive(
            get_or(w, "velocity_loop_ki", c.wheel.velocity_loop_ki),
            "wheels.velocity_loop_ki");
        c.wheel.telemetry_lowpass_hz = positive(
            get_or(w, "telemetry_lowpass_hz", c.wheel.telemetry_lowpass_hz),
            "wheels.telemetry_lowpass_hz");
        c.wheel.tach_noise_hi = get_or(w, "tach_noise_hi", c.wheel.tach_noise_hi);
        c.wheel.tach_noise_lo = get_or(w, "tach_noise_lo", c.wheel.tach_noise_lo);
        c.wheel.tach_noise_threshold =
            get_or(w, "tach_noise_threshold", c.wheel.tach_noise_threshold);
        c.wheel.current_noise = get_or(w, "current_noise", c.wheel.current_noise);
        c.wheel.friction = get_or(w, "friction", c.wheel.friction);
        if (c.wheel.friction < 0.0) {
            throw ConfigError("wheels.friction must be >= 0");
        }
        c.wheel_step = positive(get_or(w, "step_s", c.wheel_step), "wheels.step_s");
        if (c.wheel.current_deadband * c.wheel.torque_constant >= c.wheel.torque_max) {
            throw ConfigError("deadband-equivalent torque exceeds torque_max");
        }
    }

    const int n = c.wheel_count();
    if (j.contains("gains")) {
        const json& g = j.at("gains");
        require_keys(g,
                     {"alpha", "beta", "k", "gamma", "k_icl", "lambda_min",
                      "theta_min", "theta_max"},
                     "gains");
        c.gains.alpha =
            positive(get_or(g, "alpha", c.gains.alpha(0, 0)), "gains.alpha") *
            Mat3::Identity();
        c.gains.beta = positive(get_or(g, "beta", c.gains.beta), "gains.beta");
        c.gains.k_fb =
            positive(get_or(g, "k", c.gains.k_fb(0, 0)), "gains.k") * Mat3::Identity();
        c.gains.gamma =
            positive(get_or(g, "gamma", c.gains.gamma(0, 0)), "gains.gamma") *
            MatX::Identity(n, n);
        c.gains.k_icl =
            positive(get_or(g, "k_icl", c.gains.k_icl(0, 0)), "gains.k_icl") *
            MatX::Identity(n, n);
        c.gains.lambda_min =
            positive(get_or(g, "lambda_min", c.gains.lambda_min), "gains.lambda_min");
        c.gains.theta_min = get_or(g, "theta_min", c.gains.theta_min);
        c.gains.theta_max = get_or(g, "theta_max", c.gains.theta_max);
    } else {
        c.gains.gamma = c.gains.gamma(0, 0) * MatX::Identity(n, n);
        c.gains.k_icl = c.gains.k_icl(0, 0) * MatX::Identity(n, n);
    }
    if (!(c.gains.theta_min >= 0.0 && c.gains.theta_min < c.gains.theta_max &&
          c.gains.theta_max <= 1.0)) {
        throw ConfigError("theta bounds must satisfy 0 <= min < max <= 1");
    }

    if (j.contains("icl")) {
        const json& i = j.at("icl");
        require_keys(i, {"window_s", "capacity", "admit_ratio"}, "icl");
        c.icl.window = positive(get_or(i, "window_s", c.icl.window), "icl.window_s");
        c.icl.capacity = get_or(i, "capacity", c.icl.capacity);
        if (c.icl.capacity < 1) {
            throw ConfigError("icl.capacity must be >= 1");
        }
        c.icl.admit_ratio = get_or(i, "admit_ratio", c.icl.admit_ratio);
        if (c.icl.admit_ratio < 0.0) {
            throw ConfigError("icl.admit_ratio must be >= 0");
        }
    }

    if (j.contains("sensors")) {
        const json& s = j.at("sensors");
        require_keys(s,
                     {"gyro_rate_hz", "mag_rate_hz", "sun_rate_hz", "gyro_noise",
                      "gyro_bias_walk", "gyro_bias0", "vector_noise", "ref_mag",
                      "ref_sun"},
                     "sensors");
        c.sensors.gyro_rate_hz = positive(
            get_or(s, "gyro_rate_hz", c.sensors.gyro_rate_hz), "sensors.gyro_rate_hz");
        c.sensors.mag_rate_hz = positive(
            get_or(s, "mag_rate_hz", c.sensors.mag_rate_hz), "sensors.mag_rate_hz");
        c.sensors.sun_rate_hz = positive(
            get_or(s, "sun_rate_hz", c.sensors.sun_rate_hz), "sensors.sun_rate_hz");
        c.sensors.gyro_noise = get_or(s, "gyro_noise", c.sensors.gyro_noise);
        c.sensors.gyro_bias_walk =
            get_or(s, "gyro_bias_walk", c.sensors.gyro_bias_walk);
        if (s.contains("gyro_bias0")) {
            c.sensors.gyro_bias0 = vec3_of(s.at("gyro_bias0"), "sensors.gyro_bias0");
        }
        c.sensors.vector_noise = get_or(s, "vector_noise", c.sensors.vector_noise);
        if (s.contains("ref_mag")) {
            c.sensors.ref_mag = vec3_of(s.at("ref_mag"), "sensors.ref_mag").normalized();
        }
        if (s.contains("ref_sun")) {
            c.sensors.ref_sun = vec3_of(s.at("ref_sun"), "sensors.ref_sun").normalized();
        }
        const double angle = std::acos(std::clamp(
            c.sensors.ref_mag.dot(c.sensors.ref_sun), -1.0, 1.0));
        if (angle < 10.0 * M_PI / 180.0 || angle > 170.0 * M_PI / 180.0) {
            throw ConfigError("sensor reference directions are nearly parallel");
        }
    }

    if (j.contains("ekf")) {
        const json& e = j.at("ekf");
        require_keys(e, {"init_attitude_std", "init_bias_std", "gate_chi2"}, "ekf");
        c.ekf_init_attitude_std = positive(
            get_or(e, "init_attitude_std", c.ekf_init_attitude_std),
            "ekf.init_attitude_std");
        c.ekf_init_bias_std = positive(
            get_or(e, "init_bias_std", c.ekf_init_bias_std), "ekf.init_bias_std");
        c.ekf_gate_chi2 = get_or(e, "gate_chi2", c.ekf_gate_chi2);
    }

    if (j.contains("orbit")) {
        const json& o = j.at("orbit");
        require_keys(o, {"rate", "phase0", "normal", "nadir_epoch"}, "orbit");
        c.orbit.rate = positive(get_or(o, "rate", c.orbit.rate), "orbit.rate");
        c.orbit.phase0 = get_or(o, "phase0", c.orbit.phase0);
        if (o.contains("normal")) {
            c.orbit.normal = vec3_of(o.at("normal"), "orbit.normal").normalized();
        }
        if (o.contains("nadir_epoch")) {
            c.orbit.nadir_epoch =
                vec3_of(o.at("nadir_epoch"), "orbit.nadir_epoch").normalized();
        }
        if (std::abs(c.orbit.normal.dot(c.orbit.nadir_epoch)) > 1e-6) {
            throw ConfigError("orbit.nadir_epoch must be orthogonal to orbit.normal");
        }
    }

    if (j.contains("guidance")) {
        const json& g = j.at("guidance");
        require_keys(g, {"duration_s", "switch_period_s", "nadir_hold_after_s"},
                     "guidance");
        c.timeline.duration = positive(
            get_or(g, "duration_s", c.timeline.duration), "guidance.duration_s");
        c.timeline.switch_period =
            positive(get_or(g, "switch_period_s", c.timeline.switch_period),
                     "guidance.switch_period_s");
        c.timeline.nadir_hold_after = positive(
            get_or(g, "nadir_hold_after_s", c.timeline.nadir_hold_after),
            "guidance.nadir_hold_after_s");
    }

    if (j.contains("initial")) {
        const json& i = j.at("initial");
        require_keys(i, {"sigma", "omega", "wheel_speeds"}, "initial");
        if (i.contains("sigma")) {
            c.sigma0 = vec3_of(i.at("sigma"), "initial.sigma");
        }
        if (i.contains("omega")) {
            c.omega0 = vec3_of(i.at("omega"), "initial.omega");
        }
        if (i.contains("wheel_speeds")) {
            const auto& speeds = i.at("wheel_speeds");
            if (static_cast<int>(speeds.size()) != n) {
                throw ConfigError("initial.wheel_speeds size must match wheel count");
            }
            c.wheel_speed0.resize(n);
            for (int w = 0; w < n; ++w) {
                c.wheel_speed0[w] = speeds[static_cast<std::size_t>(w)].get<double>();
            }
        }
    }
    if (c.wheel_speed0.size() != n) {
        c.wheel_speed0 = VecX::Zero(n);
    }
    if (c.wheel_speed0.cwiseAbs().maxCoeff() > c.wheel.speed_max) {
        throw ConfigError("initial wheel speeds exceed the speed limit");
    }

    if (j.contains("timing")) {
        const json& t = j.at("timing");
        require_keys(t,
                     {"dynamics_step_s", "bus_tick_s", "control_period_s",
                      "telemetry_period_s"},
                     "timing");
        c.timing.dynamics_step = positive(
            get_or(t, "dynamics_step_s", c.timing.dynamics_step),
            "timing.dynamics_step_s");
        c.timing.bus_tick =
            positive(get_or(t, "bus_tick_s", c.timing.bus_tick), "timing.bus_tick_s");
        c.timing.control_period =
            positive(get_or(t, "control_period_s", c.timing.control_period),
                     "timing.control_period_s");
        c.timing.telemetry_period =
            positive(get_or(t, "telemetry_period_s", c.timing.telemetry_period),
                     "timing.telemetry_period_s");
    }
    auto divides = [](double small, double big) {
        const double ratio = big / small;
        return std::abs(ratio - std::round(ratio)) < 1e-9;
    };
    if (!divides(c.timing.dynamics_step, c.timing.bus_tick) ||
        !divides(c.timing.bus_tick, c.timing.control_period) ||
        !divides(c.timing.bus_tick, c.timing.telemetry_period)) {
        throw ConfigError("timing periods must nest: dynamics | bus | control");
    }

    if (j.contains("seeds")) {
        const json& s = j.at("seeds");
        require_keys(s, {"sensors", "wheels"}, "seeds");
        c.seed_sensors = get_or<std::uint64_t>(s, "sensors", c.seed_sensors);
        c.seed_wheels = get_or<std::uint64_t>(s, "wheels", c.seed_wheels);
    }

    if (j.contains("faults")) {
        double prev_t = -1.0;
        for (const auto& ev : j.at("faults")) {
            require_keys(ev, {"t_s", "wheel", "kind", "value", "target"}, "faults[]");
            FaultEvent f;
            f.t = ev.at("t_s").get<double>();
            f.wheel = ev.at("wheel").get<int>();
            if (f.wheel < 0 || f.wheel >= n) {
                throw ConfigError("fault wheel index out of range");
            }
            const auto kind = ev.at("kind").get<std::string>();
            if (kind == "scale") {
                f.kind = FaultKind::scale;
                f.value = ev.at("value").get<double>();
                if (f.value < 0.0 || f.value > 1.0) {
                    throw ConfigError("fault scale must be in [0, 1]");
                }
            } else if (kind == "disconnect") {
                f.kind = FaultKind::disconnect;
            } else if (kind == "reconnect") {
                f.kind = FaultKind::reconnect;
            } else {
                throw ConfigError("unknown fault kind '" + kind + "'");
            }
            f.target = FaultTarget::command;
            if (ev.contains("target")) {
                const auto target = ev.at("target").get<std::string>();
                if (target == "device") {
                    f.target = FaultTarget::device;
                } else if (target != "command") {
                    throw ConfigError("fault target must be 'command' or 'device'");
                }
            }
            if (f.kind != FaultKind::scale) {
                f.target = FaultTarget::device;  // dis/reconnect act on the device
            }
            if (f.t < prev_t) {
                throw ConfigError("fault times must be non-decreasing");
            }
            prev_t = f.t;
            c.faults.push_back(f);
        }
    }

    if (j.contains("bus")) {
        const json& b = j.at("bus");
        require_keys(b, {"host", "port"}, "bus");
        c.bus.host = get_or<std::string>(b, "host", c.bus.host);
        c.bus.port = get_or(b, "port", c.bus.port);
        if (c.bus.port < 0 || c.bus.port > 65535) {
            throw ConfigError("bus.port out of range");
        }
    }

    return c;
}

/// Loads a scenario file (JSON, // and /* */ comments allowed).
inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) {
        throw ConfigError("cannot open config file: " + path);
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }
}

}  // namespace rwhil
