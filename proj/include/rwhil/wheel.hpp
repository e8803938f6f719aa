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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "rwhil/rng.hpp"

namespace rwhil {

/// Motor + driver model for one emulated reaction wheel.
struct WheelParams {
    double torque_constant = 0.0;       ///< K_t [N m / A]
    double inertia = 0.0;               ///< flywheel spin-axis inertia [kg m^2]
    double torque_max = 0.0;            ///< [N m]
    double speed_max = 0.0;             ///< [rad/s]
    double current_deadband = 0.0;      ///< driver dead zone [A]
    double velocity_loop_kp = 0.0;      ///< [N m per rad/s]
    double velocity_loop_ki = 0.0;      ///< [N m per rad]
    double telemetry_lowpass_hz = 0.0;  ///< driver-side tachometer filter cutoff
    double tach_noise_hi = 0.0;         ///< speed noise above the threshold [rad/s]
    double tach_noise_lo = 0.0;         ///< low-speed Hall-sensor noise [rad/s]
    double tach_noise_threshold = 0.0;  ///< [rad/s]
    double current_noise = 0.0;         ///< current-sense noise [A]
    double friction = 0.0;              ///< viscous coefficient b [N m s]

    double current_limit() const { return torque_max / torque_constant; }
};

enum class CommandMode : std::uint8_t { current = 0, velocity = 1 };

struct WheelCommand {
    CommandMode mode = CommandMode::velocity;
    double value = 0.0;  ///< [A] in current mode, [rad/s] in velocity mode
    int wheel = 0;
    double t = 0.0;
};

struct WheelState {
    double speed = 0.0;           ///< true wheel speed [rad/s]
    double vel_integrator = 0.0;  ///< velocity-loop integral of speed error [rad]
    double motor_torque = 0.0;    ///< applied (health-scaled) motor torque [N m]
    double health = 1.0;          ///< effectiveness in [0, 1]
    bool connected = true;
    double lowpass_speed = 0.0;   ///< telemetry filter state
    bool lowpass_init = false;
};

/// Driver current-to-torque map: dead below the deadband, then linear in K_t,
/// clamped at the torque limit.
inline double torque_from_current(double current, const WheelParams& p) {
    if (std::abs(current) <= p.current_deadband) {
        return 0.0;
    }
    return std::clamp(p.torque_constant * current, -p.torque_max, p.torque_max);
}

/// Sign-offset workaround for the deadband: shift the command past the dead
/// zone. Zero maps to zero.
inline double deadband_offset_compensation(double current, const WheelParams& p) {
    if (current == 0.0) {
        return 0.0;
    }
    return current + std::copysign(p.current_deadband, current);
}

/// PI speed loop with clamping anti-windup: the integrator freezes while the
/// torque output is saturated.
inline double velocity_loop(double speed_cmd, WheelState& w, const WheelParams& p,
                            double dt) {
    const double err = speed_cmd - w.speed;
    const double integ_candidate = w.vel_integrator + err * dt;
    const double unsat = p.velocity_loop_kp * err + p.velocity_loop_ki * integ_candidate;
    if (std::abs(unsat) <= p.torque_max) {
        w.vel_integrator = integ_candidate;
        return unsat;
    }
    const double held = p.velocity_loop_kp * err + p.velocity_loop_ki * w.vel_integrator;
    return std::clamp(held, -p.torque_max, p.torque_max);
}

/// Advance one wheel by dt under the latest command. Health scales the motor
/// torque; a disconnected wheel produces none and decays on friction alone.
inline void wheel_step(WheelState& w, const WheelCommand& c, const WheelParams& p,
                       double dt) {
    double motor = 0.0;
    if (w.connected) {
        switch (c.mode) {
            case CommandMode::current:
                motor = torque_from_current(c.value, p);
                break;
            case CommandMode::velocity:
                motor = velocity_loop(c.value, w, p, dt);
                break;
        }
        motor *= w.health;
    }
    w.motor_torque = motor;
    const double accel = (motor - p.friction * w.speed) / p.inertia;
    w.speed = std::clamp(w.speed + accel * dt, -p.speed_max, p.speed_max);
}

struct WheelTelemetry {
    double speed_meas = 0.0;    ///< [rad/s]
    double current_meas = 0.0;  ///< [A]
};

/// One telemetry sample: low-passed tachometer with speed-dependent noise,
/// and the sensed motor current with the driver's dead measurement zone
/// mirrored onto it. Pass rng = nullptr for noise-free output.
inline WheelTelemetry wheel_measure(WheelState& w, const WheelParams& p, Rng* rng,
                                    double dt) {
    if (!w.lowpass_init) {
        w.lowpass_speed = w.speed;
        w.lowpass_init = true;
    } else {
        const double alpha = 1.0 - std::exp(-2.0 * M_PI * p.telemetry_lowpass_hz * dt);
        w.lowpass_speed += alpha * (w.speed - w.lowpass_speed);
    }

    WheelTelemetry tlm;
    tlm.speed_meas = w.lowpass_speed;
    if (rng != nullptr) {
        const double noise = std::abs(w.speed) < p.tach_noise_threshold
                                 ? p.tach_noise_lo
                                 : p.tach_noise_hi;
        tlm.speed_meas += rng->gaussian(noise);
    }

    const double current = w.motor_torque / p.torque_constant;
    if (std::abs(current) < p.current_deadband) {
        tlm.current_meas = 0.0;
    } else {
        tlm.current_meas = current;
        if (rng != nullptr) {
            tlm.current_meas += rng->gaussian(p.current_noise);
        }
    }
    return tlm;
}

/// Reconstructs wheel angular acceleration from telemetry, either directly
/// from the current sense (inherits the dead zone) or by low-pass-filtered
/// numerical differentiation of the speed signal. The filtered difference
/// carries a group delay of roughly 1 / (2 pi f_c).
class AccelEstimator {
public:
    void push_speed(double t, double speed_meas) {
        history_.emplace_back(t, speed_meas);
        while (history_.size() > 4) {
            history_.pop_front();
        }
    }

    /// Backward difference of the speed history through a first-order filter.
    /// Empty until two samples have been seen.
    std::optional<double> diff_lowpass(double cutoff_hz) {
        if (history_.size() < 2) {
            return std::nullopt;
        }
        const auto& [t1, w1] = history_[history_.size() - 2];
        const auto& [t2, w2] = history_.back();
        const double raw = (w2 - w1) / (t2 - t1);
        if (!filter_init_) {
            filter_state_ = raw;
            filter_init_ = true;
        } else {
            const double alpha = 1.0 - std::exp(-2.0 * M_PI * cutoff_hz * (t2 - t1));
            filter_state_ += alpha * (raw - filter_state_);
        }
        return filter_state_;
    }

    static double current_based(double current_meas, const WheelParams& p) {
        return p.torque_constant * current_meas / p.inertia;
    }

private:
    std::deque<std::pair<double, double>> history_;
    double filter_state_ = 0.0;
    bool filter_init_ = false;
};

enum class FaultKind : std::uint8_t { scale = 0, disconnect = 1, reconnect = 2 };

/// Where a fault acts: scaling the command stream before it reaches the
/// device (the controller does not know), or degrading the device itself.
enum class FaultTarget : std::uint8_t { command = 0, device = 1 };

struct FaultEvent {
    double t = 0.0;
    int wheel = 0;
    FaultKind kind = FaultKind::scale;
    double value = 1.0;  ///< scale factor for FaultKind::scale
    FaultTarget target = FaultTarget::command;
};

/// Applies every device-target event with time <= t exactly once; `cursor`
/// carries the position between calls so per-tick application is idempotent.
inline int apply_fault_schedule(double t, const std::vector<FaultEvent>& schedule,
                                std::size_t& cursor, std::vector<WheelState>& wheels) {
    int applied = 0;
    while (cursor < schedule.size() && schedule[cursor].t <= t) {
        const FaultEvent& ev = schedule[cursor];
        ++cursor;
        if (ev.target != FaultTarget::device) {
            continue;
        }
        WheelState& w = wheels.at(static_cast<std::size_t>(ev.wheel));
        switch (ev.kind) {
            case FaultKind::scale:
                w.health = ev.value;
                break;
            case FaultKind::disconnect:
                w.connected = false;
                break;
            case FaultKind::reconnect:
                w.connected = true;
                break;
        }
        ++applied;
    }
    return applied;
}

}  // namespace rwhil
