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

#include <chrono>
#include <memory>

#include "rwhil/config.hpp"
#include "rwhil/controller.hpp"
#include "rwhil/mekf.hpp"
#include "rwhil/runlog.hpp"
#include "rwhil/sensors.hpp"
#include "rwhil/topics.hpp"

namespace rwhil {

/// Outbound side of a node: the MIL runner and the socket client both
/// implement it. `t` is virtual run time; the adapter chooses the stamp.
class Publisher {
public:
    virtual ~Publisher() = default;
    virtual void publish(Topic topic, std::vector<std::uint8_t> payload, double t) = 0;
};

struct SimShardRow {
    double t = 0.0;
    Vec3 sigma, omega;
    VecX wheel_speed;
    Vec3 sigma_hat, omega_hat, sigma_d, omega_d, sigma_e, omega_err;
};

struct CtlShardRow {
    double t = 0.0;
    VecX u, cmd, theta_hat;
    double lambda = 0.0;
};

struct RwShardRow {
    double t = 0.0;
    VecX omega_meas, current_meas;
};

/// Satellite simulator: truth propagation, sensor models, attitude EKF, and
/// the wheel-state reconstruction that closes the loop for the equations of
/// motion.
class SimNode {
public:
    SimNode(const ScenarioConfig& cfg, Publisher& pub)
        : cfg_(cfg),
          pub_(pub),
          params_(spacecraft_params(cfg)),
          rig_(cfg.sensors, cfg.timing.dynamics_step),
          ekf_(mekf_init(mekf_params(cfg))),
          ekf_params_(mekf_params(cfg)),
          rng_(cfg.seed_sensors) {
        truth_.t = 0.0;
        truth_.sigma = cfg.sigma0;
        truth_.omega = cfg.omega0;
        truth_.wheel_speed = cfg.wheel_speed0;
        const int n = cfg.wheel_count();
        wheel_torque_ = VecX::Zero(n);
        health_ones_ = VecX::Ones(n);
        prev_cmd_speed_ = cfg.wheel_speed0;
        estimators_.resize(static_cast<std::size_t>(n));
        substeps_per_tick_ = static_cast<long>(
            std::llround(cfg.timing.bus_tick / cfg.timing.dynamics_step));
        ctl_substeps_ = static_cast<long>(
            std::llround(cfg.timing.control_period / cfg.timing.dynamics_step));
    }

    void handle(const Envelope& env) {
        switch (static_cast<Topic>(env.topic)) {
            case Topic::rw_cmd: {
                const auto cmd = decode_rw_cmd(env.payload);
                if (cmd) {
                    on_command(*cmd);
                }
                break;
            }
            case Topic::rw_state: {
                const auto st = decode_rw_state(env.payload);
                if (st) {
                    on_telemetry(*st);
                }
                break;
            }
            default:
                break;
        }
    }

    void on_tick(std::uint64_t, double t) {
        for (long i = 0; i < substeps_per_tick_; ++i) {
            const long substep = substep_count_++;
            // sensors and estimation act on the state at the current substep
            for (const SensorSample& s :
                 rig_.poll(truth_, substep, cfg_.noise_enabled ? &rng_ : nullptr)) {
                process_sensor(s);
            }
            if (substep % ctl_substeps_ == 0) {
                publish_estimates(truth_.t);
            }
            truth_ = rk4_step(truth_, wheel_torque_, health_ones_, params_,
                              cfg_.timing.dynamics_step);
        }
        (void)t;
    }

    const std::vector<SimShardRow>& shard() const { return shard_; }
    const BodyState& truth() const { return truth_; }

private:
    void process_sensor(const SensorSample& s) {
        if (s.kind == SensorKind::gyro) {
            if (has_gyro_) {
                mekf_predict(ekf_, s.value, s.t - last_gyro_t_, ekf_params_);
            }
            last_gyro_ = s.value;
            last_gyro_t_ = s.t;
            has_gyro_ = true;
        } else {
            const Vec3& ref = s.kind == SensorKind::mag ? cfg_.sensors.ref_mag
                                                        : cfg_.sensors.ref_sun;
            mekf_update(ekf_, s.value, ref, ekf_params_);
        }
    }

    void publish_estimates(double t) {
        const auto est = estimated_outputs(ekf_, last_gyro_);
        const GuidanceSample target = guidance(t, cfg_.timeline, cfg_.orbit);

        EstStatePayload msg;
        msg.t = t;
        msg.sigma_hat = est.sigma_hat;
        msg.omega_hat = est.omega_hat;
        msg.sigma_d = target.sigma_d;
        msg.omega_d = target.omega_d;
        msg.omega_dot_d = target.omega_dot_d;
        pub_.publish(Topic::est_state, encode_est_state(msg), t);

        SimShardRow row;
        row.t = t;
        row.sigma = truth_.sigma;
        row.omega = truth_.omega;
        row.wheel_speed = truth_.wheel_speed;
        row.sigma_hat = est.sigma_hat;
        row.omega_hat = est.omega_hat;
        row.sigma_d = target.sigma_d;
        row.omega_d = target.omega_d;
        const auto err = attitude_error(truth_.sigma, target.sigma_d, truth_.omega,
                                        target.omega_d);
        row.sigma_e = err.sigma_e;
        row.omega_err = err.omega_err;
        shard_.push_back(std::move(row));
    }

    void on_command(const RwCmdPayload& cmd) {
        if (cfg_.accel_source != WheelAccelSource::commanded) {
            return;  // wheel states come from telemetry instead
        }
        const int n = cfg_.wheel_count();
        for (int i = 0; i < n && i < cmd.value.size(); ++i) {
            double implied = 0.0;
            if (cmd.mode == CommandMode::velocity) {
                implied = cfg_.wheel_inertia * (cmd.value[i] - prev_cmd_speed_[i]) /
                          cfg_.timing.control_period;
                prev_cmd_speed_[i] = cmd.value[i];
            } else {
                implied = torque_from_current(cmd.value[i], cfg_.wheel);
            }
            wheel_torque_[i] = -implied;  // reaction torque on the body
        }
    }

    void on_telemetry(const RwStatePayload& st) {
        if (cfg_.accel_source == WheelAccelSource::commanded) {
            return;
        }
        const int n = cfg_.wheel_count();
        for (int i = 0; i < n && i < st.omega_meas.size(); ++i) {
            // measured speeds feed the propagation directly...
            truth_.wheel_speed[i] = st.omega_meas[i];
            // ...and accelerations are reconstructed from telemetry
            if (cfg_.accel_source == WheelAccelSource::differentiated) {
                auto& est = estimators_[static_cast<std::size_t>(i)];
                est.push_speed(st.t, st.omega_meas[i]);
                const auto accel = est.diff_lowpass(cfg_.wheel.telemetry_lowpass_hz);
                wheel_torque_[i] = accel ? -cfg_.wheel_inertia * *accel : 0.0;
            } else {
                wheel_torque_[i] =
                    -cfg_.wheel.torque_constant * st.current_meas[i];
            }
        }
    }

    ScenarioConfig cfg_;
    Publisher& pub_;
    SpacecraftParams params_;
    BodyState truth_;
    SensorRig rig_;
    EkfState ekf_;
    MekfParams ekf_params_;
    Rng rng_;
    Vec3 last_gyro_ = Vec3::Zero();
    double last_gyro_t_ = 0.0;
    bool has_gyro_ = false;
    VecX wheel_torque_;
    VecX health_ones_;
    VecX prev_cmd_speed_;
    std::vector<AccelEstimator> estimators_;
    long substeps_per_tick_ = 1;
    long ctl_substeps_ = 1;
    long substep_count_ = 0;
    std::vector<SimShardRow> shard_;
};

/// Adaptive controller node: control law, allocation, health adaptation,
/// command conversion and fault induction.
class CtlNode {
public:
    CtlNode(const ScenarioConfig& cfg, Publisher& pub)
        : cfg_(cfg),
          pub_(pub),
          params_(spacecraft_params(cfg)),
          history_(cfg.wheel_count()) {
        const int n = cfg.wheel_count();
        theta_hat_ = VecX::Ones(n) * cfg.gains.theta_max;
        speed_cmd_ = cfg.wheel_speed0;
        latest_wheel_speed_ = cfg.wheel_speed0;
        ticks_per_ctl_ = static_cast<long>(
            std::llround(cfg.timing.control_period / cfg.timing.bus_tick));
    }

    void handle(const Envelope& env) {
        switch (static_cast<Topic>(env.topic)) {
            case Topic::est_state: {
                const auto est = decode_est_state(env.payload);
                if (est) {
                    latest_est_ = *est;
                    has_est_ = true;
                }
                break;
            }
            case Topic::rw_state: {
                const auto st = decode_rw_state(env.payload);
                if (st && st->omega_meas.size() == latest_wheel_speed_.size()) {
                    latest_wheel_speed_ = st->omega_meas;
                }
                break;
            }
            default:
                break;
        }
    }

    void on_tick(std::uint64_t k, double t) {
        if (k % static_cast<std::uint64_t>(ticks_per_ctl_) != 0 || !has_est_) {
            return;
        }
        const auto t_start = std::chrono::steady_clock::now();

        GuidanceSample target;
        target.sigma_d = latest_est_.sigma_d;
        target.omega_d = latest_est_.omega_d;
        target.omega_dot_d = latest_est_.omega_dot_d;
        const ErrorTerms terms = compute_error_terms(
            latest_est_.sigma_hat, latest_est_.omega_hat, target, cfg_.gains);
        const Vec3 u_d = aux_control(terms, latest_est_.omega_hat,
                                     latest_wheel_speed_, target, params_, cfg_.gains);
        const VecX u = allocate(u_d, theta_hat_, params_.wheel_axes);

        buffer_.push_back({t, latest_est_.omega_hat, latest_wheel_speed_, u});
        while (buffer_.front().t < t - cfg_.icl.window - 2.0 * cfg_.timing.control_period) {
            buffer_.pop_front();
        }
        icl_accumulate(buffer_, params_, cfg_.icl, history_);
        theta_hat_ = adaptation_step(theta_hat_, terms, u, params_, history_,
                                     cfg_.gains, cfg_.timing.control_period);

        const VecX u_faulted = induce_command_fault(u, cfg_.faults, t);
        const int n = cfg_.wheel_count();
        RwCmdPayload cmd;
        cmd.t = t;
        cmd.mode = cfg_.command_mode;
        cmd.value = VecX::Zero(n);
        for (int i = 0; i < n; ++i) {
            const double tau_cmd = wheel_torque_command(u_faulted[i]);
            if (cfg_.command_mode == CommandMode::current) {
                double current = torque_to_current_cmd(tau_cmd, cfg_.wheel);
                if (cfg_.deadband_compensation) {
                    current = deadband_offset_compensation(current, cfg_.wheel);
                }
                cmd.value[i] = current;
            } else {
                cmd.value[i] =
                    torque_to_velocity_cmd(tau_cmd, speed_cmd_[i], cfg_.wheel,
                                           cfg_.timing.control_period);
            }
        }
        const VecX scales = command_fault_scales(cfg_.faults, t, n);
        for (int i = 0; i < n; ++i) {
            if (scales[i] != 1.0) {
                cmd.fault_mask |= 1u << i;
            }
        }
        pub_.publish(Topic::rw_cmd, encode_rw_cmd(cmd), t);

        HealthTlmPayload tlm;
        tlm.t = t;
        tlm.theta_hat = theta_hat_;
        tlm.lambda = history_.lambda;
        pub_.publish(Topic::health_tlm, encode_health_tlm(tlm), t);

        CtlShardRow row;
        row.t = t;
        row.u = u;
        row.cmd = cmd.value;
        row.theta_hat = theta_hat_;
        row.lambda = history_.lambda;
        shard_.push_back(std::move(row));

        const auto elapsed = std::chrono::steady_clock::now() - t_start;
        step_ms_.push_back(
            std::chrono::duration<double, std::milli>(elapsed).count());
    }

    const std::vector<CtlShardRow>& shard() const { return shard_; }
    const std::vector<double>& step_times_ms() const { return step_ms_; }
    const VecX& theta_hat() const { return theta_hat_; }
    double lambda() const { return history_.lambda; }

private:
    ScenarioConfig cfg_;
    Publisher& pub_;
    SpacecraftParams params_;
    VecX theta_hat_;
    IclHistory history_;
    std::deque<ControlSample> buffer_;
    VecX speed_cmd_;
    VecX latest_wheel_speed_;
    EstStatePayload latest_est_;
    bool has_est_ = false;
    long ticks_per_ctl_ = 1;
    std::vector<CtlShardRow> shard_;
    std::vector<double> step_ms_;
};

/// Virtual reaction-wheel device node: per-wheel motor/driver emulation and
/// 20 Hz telemetry.
class RwNode {
public:
    RwNode(const ScenarioConfig& cfg, Publisher& pub)
        : cfg_(cfg), pub_(pub), rng_(cfg.seed_wheels) {
        const int n = cfg.wheel_count();
        wheels_.resize(static_cast<std::size_t>(n));
        commands_.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            wheels_[static_cast<std::size_t>(i)].speed = cfg.wheel_speed0[i];
            // hold the spin-up speed until the first real command
            commands_[static_cast<std::size_t>(i)] = {
                cfg.command_mode,
                cfg.command_mode == CommandMode::velocity ? cfg.wheel_speed0[i] : 0.0,
                i, 0.0};
        }
        substeps_per_tick_ =
            static_cast<long>(std::llround(cfg.timing.bus_tick / cfg.wheel_step));
        ticks_per_tlm_ = static_cast<long>(
            std::llround(cfg.timing.telemetry_period / cfg.timing.bus_tick));
    }

    void handle(const Envelope& env) {
        if (static_cast<Topic>(env.topic) != Topic::rw_cmd) {
            return;
        }
        const auto cmd = decode_rw_cmd(env.payload);
        if (!cmd) {
            return;
        }
        for (int i = 0; i < static_cast<int>(wheels_.size()) && i < cmd->value.size();
             ++i) {
            commands_[static_cast<std::size_t>(i)] = {cmd->mode, cmd->value[i], i,
                                                      cmd->t};
        }
    }

    void on_tick(std::uint64_t k, double t) {
        apply_fault_schedule(t, cfg_.faults, fault_cursor_, wheels_);

        if (k % static_cast<std::uint64_t>(ticks_per_tlm_) == 0) {
            publish_telemetry(t);
        }
        for (long s = 0; s < substeps_per_tick_; ++s) {
            for (std::size_t i = 0; i < wheels_.size(); ++i) {
                wheel_step(wheels_[i], commands_[i], cfg_.wheel, cfg_.wheel_step);
            }
        }
    }

    const std::vector<RwShardRow>& shard() const { return shard_; }
    const std::vector<WheelState>& wheels() const { return wheels_; }

private:
    void publish_telemetry(double t) {
        const int n = static_cast<int>(wheels_.size());
        RwStatePayload msg;
        msg.t = t;
        msg.omega_meas = VecX::Zero(n);
        msg.current_meas = VecX::Zero(n);
        Rng* rng = cfg_.noise_enabled ? &rng_ : nullptr;
        for (int i = 0; i < n; ++i) {
            const auto tlm = wheel_measure(wheels_[static_cast<std::size_t>(i)],
                                           cfg_.wheel, rng,
                                           cfg_.timing.telemetry_period);
            msg.omega_meas[i] = tlm.speed_meas;
            msg.current_meas[i] = tlm.current_meas;
        }
        pub_.publish(Topic::rw_state, encode_rw_state(msg), t);

        RwShardRow row;
        row.t = t;
        row.omega_meas = msg.omega_meas;
        row.current_meas = msg.current_meas;
        shard_.push_back(std::move(row));
    }

    ScenarioConfig cfg_;
    Publisher& pub_;
    Rng rng_;
    std::vector<WheelState> wheels_;
    std::vector<WheelCommand> commands_;
    std::size_t fault_cursor_ = 0;
    long substeps_per_tick_ = 1;
    long ticks_per_tlm_ = 1;
    std::vector<RwShardRow> shard_;
};

/// Joins the three node shards into the run log on the simulator cadence;
/// each row carries the latest controller and telemetry values at or before
/// its timestamp.
inline RunLog merge_shards(const std::vector<SimShardRow>& sim,
                           const std::vector<CtlShardRow>& ctl,
                           const std::vector<RwShardRow>& rw, int n_wheels) {
    RunLog log;
    log.n_wheels = n_wheels;
    std::size_t ci = 0, ri = 0;
    CtlShardRow last_ctl;
    last_ctl.u = VecX::Zero(n_wheels);
    last_ctl.cmd = VecX::Zero(n_wheels);
    last_ctl.theta_hat = VecX::Ones(n_wheels);
    RwShardRow last_rw;
    last_rw.omega_meas = VecX::Zero(n_wheels);
    last_rw.current_meas = VecX::Zero(n_wheels);
    bool have_rw = false;

    for (const SimShardRow& s : sim) {
        while (ci < ctl.size() && ctl[ci].t <= s.t + 1e-9) {
            last_ctl = ctl[ci++];
        }
        while (ri < rw.size() && rw[ri].t <= s.t + 1e-9) {
            last_rw = rw[ri++];
            have_rw = true;
        }
        RunRow r;
        r.t = s.t;
        r.sigma = s.sigma;
        r.omega = s.omega;
        r.wheel_speed = s.wheel_speed;
        r.sigma_hat = s.sigma_hat;
        r.omega_hat = s.omega_hat;
        r.sigma_d = s.sigma_d;
        r.omega_d = s.omega_d;
        r.sigma_e = s.sigma_e;
        r.omega_err = s.omega_err;
        r.u = last_ctl.u;
        r.cmd = last_ctl.cmd;
        r.theta_hat = last_ctl.theta_hat;
        r.lambda = last_ctl.lambda;
        r.omega_meas = have_rw ? last_rw.omega_meas : s.wheel_speed;
        r.current_meas = last_rw.current_meas;
        log.rows.push_back(std::move(r));
    }
    return log;
}

}  // namespace rwhil
