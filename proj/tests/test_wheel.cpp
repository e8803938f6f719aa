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

#include <catch2/catch_amalgamated.hpp>

#include "rwhil/wheel.hpp"

using namespace rwhil;

namespace {

WheelParams test_params() {
    WheelParams p;
    p.torque_constant = 0.05;
    p.inertia = 1.2e-4;
    p.torque_max = 0.05;
    p.speed_max = 366.0;
    p.current_deadband = 0.3;
    p.velocity_loop_kp = 0.01;
    p.velocity_loop_ki = 0.05;
    p.telemetry_lowpass_hz = 5.0;
    p.tach_noise_hi = 0.2;
    p.tach_noise_lo = 4.0;
    p.tach_noise_threshold = 20.0;
    p.current_noise = 0.01;
    p.friction = 1e-6;
    return p;
}

double speed_noise_std(WheelState& w, const WheelParams& p, Rng& rng, int count) {
    for (int k = 0; k < 200; ++k) {
        wheel_measure(w, p, nullptr, 0.05);  // settle the low-pass state
    }
    double sum = 0, sum2 = 0;
    for (int k = 0; k < count; ++k) {
        const auto tlm = wheel_measure(w, p, &rng, 0.05);
        sum += tlm.speed_meas;
        sum2 += tlm.speed_meas * tlm.speed_meas;
    }
    const double mean = sum / count;
    return std::sqrt(sum2 / count - mean * mean);
}

}  // namespace

TEST_CASE("current-to-torque map") {
    const auto p = test_params();
    CHECK(torque_from_current(0.2, p) == 0.0);  // inside the dead zone
    CHECK(torque_from_current(-0.25, p) == 0.0);
    CHECK(torque_from_current(0.0, p) == 0.0);
    CHECK(torque_from_current(0.5, p) == Catch::Approx(0.025));
    CHECK(torque_from_current(-0.5, p) == Catch::Approx(-0.025));
    CHECK(torque_from_current(5.0, p) == Catch::Approx(p.torque_max));  // clamped
}

TEST_CASE("deadband commands never accelerate the wheel") {
    auto p = test_params();
    p.friction = 0.0;
    for (double i_cmd = -p.current_deadband; i_cmd <= p.current_deadband;
         i_cmd += 0.01) {
        WheelState w;
        wheel_step(w, {CommandMode::current, i_cmd, 0, 0.0}, p, 0.01);
        REQUIRE(w.speed == 0.0);
    }
}

TEST_CASE("sign-offset compensation") {
    const auto p = test_params();
    CHECK(deadband_offset_compensation(0.01, p) == Catch::Approx(0.31));
    CHECK(deadband_offset_compensation(-0.01, p) == Catch::Approx(-0.31));
    CHECK(deadband_offset_compensation(0.0, p) == 0.0);
}

TEST_CASE("velocity loop tracks a step without steady-state error") {
    const auto p = test_params();
    WheelState w;
    const double dt = 0.01;
    double settled_at = -1.0;
    for (int k = 1; k <= 1000; ++k) {
        wheel_step(w, {CommandMode::velocity, 50.0, 0, 0.0}, p, dt);
        const double t = k * dt;
        if (settled_at < 0.0 && std::abs(w.speed - 50.0) <= 1.0) {
            settled_at = t;
        }
        if (settled_at >= 0.0 && t > settled_at) {
            REQUIRE(std::abs(w.speed - 50.0) <= 1.0);  // stays settled
        }
    }
    REQUIRE(settled_at > 0.0);
    CHECK(settled_at < 2.0);
    CHECK(std::abs(w.speed - 50.0) < 1e-2);  // PI: no steady-state offset
}

TEST_CASE("velocity loop at the setpoint with empty integrator is quiescent") {
    const auto p = test_params();
    WheelState w;
    w.speed = 120.0;
    CHECK(velocity_loop(120.0, w, p, 0.01) == 0.0);
}

TEST_CASE("velocity loop tracks a ramp with bounded lag") {
    const auto p = test_params();
    WheelState w;
    const double dt = 0.01;
    const double ramp = 10.0;  // rad/s^2
    double worst_lag = 0.0;
    for (int k = 1; k <= 2000; ++k) {
        const double cmd = ramp * k * dt;
        wheel_step(w, {CommandMode::velocity, cmd, 0, 0.0}, p, dt);
        if (k > 500) {  // past the transient
            worst_lag = std::max(worst_lag, std::abs(cmd - w.speed));
        }
    }
    CHECK(worst_lag < 0.2);
}

TEST_CASE("dead wheel only decays on friction") {
    const auto p = test_params();
    WheelState w;
    w.speed = 100.0;
    w.health = 0.0;
    const double before = w.speed;
    wheel_step(w, {CommandMode::current, 1.0, 0, 0.0}, p, 0.01);
    const double expected = before - p.friction * before / p.inertia * 0.01;
    CHECK(w.speed == Catch::Approx(expected));
    CHECK(w.motor_torque == 0.0);
}

TEST_CASE("disconnected wheel produces no torque until reconnected") {
    auto p = test_params();
    p.friction = 0.0;
    WheelState w;
    w.speed = 50.0;
    w.connected = false;
    wheel_step(w, {CommandMode::current, 1.0, 0, 0.0}, p, 0.01);
    CHECK(w.speed == 50.0);
    w.connected = true;
    wheel_step(w, {CommandMode::current, 1.0, 0, 0.0}, p, 0.01);
    CHECK(w.speed > 50.0);
}

TEST_CASE("half health halves the acceleration") {
    auto p = test_params();
    p.friction = 0.0;
    WheelState full, half;
    half.health = 0.5;
    const WheelCommand cmd{CommandMode::current, 0.8, 0, 0.0};
    wheel_step(full, cmd, p, 0.01);
    wheel_step(half, cmd, p, 0.01);
    CHECK(half.speed == Catch::Approx(0.5 * full.speed));
}

TEST_CASE("constant torque gives an exactly linear speed ramp") {
    auto p = test_params();
    p.friction = 0.0;
    WheelState w;
    w.health = 0.7;
    const WheelCommand cmd{CommandMode::current, 0.5, 0, 0.0};  // 0.025 N m
    const double dt = 0.01;
    for (int k = 1; k <= 240; ++k) {  // stays below the speed limit
        wheel_step(w, cmd, p, dt);
        const double expected = 0.7 * 0.025 / p.inertia * (k * dt);
        REQUIRE(w.speed ==
                Catch::Approx(expected).margin(1e-12 * std::abs(expected)));
    }
}

TEST_CASE("acceleration is linear in health") {
    auto p = test_params();
    p.friction = 0.0;
    // regression of acceleration on health over a sweep; R^2 must be ~1
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    int n = 0;
    for (double phi = 0.1; phi <= 1.0; phi += 0.05) {
        WheelState w;
        w.health = phi;
        wheel_step(w, {CommandMode::current, 0.5, 0, 0.0}, p, 0.01);
        const double accel = w.speed / 0.01;
        sx += phi; sy += accel; sxx += phi * phi; sxy += phi * accel;
        syy += accel * accel; ++n;
    }
    const double cov = sxy - sx * sy / n;
    const double var_x = sxx - sx * sx / n;
    const double var_y = syy - sy * sy / n;
    CHECK(cov * cov / (var_x * var_y) > 0.999);
}

TEST_CASE("saturation limits hold under absurd commands") {
    const auto p = test_params();
    WheelState w;
    for (int k = 0; k < 5000; ++k) {
        wheel_step(w, {CommandMode::current, 100.0, 0, 0.0}, p, 0.01);
        REQUIRE(std::abs(w.motor_torque) <= p.torque_max);
        REQUIRE(std::abs(w.speed) <= p.speed_max);
    }
    CHECK(w.speed == Catch::Approx(p.speed_max).margin(1e-9));
}

TEST_CASE("telemetry noise std matches the high-speed setting") {
    auto p = test_params();
    p.tach_noise_hi = 0.5;
    Rng rng(302);
    WheelState w;
    w.speed = 200.0;
    const double stddev = speed_noise_std(w, p, rng, 10000);
    CHECK(stddev > 0.45);
    CHECK(stddev < 0.55);
}

TEST_CASE("telemetry noise std near zero speed shows the Hall pathology") {
    auto p = test_params();
    p.tach_noise_lo = 5.0;
    Rng rng(303);
    WheelState w;
    w.speed = 0.0;
    const double stddev = speed_noise_std(w, p, rng, 10000);
    CHECK(stddev > 4.5);
    CHECK(stddev < 5.5);
}

TEST_CASE("telemetry is deterministic with noise disabled") {
    const auto p = test_params();
    WheelState w;
    w.speed = 123.0;
    const auto first = wheel_measure(w, p, nullptr, 0.05);
    CHECK(first.speed_meas == 123.0);  // filter initializes on the true speed
    w.speed = 125.0;
    const auto second = wheel_measure(w, p, nullptr, 0.05);
    CHECK(second.speed_meas > 123.0);
    CHECK(second.speed_meas < 125.0);  // low-pass lag, no randomness
}

TEST_CASE("current telemetry has the same dead zone as the drive") {
    const auto p = test_params();
    WheelState w;
    w.motor_torque = 0.1 * p.current_deadband * p.torque_constant;
    CHECK(wheel_measure(w, p, nullptr, 0.05).current_meas == 0.0);

    w.motor_torque = 2.0 * p.current_deadband * p.torque_constant;
    CHECK(wheel_measure(w, p, nullptr, 0.05).current_meas ==
          Catch::Approx(2.0 * p.current_deadband));
}

TEST_CASE("acceleration estimate from constant speed is zero") {
    AccelEstimator est;
    est.push_speed(0.0, 100.0);
    CHECK_FALSE(est.diff_lowpass(2.0).has_value());  // needs two samples
    est.push_speed(0.05, 100.0);
    est.push_speed(0.10, 100.0);
    CHECK(est.diff_lowpass(2.0).value() == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("differentiated acceleration lags a step in the true rate") {
    AccelEstimator est;
    const double dt = 0.05;
    const double accel = 40.0;  // true wheel acceleration after the step
    double speed = 100.0;
    double t = 0.0;
    for (int k = 0; k < 10; ++k) {  // pre-step history
        est.push_speed(t, speed);
        (void)est.diff_lowpass(2.0);
        t += dt;
    }
    double reached_at = -1.0;
    for (int k = 0; k < 40; ++k) {
        speed += accel * dt;
        est.push_speed(t, speed);
        const double est_accel = est.diff_lowpass(2.0).value();
        if (reached_at < 0.0 && est_accel > 0.63 * accel) {
            reached_at = (k + 1) * dt;
        }
        t += dt;
    }
    REQUIRE(reached_at > 0.0);
    CHECK(reached_at > dt);  // visible phase delay
    CHECK(reached_at < 1.0 / (2.0 * M_PI * 2.0) + 3 * dt);  // ~ group delay
}

TEST_CASE("current-based acceleration inherits the dead measurement zone") {
    const auto p = test_params();
    WheelState w;
    // true torque below the deadband equivalent: telemetry reports zero amps
    w.motor_torque = 0.5 * p.current_deadband * p.torque_constant;
    const auto tlm = wheel_measure(w, p, nullptr, 0.05);
    CHECK(AccelEstimator::current_based(tlm.current_meas, p) == 0.0);
    CHECK(w.motor_torque / p.inertia != 0.0);  // true accel is not zero
}

TEST_CASE("fault schedule application") {
    std::vector<WheelState> wheels(4);
    std::size_t cursor = 0;

    SECTION("empty schedule changes nothing") {
        std::vector<FaultEvent> schedule;
        CHECK(apply_fault_schedule(10.0, schedule, cursor, wheels) == 0);
        for (const auto& w : wheels) {
            CHECK(w.health == 1.0);
            CHECK(w.connected);
        }
    }

    SECTION("scale event applies once and persists") {
        std::vector<FaultEvent> schedule{
            {0.0, 2, FaultKind::scale, 0.5, FaultTarget::device}};
        CHECK(apply_fault_schedule(0.0, schedule, cursor, wheels) == 1);
        CHECK(wheels[2].health == 0.5);
        CHECK(apply_fault_schedule(100.0, schedule, cursor, wheels) == 0);
        CHECK(wheels[2].health == 0.5);
    }

    SECTION("disconnect then reconnect") {
        std::vector<FaultEvent> schedule{
            {5.0, 1, FaultKind::disconnect, 0.0, FaultTarget::device},
            {8.0, 1, FaultKind::reconnect, 0.0, FaultTarget::device}};
        apply_fault_schedule(4.0, schedule, cursor, wheels);
        CHECK(wheels[1].connected);
        apply_fault_schedule(6.0, schedule, cursor, wheels);
        CHECK_FALSE(wheels[1].connected);
        apply_fault_schedule(9.0, schedule, cursor, wheels);
        CHECK(wheels[1].connected);
    }
}
