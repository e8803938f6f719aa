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

#include "rwhil/controller.hpp"
#include "rwhil/rng.hpp"

using namespace rwhil;

namespace {

SpacecraftParams test_spacecraft() {
    SpacecraftParams p;
    p.inertia = Vec3(0.30, 0.42, 0.42).asDiagonal();
    p.inertia_inv = p.inertia.inverse();
    p.mass = 20.0;
    const double a = 1.0 / std::sqrt(3.0);
    p.wheel_axes.resize(3, 4);
    p.wheel_axes << a, -a,  a, -a,
                    a,  a, -a, -a,
                    a,  a,  a,  a;
    p.wheel_inertia = 1.2e-4;
    p.wheel_speed_max = 366.0;
    return p;
}

ControlGains test_gains() {
    ControlGains g;
    g.alpha = 0.03 * Mat3::Identity();
    g.beta = 5e-3;
    g.k_fb = 0.01 * Mat3::Identity();
    g.gamma = 100.0 * MatX::Identity(4, 4);
    g.k_icl = MatX::Identity(4, 4);
    g.lambda_min = 1e-7;
    g.theta_min = 0.05;
    g.theta_max = 1.0;
    return g;
}

WheelParams test_wheel() {
    WheelParams p;
    p.torque_constant = 0.05;
    p.inertia = 1.2e-4;
    p.torque_max = 0.05;
    p.speed_max = 366.0;
    p.current_deadband = 0.3;
    return p;
}

Vec3 random_mrp(Rng& rng) {
    Quat q;
    q.w() = rng.gaussian();
    q.x() = rng.gaussian();
    q.y() = rng.gaussian();
    q.z() = rng.gaussian();
    return mrp_from_quat(quat_canonical(q));
}

// Independently coded dense evaluation of the auxiliary control law. Every
// matrix is rebuilt from scratch here; only Eigen arithmetic is shared with
// the implementation.
Vec3 dense_aux_control_oracle(const Vec3& sigma, const Vec3& omega, const VecX& Omega,
                              const GuidanceSample& tgt, const SpacecraftParams& p,
                              const ControlGains& g) {
    auto dense_skew = [](const Vec3& v) {
        Mat3 m;
        m << 0, -v(2), v(1), v(2), 0, -v(0), -v(1), v(0), 0;
        return m;
    };
    auto dense_dcm = [&](const Vec3& s) {
        const double n2 = s.dot(s);
        const Mat3 sx = dense_skew(s);
        return Mat3(Mat3::Identity() +
                    (8.0 * sx * sx - 4.0 * (1.0 - n2) * sx) / ((1 + n2) * (1 + n2)));
    };
    auto dense_mrp_of_dcm = [](const Mat3& c) {
        // quaternion extraction from the trace, then sigma = qv / (1 + qs)
        const double tr = c.trace();
        Eigen::Vector4d q;  // [qs, qv]
        q(0) = std::sqrt(std::max(0.0, 1.0 + tr)) / 2.0;
        if (q(0) > 1e-6) {
            q(1) = (c(1, 2) - c(2, 1)) / (4 * q(0));
            q(2) = (c(2, 0) - c(0, 2)) / (4 * q(0));
            q(3) = (c(0, 1) - c(1, 0)) / (4 * q(0));
        } else {
            q(1) = std::sqrt(std::max(0.0, 1.0 + 2 * c(0, 0) - tr)) / 2.0;
            q(0) = (c(1, 2) - c(2, 1)) / (4 * q(1));
            q(2) = (c(0, 1) + c(1, 0)) / (4 * q(1));
            q(3) = (c(2, 0) + c(0, 2)) / (4 * q(1));
        }
        if (q(0) < 0) q = -q;
        return Vec3(q.tail<3>() / (1.0 + q(0)));
    };

    const Mat3 R_body = dense_dcm(sigma);
    const Mat3 R_des = dense_dcm(tgt.sigma_d);
    const Mat3 R_rel = R_body * R_des.transpose();
    Vec3 sigma_e = dense_mrp_of_dcm(R_rel);
    if (sigma_e.dot(sigma_e) > 1.0) {
        sigma_e = -sigma_e / sigma_e.dot(sigma_e);
    }
    const Vec3 omega_err = omega - R_rel * tgt.omega_d;

    const double s2 = sigma_e.dot(sigma_e);
    const Mat3 B = (1.0 - s2) * Mat3::Identity() + 2.0 * dense_skew(sigma_e) +
                   2.0 * sigma_e * sigma_e.transpose();
    const Vec3 sigma_e_dot = 0.25 * B * omega_err;
    const Vec3 r = sigma_e_dot + g.alpha * sigma_e;
    const Mat3 B_dot = -2.0 * sigma_e.dot(sigma_e_dot) * Mat3::Identity() +
                       2.0 * dense_skew(sigma_e_dot) +
                       2.0 * (sigma_e_dot * sigma_e.transpose() +
                              sigma_e * sigma_e_dot.transpose());

    const Vec3 h_body = p.inertia * omega + p.wheel_inertia * (p.wheel_axes * Omega);
    // numeric inverse here, closed-form scaled transpose in the implementation
    const Mat3 B_inv = B.inverse();
    return omega.cross(h_body) + p.inertia * R_rel * tgt.omega_dot_d -
           p.inertia * dense_skew(omega_err) * R_rel * tgt.omega_d +
           4.0 * p.inertia * B_inv *
               (-0.25 * B_dot * omega_err - g.alpha * sigma_e_dot - g.k_fb * r -
                g.beta * sigma_e);
}

}  // namespace

TEST_CASE("auxiliary control is zero at the target equilibrium") {
    const auto p = test_spacecraft();
    const auto g = test_gains();
    GuidanceSample tgt;
    tgt.sigma_d = Vec3(0.1, -0.2, 0.05);
    const Vec3 u_d = compute_aux_control(tgt.sigma_d, Vec3::Zero(), tgt,
                                         VecX::Zero(4), p, g);
    CHECK(u_d.norm() < 1e-15);
}

TEST_CASE("with zero body rate the gyroscopic term vanishes") {
    const auto p = test_spacecraft();
    const auto g = test_gains();
    GuidanceSample tgt;  // inertial hold
    const Vec3 sigma(0.2, 0.1, -0.1);
    VecX Omega(4);
    Omega << 120, -80, 60, -100;
    const Vec3 with_wheels = compute_aux_control(sigma, Vec3::Zero(), tgt, Omega, p, g);
    const Vec3 without = compute_aux_control(sigma, Vec3::Zero(), tgt,
                                             VecX::Zero(4), p, g);
    CHECK((with_wheels - without).norm() < 1e-15);  // wheel momentum drops out
}

TEST_CASE("auxiliary control matches an independent dense evaluation") {
    const auto p = test_spacecraft();
    const auto g = test_gains();
    Rng rng(601);
    for (int i = 0; i < 2000; ++i) {
        const Vec3 sigma = random_mrp(rng);
        GuidanceSample tgt;
        tgt.sigma_d = random_mrp(rng);
        tgt.omega_d = Vec3(rng.gaussian(0.01), rng.gaussian(0.01), rng.gaussian(0.01));
        tgt.omega_dot_d =
            Vec3(rng.gaussian(1e-4), rng.gaussian(1e-4), rng.gaussian(1e-4));
        const Vec3 omega(rng.gaussian(0.05), rng.gaussian(0.05), rng.gaussian(0.05));
        VecX Omega(4);
        for (int w = 0; w < 4; ++w) {
            Omega[w] = rng.gaussian(100.0);
        }
        const Vec3 u_d = compute_aux_control(sigma, omega, tgt, Omega, p, g);
        const Vec3 oracle = dense_aux_control_oracle(sigma, omega, Omega, tgt, p, g);
        REQUIRE((u_d - oracle).norm() < 1e-10);
    }
}

TEST_CASE("allocation basics") {
    const auto p = test_spacecraft();
    CHECK(allocate(Vec3::Zero(), VecX::Ones(4), p.wheel_axes).norm() == 0.0);

    // all-healthy z-torque: every wheel carries 3/4 * (1/sqrt(3)) * tau
    const double tau = 2e-3;
    const VecX u = allocate(Vec3(0, 0, tau), VecX::Ones(4), p.wheel_axes);
    for (int i = 0; i < 4; ++i) {
        CHECK(u[i] == Catch::Approx(0.4330127 * tau).epsilon(1e-6));
    }
}

TEST_CASE("allocation consistency and minimum norm against an SVD solve") {
    const auto p = test_spacecraft();
    Rng rng(602);
    for (int i = 0; i < 1000; ++i) {
        Vec3 u_d(rng.gaussian(0.01), rng.gaussian(0.01), rng.gaussian(0.01));
        VecX theta(4);
        for (int w = 0; w < 4; ++w) {
            theta[w] = 0.05 + 0.95 * rng.uniform();
        }
        const VecX u = allocate(u_d, theta, p.wheel_axes);
        const MatX weighted = p.wheel_axes * theta.asDiagonal();
        REQUIRE((weighted * u - u_d).norm() < 1e-9);

        // independent dense pseudo-inverse route
        const VecX u_svd =
            weighted.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(u_d);
        REQUIRE((u - u_svd).norm() < 1e-9);
        REQUIRE(u.norm() <= u_svd.norm() + 1e-9);
    }
}

TEST_CASE("allocation with a degraded wheel still satisfies the torque demand") {
    const auto p = test_spacecraft();
    VecX theta(4);
    theta << 1.0, 1.0, 0.5, 1.0;
    const Vec3 u_d(1e-3, -2e-3, 1.5e-3);
    const VecX u = allocate(u_d, theta, p.wheel_axes);
    CHECK((p.wheel_axes * theta.asDiagonal() * u - u_d).norm() < 1e-12);
}

TEST_CASE("icl window rejects unexcited data and admits informative windows") {
    const auto p = test_spacecraft();
    IclParams icl;
    icl.window = 1.0;
    icl.capacity = 10;
    IclHistory history(4);

    std::deque<ControlSample> buffer;
    for (int k = 0; k <= 20; ++k) {
        ControlSample s;
        s.t = 0.1 * k;
        s.omega_hat = Vec3::Zero();
        s.wheel_speed = VecX::Zero(4);
        s.u = VecX::Zero(4);
        buffer.push_back(s);
    }
    CHECK_FALSE(icl_accumulate(buffer, p, icl, history));  // u == 0: no record
    CHECK(history.lambda == 0.0);
    CHECK(history.records.empty());

    // an excited window is admitted (rank bootstrap)
    for (auto& s : buffer) {
        s.u = VecX::Ones(4) * 1e-3;
    }
    CHECK(icl_accumulate(buffer, p, icl, history));
    CHECK(history.records.size() == 1);
}

TEST_CASE("icl residual identity on noise-free synthetic data") {
    // Propagate the true equations of motion with known health, sample the
    // signals the controller would buffer, and check the integrated residual
    // at the true health. Halving the sampling step must cut the quadrature
    // error by about four.
    const auto p = test_spacecraft();
    VecX theta_true(4);
    theta_true << 1.0, 0.8, 0.5, 0.9;

    auto residual_at = [&](double sample_dt) {
        const double h = 1.25e-3;
        const auto per_sample = static_cast<long>(std::llround(sample_dt / h));
        BodyState s;
        s.omega = Vec3(0.02, -0.03, 0.01);
        s.wheel_speed = VecX::Zero(4);
        s.wheel_speed << 50, -40, 30, -60;

        IclParams icl;
        icl.window = 10.0;
        icl.capacity = 4;
        IclHistory history(4);
        std::deque<ControlSample> buffer;

        auto commanded = [](double t) {
            VecX u(4);
            u << 5e-3 * std::sin(t), -4e-3 * std::cos(0.8 * t),
                3e-3 * std::sin(1.3 * t + 0.4), -2e-3 * std::cos(0.5 * t);
            return u;
        };

        const long steps = static_cast<long>(std::llround(12.0 / h));
        for (long k = 0; k <= steps; ++k) {
            const double t = k * h;
            if (k % per_sample == 0) {
                ControlSample sample;
                sample.t = t;
                sample.omega_hat = s.omega;
                sample.wheel_speed = s.wheel_speed;
                sample.u = commanded(t);
                buffer.push_back(sample);
                while (buffer.front().t < t - icl.window - 1e-9) {
                    buffer.pop_front();
                }
            }
            s = rk4_step(s, commanded(t + 0.5 * h), theta_true, p, h);
        }
        REQUIRE(icl_accumulate(buffer, p, icl, history));
        return icl_residual(history.records.back(), theta_true).norm();
    };

    const double res_coarse = residual_at(0.01);
    const double res_fine = residual_at(0.005);
    CHECK(res_coarse < 1e-6);
    CHECK(res_coarse / res_fine >= 3.5);
}

TEST_CASE("lambda never decreases as records accumulate") {
    const auto p = test_spacecraft();
    IclParams icl;
    icl.window = 1.0;
    icl.capacity = 20;
    IclHistory history(4);
    Rng rng(603);
    double lambda_prev = 0.0;

    for (int trial = 0; trial < 50; ++trial) {
        std::deque<ControlSample> buffer;
        VecX pattern(4);
        for (int w = 0; w < 4; ++w) {
            pattern[w] = rng.gaussian(2e-3);
        }
        for (int k = 0; k <= 10; ++k) {
            ControlSample s;
            s.t = 0.1 * k;
            s.omega_hat =
                Vec3(rng.gaussian(0.01), rng.gaussian(0.01), rng.gaussian(0.01));
            s.wheel_speed = VecX::Zero(4);
            s.u = pattern * (1.0 + 0.1 * std::sin(k));
            buffer.push_back(s);
        }
        icl_accumulate(buffer, p, icl, history);
        REQUIRE(history.lambda >= lambda_prev);
        lambda_prev = history.lambda;
    }
    CHECK(history.lambda > 0.0);  // varied patterns eventually excite all wheels
}

TEST_CASE("adaptation is frozen at equilibrium") {
    const auto p = test_spacecraft();
    const auto g = test_gains();
    ErrorTerms e;  // all zeros: r = 0
    e.B = Mat3::Identity();
    IclHistory empty(4);
    VecX theta = VecX::Ones(4) * 0.7;
    const VecX out = adaptation_step(theta, e, VecX::Ones(4) * 1e-3, p, empty, g, 0.1);
    CHECK((out - theta).norm() == 0.0);
}

TEST_CASE("adaptation at the true health sees only quadrature-level pull") {
    const auto p = test_spacecraft();
    auto g = test_gains();
    VecX theta_true(4);
    theta_true << 1.0, 0.8, 0.5, 0.9;

    // one synthetic record whose residual is exactly zero at the true health
    IclHistory history(4);
    IclRecord rec;
    rec.t = 10.0;
    rec.torque_integral = p.wheel_axes * VecX::Ones(4).asDiagonal() * 1e-2;
    rec.gyro_integral = Vec3(1e-4, -2e-4, 5e-5);
    rec.momentum_delta = rec.torque_integral * theta_true - rec.gyro_integral;
    history.records.push_back(rec);
    history.gram = rec.torque_integral.transpose() * rec.torque_integral;
    history.lambda = 1.0;  // force the learning term on

    ErrorTerms e;
    e.B = Mat3::Identity();  // r = 0: gradient term off
    const VecX out = adaptation_step(theta_true, e, VecX::Zero(4), p, history, g, 0.1);
    CHECK((out - theta_true).norm() < 1e-12);  // exact residual: no drift
}

TEST_CASE("projection keeps the estimate inside the box under adversarial gains") {
    const auto p = test_spacecraft();
    Rng rng(604);
    for (int trial = 0; trial < 1000; ++trial) {
        ControlGains g = test_gains();
        g.gamma = std::pow(10.0, 1.0 + 4.0 * rng.uniform()) * MatX::Identity(4, 4);
        g.k_icl = std::pow(10.0, 2.0 * rng.uniform()) * MatX::Identity(4, 4);

        IclHistory history(4);
        IclRecord rec;
        rec.torque_integral = MatX::Random(3, 4) * 0.01;
        rec.gyro_integral = Vec3::Random() * 0.01;
        rec.momentum_delta = Vec3::Random() * 0.01;
        history.records.push_back(rec);
        history.lambda = 1.0;

        ErrorTerms e;
        e.B = mrp_kinematics_matrix(Vec3::Random() * 0.5);
        e.r = Vec3::Random() * 0.1;

        VecX theta = VecX::Ones(4) * (0.05 + 0.95 * rng.uniform());
        for (int k = 0; k < 50; ++k) {
            theta = adaptation_step(theta, e, VecX::Random(4) * 0.01, p, history, g, 0.1);
            for (int w = 0; w < 4; ++w) {
                REQUIRE(theta[w] >= g.theta_min);
                REQUIRE(theta[w] <= g.theta_max);
            }
        }
    }
}

TEST_CASE("command conversions") {
    const auto wp = test_wheel();

    SECTION("current command is the definitional ratio, clamped") {
        CHECK(torque_to_current_cmd(0.0, wp) == 0.0);
        CHECK(torque_to_current_cmd(0.025, wp) == Catch::Approx(0.5));
        CHECK(torque_to_current_cmd(10.0, wp) == Catch::Approx(wp.current_limit()));
    }

    SECTION("current round trip above the deadband recovers the torque") {
        for (double tau : {0.016, 0.02, -0.03, 0.049}) {
            const double current = torque_to_current_cmd(tau, wp);
            REQUIRE(std::abs(current) > wp.current_deadband);
            CHECK(torque_from_current(current, wp) ==
                  Catch::Approx(tau).margin(1e-12));
        }
    }

    SECTION("velocity command integrates forward Euler exactly") {
        double cmd = 0.0;
        CHECK(torque_to_velocity_cmd(0.0, cmd, wp, 0.1) == 0.0);
        for (int k = 0; k < 10; ++k) {
            torque_to_velocity_cmd(wp.inertia * 10.0, cmd, wp, 0.1);
        }
        CHECK(cmd == Catch::Approx(10.0));
    }

    SECTION("sustained torque pins the command at the speed limit") {
        double cmd = 0.0;
        for (int k = 0; k < 100000; ++k) {
            torque_to_velocity_cmd(1.0, cmd, wp, 0.1);
        }
        CHECK(cmd == wp.speed_max);
    }
}

TEST_CASE("wheel-frame command opposes the body torque") {
    CHECK(wheel_torque_command(2.5e-3) == -2.5e-3);
    CHECK(wheel_torque_command(-1e-3) == 1e-3);
}

TEST_CASE("command fault induction") {
    VecX u(4);
    u << 1e-3, -2e-3, 3e-3, -4e-3;

    std::vector<FaultEvent> none;
    CHECK(induce_command_fault(u, none, 100.0) == u);

    std::vector<FaultEvent> zero_w2{
        {0.0, 2, FaultKind::scale, 0.0, FaultTarget::command}};
    const VecX faulted = induce_command_fault(u, zero_w2, 10.0);
    CHECK(faulted[2] == 0.0);
    CHECK(faulted[0] == u[0]);

    std::vector<FaultEvent> half_w2{
        {50.0, 2, FaultKind::scale, 0.5, FaultTarget::command}};
    CHECK(induce_command_fault(u, half_w2, 10.0) == u);  // not active yet
    CHECK(induce_command_fault(u, half_w2, 50.0)[2] == Catch::Approx(0.5 * u[2]));

    // device-target events never touch the command path
    std::vector<FaultEvent> device{
        {0.0, 1, FaultKind::scale, 0.1, FaultTarget::device}};
    CHECK(induce_command_fault(u, device, 10.0) == u);
}
