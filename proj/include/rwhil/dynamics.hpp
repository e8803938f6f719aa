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

#include <sstream>
#include <stdexcept>

#include "rwhil/attitude.hpp"

namespace rwhil {

/// Raised when a propagated state stops being finite. Carries the offending
/// time so the harness can report the tick that diverged.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

struct SpacecraftParams {
    Mat3 inertia = Mat3::Identity();       ///< total inertia J [kg m^2]
    Mat3 inertia_inv = Mat3::Identity();   ///< cached J^-1
    double mass = 0.0;                     ///< [kg], carried for config fidelity
    MatX wheel_axes;                       ///< G, 3 x N unit spin axes in body frame
    double wheel_inertia = 0.0;            ///< J_rw, flywheel spin-axis inertia [kg m^2]
    double wheel_speed_max = 0.0;          ///< [rad/s]

    int wheel_count() const { return static_cast<int>(wheel_axes.cols()); }
};

/// Truth state propagated by the simulator.
struct BodyState {
    double t = 0.0;       ///< [s]
    Vec3 sigma = Vec3::Zero();
    Vec3 omega = Vec3::Zero();   ///< body rates [rad/s]
    VecX wheel_speed;            ///< Omega, N wheel speeds [rad/s]
};

struct BodyStateDeriv {
    Vec3 sigma_dot;
    Vec3 omega_dot;
    VecX wheel_accel;
};

/// Rigid body with N reaction wheels:
///   J w_dot = -w x (J w + J_rw G Omega) + G diag(phi) u
///   sigma_dot = (1/4) B(sigma) w
///   Omega_dot_i = -phi_i u_i / J_rw
/// where u_i is the torque wheel i applies to the body and phi_i its health.
inline BodyStateDeriv eom_derivative(const BodyState& s, const VecX& wheel_torque,
                                     const VecX& health, const SpacecraftParams& p) {
    BodyStateDeriv d;
    const VecX effective = health.cwiseProduct(wheel_torque);
    const Vec3 momentum_body =
        p.inertia * s.omega + p.wheel_inertia * (p.wheel_axes * s.wheel_speed);
    d.omega_dot = p.inertia_inv *
        (-s.omega.cross(momentum_body) + p.wheel_axes * effective);
    d.sigma_dot = 0.25 * mrp_kinematics_matrix(s.sigma) * s.omega;
    d.wheel_accel = -effective / p.wheel_inertia;
    return d;
}

/// Classical RK4 step with inputs held constant over the step. Applies the
/// MRP shadow switch and the wheel speed limit to the result.
inline BodyState rk4_step(const BodyState& s, const VecX& wheel_torque,
                          const VecX& health, const SpacecraftParams& p, double h) {
    auto advance = [&](const BodyState& base, const BodyStateDeriv& d, double dt) {
        BodyState out = base;
        out.sigma = s.sigma + dt * d.sigma_dot;
        out.omega = s.omega + dt * d.omega_dot;
        out.wheel_speed = s.wheel_speed + dt * d.wheel_accel;
        return out;
    };

    const BodyStateDeriv k1 = eom_derivative(s, wheel_torque, health, p);
    const BodyStateDeriv k2 =
        eom_derivative(advance(s, k1, 0.5 * h), wheel_torque, health, p);
    const BodyStateDeriv k3 =
        eom_derivative(advance(s, k2, 0.5 * h), wheel_torque, health, p);
    const BodyStateDeriv k4 =
        eom_derivative(advance(s, k3, h), wheel_torque, health, p);

    BodyState out;
    out.t = s.t + h;
    out.sigma = s.sigma + h / 6.0 *
        (k1.sigma_dot + 2.0 * k2.sigma_dot + 2.0 * k3.sigma_dot + k4.sigma_dot);
    out.omega = s.omega + h / 6.0 *
        (k1.omega_dot + 2.0 * k2.omega_dot + 2.0 * k3.omega_dot + k4.omega_dot);
    out.wheel_speed = s.wheel_speed + h / 6.0 *
        (k1.wheel_accel + 2.0 * k2.wheel_accel + 2.0 * k3.wheel_accel + k4.wheel_accel);

    out.sigma = mrp_switch(out.sigma);
    out.wheel_speed = out.wheel_speed.cwiseMax(-p.wheel_speed_max)
                                     .cwiseMin(p.wheel_speed_max);

    if (!out.sigma.allFinite() || !out.omega.allFinite() || !out.wheel_speed.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite body state at t=" << out.t << " s";
        throw DivergenceError(msg.str());
    }
    return out;
}

/// Total angular momentum in the inertial frame: R(sigma)^T (J w + J_rw G Omega).
inline Vec3 total_angular_momentum(const BodyState& s, const SpacecraftParams& p) {
    const Vec3 momentum_body =
        p.inertia * s.omega + p.wheel_inertia * (p.wheel_axes * s.wheel_speed);
    return dcm_from_mrp(s.sigma).transpose() * momentum_body;
}

}  // namespace rwhil
