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

#include "rwhil/attitude.hpp"

namespace rwhil {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

struct MekfParams {
    double gyro_noise = 0.0;        ///< per-sample std at the gyro rate [rad/s]
    double gyro_bias_walk = 0.0;    ///< [rad/s per sqrt(s)]
    double vector_noise = 0.0;      ///< vector measurement noise, per axis [rad]
    double init_attitude_std = 0.0; ///< [rad]
    double init_bias_std = 0.0;     ///< [rad/s]
    double gate_chi2 = 0.0;         ///< reject when innovation Mahalanobis^2 exceeds this
};

/// Multiplicative EKF over a 6-dim error state (attitude error, gyro bias).
/// Error convention: q_true = q_ref (x) dq(delta_alpha), dq ~ [1, delta_alpha/2].
struct EkfState {
    Quat q = Quat::Identity();  ///< reference quaternion, body <- inertial
    Vec3 bias = Vec3::Zero();   ///< gyro bias estimate [rad/s]
    Mat6 P = Mat6::Identity();
    long rejected = 0;          ///< gated-out measurement count
};

inline EkfState mekf_init(const MekfParams& p) {
    EkfState s;
    s.P.setZero();
    s.P.topLeftCorner<3, 3>() =
        p.init_attitude_std * p.init_attitude_std * Mat3::Identity();
    s.P.bottomRightCorner<3, 3>() =
        p.init_bias_std * p.init_bias_std * Mat3::Identity();
    return s;
}

/// Propagate with a bias-corrected gyro sample over dt.
inline void mekf_predict(EkfState& s, const Vec3& gyro, double dt, const MekfParams& p) {
    const Vec3 omega = gyro - s.bias;
    const double angle = omega.norm() * dt;
    if (angle > 0.0) {
        s.q = quat_canonical(s.q * quat_from_axis_angle(omega, angle));
    } else {
        s.q = quat_canonical(s.q);
    }

    Mat6 F = Mat6::Zero();
    F.topLeftCorner<3, 3>() = -skew(omega);
    F.topRightCorner<3, 3>() = -Mat3::Identity();
    const Mat6 phi = Mat6::Identity() + F * dt + 0.5 * F * F * dt * dt;

    const double qg = p.gyro_noise * p.gyro_noise * dt * dt;
    const double qb = p.gyro_bias_walk * p.gyro_bias_walk;
    Mat6 Q = Mat6::Zero();
    Q.topLeftCorner<3, 3>() = (qg + qb * dt * dt * dt / 3.0) * Mat3::Identity();
    Q.topRightCorner<3, 3>() = -0.5 * qb * dt * dt * Mat3::Identity();
    Q.bottomLeftCorner<3, 3>() = Q.topRightCorner<3, 3>();
    Q.bottomRightCorner<3, 3>() = qb * dt * Mat3::Identity();

    s.P = phi * s.P * phi.transpose() + Q;
    s.P = 0.5 * (s.P + s.P.transpose()).eval();
}

/// Fold a unit-vector measurement of a known inertial reference direction into
/// the state. The update is iterated (Gauss-Newton) so large attitude errors
/// are absorbed without leaving a linearization residual behind a collapsed
/// covariance. Returns false (state untouched, reject counter bumped) when
/// the innovation fails the chi-square gate.
inline bool mekf_update(EkfState& s, const Vec3& measured, const Vec3& ref_inertial,
                        const MekfParams& p) {
    const Mat3 R = p.vector_noise * p.vector_noise * Mat3::Identity();

    {
        // Gate on the tangential innovation only: the radial component of a
        // unit-vector residual is second order in the attitude error and
        // carries no state information (H^T annihilates it in the update).
        const Vec3 predicted = dcm_from_quat(s.q) * ref_inertial;
        Eigen::Matrix<double, 3, 6> H = Eigen::Matrix<double, 3, 6>::Zero();
        H.leftCols<3>() = skew(predicted);
        const Mat3 S = H * s.P * H.transpose() + R;
        const Vec3 innovation = measured - predicted;
        const Vec3 tangential = innovation - predicted * predicted.dot(innovation);
        if (p.gate_chi2 > 0.0 &&
            tangential.dot(S.inverse() * tangential) > p.gate_chi2) {
            ++s.rejected;
            return false;
        }
    }

    const Quat q_prior = s.q;
    const Vec3 bias_prior = s.bias;
    Quat q_iter = q_prior;
    Vec3 bias_iter = bias_prior;
    Vec6 dx_acc = Vec6::Zero();  // accumulated correction relative to the prior
    Eigen::Matrix<double, 6, 3> K;
    Eigen::Matrix<double, 3, 6> H = Eigen::Matrix<double, 3, 6>::Zero();

    for (int iter = 0; iter < 4; ++iter) {
        const Vec3 predicted = dcm_from_quat(q_iter) * ref_inertial;
        H.leftCols<3>() = skew(predicted);
        const Mat3 S = H * s.P * H.transpose() + R;
        K = s.P * H.transpose() * S.inverse();
        const Vec6 dx = K * (measured - predicted + H * dx_acc);

        const Vec3 dalpha = dx.head<3>();
        q_iter = q_prior;
        if (dalpha.norm() > 0.0) {
            q_iter = q_prior * quat_from_axis_angle(dalpha, dalpha.norm());
        }
        bias_iter = bias_prior + dx.tail<3>();
        const double step = (dx - dx_acc).norm();
        dx_acc = dx;
        if (step < 1e-12) {
            break;
        }
    }

    s.q = quat_canonical(q_iter);
    s.bias = bias_iter;
    const Mat6 IKH = Mat6::Identity() - K * H;
    s.P = IKH * s.P * IKH.transpose() + K * R * K.transpose();
    s.P = 0.5 * (s.P + s.P.transpose()).eval();
    return true;
}

struct EstimatedOutputs {
    Vec3 sigma_hat = Vec3::Zero();
    Vec3 omega_hat = Vec3::Zero();
};

inline EstimatedOutputs estimated_outputs(const EkfState& s, const Vec3& last_gyro) {
    EstimatedOutputs out;
    out.sigma_hat = mrp_switch(mrp_from_quat(s.q));
    out.omega_hat = last_gyro - s.bias;
    return out;
}

}  // namespace rwhil
