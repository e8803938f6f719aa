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

#include <Eigen/Dense>
#include <cmath>

namespace rwhil {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Quat = Eigen::Quaterniond;

/// Skew-symmetric cross-product matrix: skew(a) * b == a.cross(b).
inline Mat3 skew(const Vec3& a) {
    Mat3 m;
    m <<    0.0, -a.z(),  a.y(),
          a.z(),    0.0, -a.x(),
         -a.y(),  a.x(),    0.0;
    return m;
}

/// Unit-normalize and keep the scalar part non-negative. All quaternions in
/// this library are canonicalized at construction so the MRP conversion is
/// branch-free.
inline Quat quat_canonical(const Quat& q) {
    Quat out = q.normalized();
    if (out.w() < 0.0) {
        out.coeffs() = -out.coeffs();
    }
    return out;
}

inline Quat quat_from_axis_angle(const Vec3& axis, double angle) {
    return quat_canonical(Quat(Eigen::AngleAxisd(angle, axis.normalized())));
}

/// sigma = q_v / (1 + q_s). Canonicalization guarantees 1 + q_s >= 1.
inline Vec3 mrp_from_quat(const Quat& q) {
    const Quat qc = quat_canonical(q);
    return qc.vec() / (1.0 + qc.w());
}

inline Quat quat_from_mrp(const Vec3& sigma) {
    const double s2 = sigma.squaredNorm();
    Quat q;
    q.w() = (1.0 - s2) / (1.0 + s2);
    q.vec() = 2.0 * sigma / (1.0 + s2);
    return quat_canonical(q);
}

/// Attitude matrix mapping inertial-frame vectors into the body frame.
inline Mat3 dcm_from_quat(const Quat& q) {
    const double qs = q.w();
    const Vec3 qv = q.vec();
    return (qs * qs - qv.squaredNorm()) * Mat3::Identity()
         + 2.0 * qv * qv.transpose() - 2.0 * qs * skew(qv);
}

inline Quat quat_from_dcm(const Mat3& m) {
    // Eigen's constructor expects the active (body-to-inertial) rotation.
    return quat_canonical(Quat(Mat3(m.transpose())));
}

inline Mat3 dcm_from_mrp(const Vec3& sigma) {
    const double s2 = sigma.squaredNorm();
    const Mat3 sx = skew(sigma);
    const double d = (1.0 + s2) * (1.0 + s2);
    return Mat3::Identity() + (8.0 * sx * sx - 4.0 * (1.0 - s2) * sx) / d;
}

inline Vec3 mrp_from_dcm(const Mat3& m) {
    return mrp_from_quat(quat_from_dcm(m));
}

/// Kinematics matrix B(sigma): sigma_dot = (1/4) B(sigma) omega.
inline Mat3 mrp_kinematics_matrix(const Vec3& sigma) {
    const double s2 = sigma.squaredNorm();
    return (1.0 - s2) * Mat3::Identity() + 2.0 * skew(sigma)
         + 2.0 * sigma * sigma.transpose();
}

/// Time derivative of B along (sigma, sigma_dot).
inline Mat3 mrp_kinematics_matrix_dot(const Vec3& sigma, const Vec3& sigma_dot) {
    return -2.0 * sigma.dot(sigma_dot) * Mat3::Identity() + 2.0 * skew(sigma_dot)
         + 2.0 * (sigma_dot * sigma.transpose() + sigma * sigma_dot.transpose());
}

/// Closed-form inverse: B^-1 = B^T / (1 + sigma.sigma)^2. B is always invertible.
inline Mat3 mrp_kinematics_inverse(const Vec3& sigma) {
    const double s2 = sigma.squaredNorm();
    return mrp_kinematics_matrix(sigma).transpose() / ((1.0 + s2) * (1.0 + s2));
}

/// Shadow-set counterpart representing the same physical attitude.
inline Vec3 mrp_shadow(const Vec3& sigma) {
    return -sigma / sigma.squaredNorm();
}

/// Map to the inner set: switch to the shadow set when |sigma| > 1.
inline Vec3 mrp_switch(const Vec3& sigma) {
    return sigma.squaredNorm() > 1.0 ? mrp_shadow(sigma) : sigma;
}

struct AttitudeError {
    Vec3 sigma_e;   ///< error MRP of dcm_rel, shadow-enforced
    Vec3 omega_err; ///< body rate minus desired rate mapped into body frame
    Mat3 dcm_rel;   ///< rotation from desired frame to body frame
};

/// Tracking error between the body attitude (sigma, omega) and the desired
/// frame (sigma_d, omega_d given in the desired frame).
inline AttitudeError attitude_error(const Vec3& sigma, const Vec3& sigma_d,
                                    const Vec3& omega, const Vec3& omega_d) {
    AttitudeError e;
    e.dcm_rel = dcm_from_mrp(sigma) * dcm_from_mrp(sigma_d).transpose();
    e.sigma_e = mrp_switch(mrp_from_dcm(e.dcm_rel));
    e.omega_err = omega - e.dcm_rel * omega_d;
    return e;
}

}  // namespace rwhil
