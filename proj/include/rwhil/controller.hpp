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

#include <deque>
#include <stdexcept>
#include <vector>

#include "rwhil/attitude.hpp"
#include "rwhil/dynamics.hpp"
#include "rwhil/guidance.hpp"
#include "rwhil/wheel.hpp"

namespace rwhil {

class AllocationError : public std::runtime_error {
public:
    explicit AllocationError(const std::string& what) : std::runtime_error(what) {}
};

struct ControlGains {
    Mat3 alpha = Mat3::Zero();   ///< SPD gain on the error MRP inside r
    double beta = 0.0;           ///< scalar gain on sigma_e
    Mat3 k_fb = Mat3::Zero();    ///< SPD feedback gain K on r
    MatX gamma;                  ///< adaptation gain, N x N SPD
    MatX k_icl;                  ///< learning-term gain K_1, N x N SPD
    double lambda_min = 0.0;     ///< excitation threshold: learning term active at lambda >= this
    double theta_min = 0.0;      ///< health estimate projection bounds
    double theta_max = 1.0;
};

/// History-stack configuration for the integral learning term.
struct IclParams {
    double window = 10.0;        ///< integration window [s]
    int capacity = 20;           ///< maximum stored records
    double admit_ratio = 0.01;   ///< required relative excitation gain for admission
};

/// One stored window of integrated input/output data.
struct IclRecord {
    double t = 0.0;                    ///< window end time
    Vec3 gyro_integral = Vec3::Zero(); ///< integral of w x (J w + J_rw G Omega)
    MatX torque_integral;              ///< 3 x N integral of G diag(u)
    Vec3 momentum_delta = Vec3::Zero();///< J w(t) - J w(t - window)
};

struct IclHistory {
    std::vector<IclRecord> records;
    MatX gram;             ///< running sum of torque_integral^T torque_integral
    double lambda = 0.0;   ///< min eigenvalue of gram; never decreases

    explicit IclHistory(int n_wheels = 0) { reset(n_wheels); }
    void reset(int n_wheels) {
        records.clear();
        gram = MatX::Zero(n_wheels, n_wheels);
        lambda = 0.0;
    }
};

/// One buffered controller-rate sample used to build the window integrals.
struct ControlSample {
    double t = 0.0;
    Vec3 omega_hat = Vec3::Zero();
    VecX wheel_speed;  ///< measured wheel speeds
    VecX u;            ///< allocated wheel torques (controller's own view)
};

/// Error terms shared by the control law and the adaptation law.
struct ErrorTerms {
    AttitudeError att;
    Vec3 sigma_e_dot = Vec3::Zero();
    Vec3 r = Vec3::Zero();  ///< modified error state: sigma_e_dot + alpha sigma_e
    Mat3 B = Mat3::Identity();
};

inline ErrorTerms compute_error_terms(const Vec3& sigma_hat, const Vec3& omega_hat,
                                      const GuidanceSample& target,
                                      const ControlGains& g) {
    ErrorTerms e;
    e.att = attitude_error(sigma_hat, target.sigma_d, omega_hat, target.omega_d);
    e.B = mrp_kinematics_matrix(e.att.sigma_e);
    e.sigma_e_dot = 0.25 * e.B * e.att.omega_err;
    e.r = e.sigma_e_dot + g.alpha * e.att.sigma_e;
    return e;
}

/// Auxiliary control torque (3-axis, body frame):
///   u_d = w x (J w + J_rw G Omega) + J Rrel wdot_d - J [w_err x] Rrel w_d
///       + 4 J B^-1 (-1/4 Bdot w_err - alpha sigma_e_dot - K r - beta sigma_e)
inline Vec3 aux_control(const ErrorTerms& e, const Vec3& omega_hat,
                        const VecX& wheel_speed, const GuidanceSample& target,
                        const SpacecraftParams& p, const ControlGains& g) {
    const Vec3 momentum_body =
        p.inertia * omega_hat + p.wheel_inertia * (p.wheel_axes * wheel_speed);
    const Mat3 B_dot = mrp_kinematics_matrix_dot(e.att.sigma_e, e.sigma_e_dot);
    const double s2 = e.att.sigma_e.squaredNorm();
    const Mat3 B_inv = e.B.transpose() / ((1.0 + s2) * (1.0 + s2));

    const Vec3 bracket = -0.25 * B_dot * e.att.omega_err - g.alpha * e.sigma_e_dot
                         - g.k_fb * e.r - g.beta * e.att.sigma_e;
    return omega_hat.cross(momentum_body) + p.inertia * (e.att.dcm_rel * target.omega_dot_d)
           - p.inertia * (skew(e.att.omega_err) * (e.att.dcm_rel * target.omega_d))
           + 4.0 * p.inertia * (B_inv * bracket);
}

inline Vec3 compute_aux_control(const Vec3& sigma_hat, const Vec3& omega_hat,
                                const GuidanceSample& target, const VecX& wheel_speed,
                                const SpacecraftParams& p, const ControlGains& g) {
    return aux_control(compute_error_terms(sigma_hat, omega_hat, target, g),
                       omega_hat, wheel_speed, target, p, g);
}

/// Minimum-norm wheel torques through the estimated health:
///   u = (G diag(theta_hat))^+ u_d.
/// Throws when G diag(theta_hat) loses rank 3 (cannot happen while theta is
/// projected above a positive floor and G has rank 3).
inline VecX allocate(const Vec3& u_d, const VecX& theta_hat, const MatX& wheel_axes) {
    const MatX weighted = wheel_axes * theta_hat.asDiagonal();  // 3 x N
    const Mat3 normal = weighted * weighted.transpose();
    Eigen::FullPivLU<Mat3> lu(normal);
    if (!lu.isInvertible()) {
        throw AllocationError("wheel allocation lost rank 3");
    }
    return weighted.transpose() * lu.solve(u_d);
}

namespace detail {

inline int psd_rank(const MatX& m) {
    Eigen::SelfAdjointEigenSolver<MatX> eig(m);
    const double floor = 1e-12 * std::max(eig.eigenvalues().maxCoeff(), 1e-30);
    return static_cast<int>((eig.eigenvalues().array() > floor).count());
}

inline double min_eigenvalue(const MatX& m) {
    Eigen::SelfAdjointEigenSolver<MatX> eig(m);
    return eig.eigenvalues().minCoeff();
}

}  // namespace detail

/// Builds the trailing-window record from the buffered samples and admits it
/// when it enriches the stored excitation: strictly better min eigenvalue of
/// the regressor Gram sum (by admit_ratio), or higher numerical rank while
/// the stack is still rank-deficient. A full stack swaps out the record whose
/// replacement helps the most, so long as the swap still improves lambda;
/// lambda never decreases either way. Returns true when a record was stored.
inline bool icl_accumulate(const std::deque<ControlSample>& buffer,
                           const SpacecraftParams& p, const IclParams& icl,
                           IclHistory& history) {
    if (buffer.size() < 2) {
        return false;
    }
    const double t_end = buffer.back().t;
    const double t_start = t_end - icl.window;
    if (buffer.front().t > t_start + 1e-9) {
        return false;  // buffer does not span the window yet
    }

    // Trapezoidal quadrature over samples inside [t_start, t_end].
    const int n = p.wheel_count();
    IclRecord rec;
    rec.t = t_end;
    rec.torque_integral = MatX::Zero(3, n);
    const ControlSample* prev = nullptr;
    Vec3 omega_at_start = Vec3::Zero();
    for (const ControlSample& s : buffer) {
        if (s.t < t_start - 1e-9) {
            continue;
        }
        if (prev == nullptr) {
            omega_at_start = s.omega_hat;
        } else {
            const double dt = s.t - prev->t;
            const Vec3 f_prev = prev->omega_hat.cross(
                p.inertia * prev->omega_hat +
                p.wheel_inertia * (p.wheel_axes * prev->wheel_speed));
            const Vec3 f_cur = s.omega_hat.cross(
                p.inertia * s.omega_hat +
                p.wheel_inertia * (p.wheel_axes * s.wheel_speed));
            rec.gyro_integral += 0.5 * dt * (f_prev + f_cur);
            rec.torque_integral += 0.5 * dt *
                (p.wheel_axes * prev->u.asDiagonal() + p.wheel_axes * s.u.asDiagonal());
        }
        prev = &s;
    }
    rec.momentum_delta = p.inertia * (buffer.back().omega_hat - omega_at_start);

    const MatX contribution = rec.torque_integral.transpose() * rec.torque_integral;

    if (static_cast<int>(history.records.size()) < icl.capacity) {
        const MatX gram_candidate = history.gram + contribution;
        const double lambda_candidate = detail::min_eigenvalue(gram_candidate);
        bool admit = lambda_candidate > history.lambda * (1.0 + icl.admit_ratio) &&
                     lambda_candidate > 0.0;
        if (!admit && history.lambda <= 0.0) {
            admit = detail::psd_rank(gram_candidate) > detail::psd_rank(history.gram);
        }
        if (!admit) {
            return false;
        }
        history.records.push_back(std::move(rec));
        history.gram = gram_candidate;
        history.lambda = std::max(history.lambda, lambda_candidate);
        return true;
    }

    // full stack: find the eviction that leaves the richest Gram sum
    int best_slot = -1;
    double best_lambda = history.lambda * (1.0 + icl.admit_ratio);
    for (std::size_t i = 0; i < history.records.size(); ++i) {
        const MatX& old = history.records[i].torque_integral;
        const MatX gram_swapped =
            history.gram - old.transpose() * old + contribution;
        const double lambda_swapped = detail::min_eigenvalue(gram_swapped);
        if (lambda_swapped > best_lambda) {
            best_lambda = lambda_swapped;
            best_slot = static_cast<int>(i);
        }
    }
    if (best_slot < 0) {
        return false;
    }
    const MatX& old = history.records[static_cast<std::size_t>(best_slot)].torque_integral;
    history.gram += contribution - old.transpose() * old;
    history.records[static_cast<std::size_t>(best_slot)] = std::move(rec);
    history.lambda = best_lambda;
    return true;
}

/// Residual of the integrated equations of motion for one record at a given
/// health vector; zero (up to quadrature error) at the true health.
inline Vec3 icl_residual(const IclRecord& rec, const VecX& theta) {
    return rec.momentum_delta + rec.gyro_integral - rec.torque_integral * theta;
}

/// Forward-Euler step of the adaptation law
///   theta_dot = proj{ 1/4 Gamma Y^T J^-T B^T r
///                     + Gamma K_1 sum_i Y_i^T (dJw_i + U_i - Y_i theta) }
/// with Y = G diag(u). The learning sum participates only once the stored
/// excitation has crossed lambda_min. Projection clamps each component to
/// [theta_min, theta_max] and zeroes outward derivatives at the bounds.
inline VecX adaptation_step(const VecX& theta_hat, const ErrorTerms& e, const VecX& u,
                            const SpacecraftParams& p, const IclHistory& history,
                            const ControlGains& g, double dt) {
    const MatX Y = p.wheel_axes * u.asDiagonal();
    VecX theta_dot = 0.25 * g.gamma *
        (Y.transpose() * (p.inertia_inv.transpose() * (e.B.transpose() * e.r)));

    if (history.lambda >= g.lambda_min) {
        VecX learning = VecX::Zero(theta_hat.size());
        for (const IclRecord& rec : history.records) {
            learning += rec.torque_integral.transpose() * icl_residual(rec, theta_hat);
        }
        theta_dot += g.gamma * (g.k_icl * learning);
    }

    VecX out = theta_hat;
    for (int i = 0; i < out.size(); ++i) {
        if ((out[i] >= g.theta_max && theta_dot[i] > 0.0) ||
            (out[i] <= g.theta_min && theta_dot[i] < 0.0)) {
            continue;
        }
        out[i] = std::clamp(out[i] + theta_dot[i] * dt, g.theta_min, g.theta_max);
    }
    return out;
}

/// Wheel-frame torque command for wheel torque-on-body u_i. The flywheel is
/// accelerated opposite to the torque it exerts on the body.
inline double wheel_torque_command(double u_wheel) { return -u_wheel; }

/// Current command for a wheel-frame torque, clamped to the driver limit.
inline double torque_to_current_cmd(double tau_cmd, const WheelParams& p) {
    const double limit = p.current_limit();
    return std::clamp(tau_cmd / p.torque_constant, -limit, limit);
}

/// Velocity command by forward-Euler integration of the saturated torque;
/// `speed_cmd` is the per-wheel integrator, clamped to the speed limit.
inline double torque_to_velocity_cmd(double tau_cmd, double& speed_cmd,
                                     const WheelParams& p, double dt) {
    const double accel = std::clamp(tau_cmd, -p.torque_max, p.torque_max) / p.inertia;
    speed_cmd = std::clamp(speed_cmd + accel * dt, -p.speed_max, p.speed_max);
    return speed_cmd;
}

/// Per-wheel command scale factors active at time t (latest event wins).
inline VecX command_fault_scales(const std::vector<FaultEvent>& schedule, double t,
                                 int n_wheels) {
    VecX scales = VecX::Ones(n_wheels);
    for (const FaultEvent& ev : schedule) {
        if (ev.t > t) {
            break;
        }
        if (ev.target == FaultTarget::command && ev.kind == FaultKind::scale) {
            scales[ev.wheel] = ev.value;
        }
    }
    return scales;
}

/// Scales the commanded effort per the fault schedule. The controller's
/// internal state never sees the scaled values; the health estimator has to
/// discover them.
inline VecX induce_command_fault(const VecX& u, const std::vector<FaultEvent>& schedule,
                                 double t) {
    return u.cwiseProduct(command_fault_scales(schedule, t, static_cast<int>(u.size())));
}

}  // namespace rwhil
