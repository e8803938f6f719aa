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

#include <cmath>
#include <vector>

#include "rwhil/attitude.hpp"

namespace rwhil {

/// Circular-orbit stand-in: enough geometry for a nadir-pointing target.
struct OrbitModel {
    double rate = 0.0;                  ///< orbital angular rate n [rad/s]
    double phase0 = 0.0;                ///< phase offset at t = 0 [rad]
    Vec3 normal = Vec3::UnitY();        ///< orbit normal, inertial unit vector
    Vec3 nadir_epoch = Vec3::UnitZ();   ///< nadir direction at zero phase, inertial

    Vec3 nadir(double t) const {
        return Eigen::AngleAxisd(rate * t + phase0, normal) * nadir_epoch;
    }
};

struct GuidanceTimeline {
    double duration = 0.0;          ///< [s]
    double switch_period = 0.0;     ///< alternation period [s]
    double nadir_hold_after = 0.0;  ///< nadir-pointing held from here on [s]
};

struct GuidanceSample {
    Vec3 sigma_d = Vec3::Zero();
    Vec3 omega_d = Vec3::Zero();      ///< desired-frame components [rad/s]
    Vec3 omega_dot_d = Vec3::Zero();  ///< [rad/s^2]
};

/// Desired frame for nadir pointing: body +z toward nadir, body -y along the
/// orbit normal, x completing the triad. Rotates at the orbital rate.
inline GuidanceSample nadir_target(double t, const OrbitModel& orbit) {
    GuidanceSample g;
    const Vec3 z_d = orbit.nadir(t).normalized();
    const Vec3 y_d = (-orbit.normal).normalized();
    const Vec3 x_d = y_d.cross(z_d).normalized();
    Mat3 dcm_d;  // desired <- inertial
    dcm_d.row(0) = x_d;
    dcm_d.row(1) = y_d;
    dcm_d.row(2) = z_d;
    g.sigma_d = mrp_switch(mrp_from_dcm(dcm_d));
    g.omega_d = orbit.rate * (dcm_d * orbit.normal);
    g.omega_dot_d = Vec3::Zero();
    return g;
}

inline bool guidance_phase_is_nadir(double t, const GuidanceTimeline& tl) {
    if (t >= tl.nadir_hold_after) {
        return true;
    }
    const auto phase = static_cast<long>(std::floor(t / tl.switch_period));
    return phase % 2 == 1;
}

/// Target attitude at time t: inertial hold (identity) on even phases, the
/// nadir-pointing frame on odd phases, nadir held after the hold epoch.
inline GuidanceSample guidance(double t, const GuidanceTimeline& tl,
                               const OrbitModel& orbit) {
    if (guidance_phase_is_nadir(t, tl)) {
        return nadir_target(t, orbit);
    }
    return GuidanceSample{};
}

/// Phase boundaries of the guidance timeline (ascending, ending at duration).
/// Used for per-phase tracking metrics.
inline std::vector<double> guidance_phase_edges(const GuidanceTimeline& tl) {
    std::vector<double> edges;
    for (double t = tl.switch_period; t < tl.nadir_hold_after; t += tl.switch_period) {
        edges.push_back(t);
    }
    edges.push_back(tl.nadir_hold_after);
    if (edges.back() < tl.duration) {
        edges.push_back(tl.duration);
    } else {
        edges.back() = tl.duration;
    }
    return edges;
}

}  // namespace rwhil
