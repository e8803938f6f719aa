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

#include <cstdint>
#include <vector>

#include "rwhil/dynamics.hpp"
#include "rwhil/rng.hpp"

namespace rwhil {

struct SensorSuiteParams {
    double gyro_rate_hz = 0.0;
    double mag_rate_hz = 0.0;
    double sun_rate_hz = 0.0;
    double gyro_noise = 0.0;       ///< per-sample std [rad/s]
    double gyro_bias_walk = 0.0;   ///< bias random walk [rad/s per sqrt(s)]
    Vec3 gyro_bias0 = Vec3::Zero();
    double vector_noise = 0.0;     ///< per-axis additive noise on unit vectors [rad]
    Vec3 ref_mag = Vec3::UnitX();  ///< inertial reference direction
    Vec3 ref_sun = Vec3::UnitZ();  ///< inertial reference direction
};

enum class SensorKind : std::uint8_t { gyro = 0, mag = 1, sun = 2 };

struct SensorSample {
    double t = 0.0;
    SensorKind kind = SensorKind::gyro;
    Vec3 value = Vec3::Zero();
};

/// Simulated sensor suite. Sampling is driven by integer tick counts so rate
/// boundaries stay exact over long runs; the true gyro bias random-walks one
/// step per gyro sample.
class SensorRig {
public:
    SensorRig(const SensorSuiteParams& params, double tick_dt)
        : params_(params),
          bias_(params.gyro_bias0),
          gyro_period_(period_ticks(params.gyro_rate_hz, tick_dt)),
          mag_period_(period_ticks(params.mag_rate_hz, tick_dt)),
          sun_period_(period_ticks(params.sun_rate_hz, tick_dt)),
          gyro_dt_(1.0 / params.gyro_rate_hz) {}

    /// Samples due at this tick. Pass rng = nullptr for noise-free output.
    std::vector<SensorSample> poll(const BodyState& truth, long tick, Rng* rng) {
        std::vector<SensorSample> out;
        const Mat3 dcm = dcm_from_mrp(truth.sigma);
        if (tick % gyro_period_ == 0) {
            if (rng != nullptr) {
                for (int i = 0; i < 3; ++i) {
                    bias_[i] += rng->gaussian(params_.gyro_bias_walk * std::sqrt(gyro_dt_));
                }
            }
            Vec3 v = truth.omega + bias_;
            if (rng != nullptr) {
                for (int i = 0; i < 3; ++i) {
                    v[i] += rng->gaussian(params_.gyro_noise);
                }
            }
            out.push_back({truth.t, SensorKind::gyro, v});
        }
        if (tick % mag_period_ == 0) {
            out.push_back({truth.t, SensorKind::mag,
                           vector_measurement(dcm, params_.ref_mag, rng)});
        }
        if (tick % sun_period_ == 0) {
            out.push_back({truth.t, SensorKind::sun,
                           vector_measurement(dcm, params_.ref_sun, rng)});
        }
        return out;
    }

    const Vec3& true_bias() const { return bias_; }

private:
    static long period_ticks(double rate_hz, double tick_dt) {
        return std::max(1L, std::lround(1.0 / (rate_hz * tick_dt)));
    }

    Vec3 vector_measurement(const Mat3& dcm, const Vec3& ref, Rng* rng) const {
        Vec3 v = dcm * ref;
        if (rng != nullptr) {
            for (int i = 0; i < 3; ++i) {
                v[i] += rng->gaussian(params_.vector_noise);
            }
        }
        return v.normalized();
    }

    SensorSuiteParams params_;
    Vec3 bias_;
    long gyro_period_;
    long mag_period_;
    long sun_period_;
    double gyro_dt_;
};

}  // namespace rwhil
