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

#include <filesystem>
#include <fstream>

#include "rwhil/rng.hpp"
#include "rwhil/runlog.hpp"

using namespace rwhil;

namespace {

RunRow make_row(double t, int n, Rng& rng) {
    RunRow r;
    r.t = t;
    r.sigma = Vec3::Random();
    r.omega = Vec3::Random() * 0.01;
    r.wheel_speed = VecX::Random(n) * 100;
    r.sigma_hat = r.sigma + Vec3::Random() * 1e-3;
    r.omega_hat = r.omega;
    r.sigma_d = Vec3::Random() * 0.5;
    r.omega_d = Vec3::Random() * 0.001;
    r.sigma_e = Vec3::Random() * 0.1;
    r.omega_err = Vec3::Random() * 0.001;
    r.u = VecX::Random(n) * 1e-3;
    r.cmd = VecX::Random(n) * 100;
    r.omega_meas = r.wheel_speed + VecX::Random(n);
    r.current_meas = VecX::Random(n);
    r.theta_hat = VecX::Ones(n) - VecX::Random(n).cwiseAbs() * 0.2;
    r.lambda = rng.uniform() * 1e-6;
    return r;
}

std::string temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("rwhil_log_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir.string();
}

}  // namespace

TEST_CASE("statistics summary on known samples") {
    // values 1..100: mean 50.5, max 100, p99 = 99th of the sorted set
    std::vector<double> vals;
    for (int i = 1; i <= 100; ++i) {
        vals.push_back(i);
    }
    const StatSummary s = summarize(vals);
    CHECK(s.count == 100);
    CHECK(s.mean == Catch::Approx(50.5));
    CHECK(s.max == 100.0);
    CHECK(s.p99 == 99.0);
    CHECK(s.stddev == Catch::Approx(std::sqrt(833.25)).epsilon(1e-12));

    const StatSummary empty = summarize({});
    CHECK(empty.count == 0);
    CHECK(empty.mean == 0.0);
}

TEST_CASE("run log csv round trip") {
    Rng rng(801);
    RunLog log;
    log.n_wheels = 4;
    for (int k = 0; k < 50; ++k) {
        log.rows.push_back(make_row(0.1 * k, 4, rng));
    }
    const auto dir = temp_dir();
    const auto path = dir + "/roundtrip.csv";
    write_runlog_csv(log, path);
    const RunLog back = read_runlog_csv(path);
    REQUIRE(back.n_wheels == 4);
    REQUIRE(back.rows.size() == log.rows.size());
    for (std::size_t i = 0; i < log.rows.size(); ++i) {
        REQUIRE(back.rows[i].t == log.rows[i].t);
        REQUIRE(back.rows[i].sigma == log.rows[i].sigma);
        REQUIRE(back.rows[i].theta_hat == log.rows[i].theta_hat);
        REQUIRE(back.rows[i].lambda == log.rows[i].lambda);
        REQUIRE(back.rows[i].omega_meas == log.rows[i].omega_meas);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("csv has a header row and CRLF line endings") {
    Rng rng(802);
    RunLog log;
    log.n_wheels = 2;
    log.rows.push_back(make_row(0.0, 2, rng));
    const auto dir = temp_dir();
    const auto path = dir + "/style.csv";
    write_runlog_csv(log, path);

    std::ifstream in(path, std::ios::binary);
    std::string first;
    std::getline(in, first);
    REQUIRE(!first.empty());
    CHECK(first.back() == '\r');
    CHECK(first.rfind("t,sigma_x,sigma_y,sigma_z,", 0) == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("metrics from a synthetic log") {
    RunLog log;
    log.n_wheels = 4;
    GuidanceTimeline tl{400.0, 120.0, 300.0};
    // phases: [0,120), [120,240), [240,300), [300,400]
    for (int k = 0; k <= 4000; ++k) {
        RunRow r;
        const double t = 0.1 * k;
        r.t = t;
        r.wheel_speed = VecX::Zero(4);
        r.u = VecX::Zero(4);
        r.cmd = VecX::Zero(4);
        r.omega_meas = VecX::Zero(4);
        r.current_meas = VecX::Zero(4);
        r.theta_hat = VecX::Ones(4) * 0.9;
        r.sigma_e = Vec3(std::exp(-0.05 * t), 0, 0);
        r.omega_err = Vec3(0.001, 0, 0);
        r.lambda = t >= 150.0 ? 2e-7 : 0.0;
        log.rows.push_back(r);
    }
    const MetricsSummary m = compute_metrics(log, tl, 1e-7);
    CHECK_FALSE(m.no_data);
    CHECK(m.sim_duration == Catch::Approx(400.0));
    CHECK(m.lambda_crossing_t == Catch::Approx(150.0));
    CHECK(m.theta_final[0] == 0.9);
    REQUIRE(m.phases.size() == 4);
    CHECK(m.phases[0].t_end == 120.0);
    CHECK(m.phases[3].t_end == 400.0);
    // the tail max of phase 0 is sigma_e at t = end-200 clipped to phase start
    CHECK(m.phases[0].max_sigma_e_tail == Catch::Approx(1.0));
    // phase 3 spans [300, 400]; its 200 s tail clips to the phase start
    CHECK(m.phases[3].max_sigma_e_tail ==
          Catch::Approx(std::exp(-0.05 * 300.0)).epsilon(1e-2));
    CHECK(m.phases[3].rate_err_at_end == Catch::Approx(0.001));
}

TEST_CASE("empty run produces an explicit no-data summary") {
    RunLog log;
    log.n_wheels = 4;
    const MetricsSummary m = compute_metrics(log, {100.0, 50.0, 80.0}, 1e-7);
    CHECK(m.no_data);
    const auto j = metrics_to_json(m);
    CHECK(j.at("no_data").get<bool>());
}

TEST_CASE("plot emission writes one tidy file per figure") {
    Rng rng(803);
    RunLog log;
    log.n_wheels = 4;
    for (int k = 0; k < 11; ++k) {
        log.rows.push_back(make_row(0.1 * k, 4, rng));
    }
    const auto dir = temp_dir();

    for (const auto& key : plot_keys()) {
        emit_plot_data(log, key, dir);
    }

    auto count_lines = [](const std::string& p) {
        std::ifstream in(p);
        REQUIRE(in.good());
        std::string line;
        int n = 0;
        while (std::getline(in, line)) {
            if (!line.empty()) {
                ++n;
            }
        }
        return n;
    };
    auto header_of = [](const std::string& p) {
        std::ifstream in(p);
        std::string h;
        std::getline(in, h);
        while (!h.empty() && (h.back() == '\r' || h.back() == '\n')) {
            h.pop_back();
        }
        return h;
    };

    // theta-hat file: t + N estimates + lambda
    CHECK(header_of(dir + "/theta_hat.csv") ==
          "t,theta_hat_1,theta_hat_2,theta_hat_3,theta_hat_4,lambda");
    CHECK(count_lines(dir + "/theta_hat.csv") == 12);  // header + rows
    CHECK(header_of(dir + "/wheel_speed.csv") ==
          "t,omega_meas_1,omega_meas_2,omega_meas_3,omega_meas_4");
    CHECK(header_of(dir + "/error_mrp.csv") == "t,sigma_e_x,sigma_e_y,sigma_e_z");
    CHECK(count_lines(dir + "/lambda.csv") == 12);

    // unknown keys are refused with the valid options in the message
    try {
        emit_plot_data(log, "spectrogram", dir);
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("spectrogram") != std::string::npos);
        CHECK(msg.find("theta-hat") != std::string::npos);
        CHECK(msg.find("wheel-speed") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}
