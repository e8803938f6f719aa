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

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rwhil/attitude.hpp"
#include "rwhil/guidance.hpp"

namespace rwhil {

inline constexpr int kLogSchemaVersion = 1;

/// One controller-period row holding every plotted quantity.
struct RunRow {
    double t = 0.0;
    Vec3 sigma = Vec3::Zero();       ///< truth attitude
    Vec3 omega = Vec3::Zero();       ///< truth body rate
    VecX wheel_speed;                ///< truth wheel speeds
    Vec3 sigma_hat = Vec3::Zero();
    Vec3 omega_hat = Vec3::Zero();
    Vec3 sigma_d = Vec3::Zero();
    Vec3 omega_d = Vec3::Zero();
    Vec3 sigma_e = Vec3::Zero();     ///< truth tracking error MRP
    Vec3 omega_err = Vec3::Zero();   ///< truth body-rate tracking error
    VecX u;                          ///< controller's allocated wheel torques
    VecX cmd;                        ///< wire command values (A or rad/s)
    VecX omega_meas;
    VecX current_meas;
    VecX theta_hat;
    double lambda = 0.0;
};

struct RunLog {
    int n_wheels = 0;
    std::vector<RunRow> rows;
};

namespace logdetail {

inline void append_num(std::string& line, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    line += buf;
}

inline void append_vec(std::string& line, const Vec3& v) {
    append_num(line, v.x());
    append_num(line, v.y());
    append_num(line, v.z());
}

inline void append_vecx(std::string& line, const VecX& v) {
    for (int i = 0; i < v.size(); ++i) {
        append_num(line, v[i]);
    }
}

}  // namespace logdetail

inline std::vector<std::string> runlog_columns(int n_wheels) {
    std::vector<std::string> cols{"t"};
    auto triple = [&](const std::string& base) {
        cols.push_back(base + "_x");
        cols.push_back(base + "_y");
        cols.push_back(base + "_z");
    };
    auto per_wheel = [&](const std::string& base) {
        for (int w = 1; w <= n_wheels; ++w) {
            cols.push_back(base + "_" + std::to_string(w));
        }
    };
    triple("sigma");
    triple("omega");
    per_wheel("wheel_speed");
    triple("sigma_hat");
    triple("omega_hat");
    triple("sigma_d");
    triple("omega_d");
    triple("sigma_e");
    triple("omega_err");
    per_wheel("u");
    per_wheel("cmd");
    per_wheel("omega_meas");
    per_wheel("current_meas");
    per_wheel("theta_hat");
    cols.push_back("lambda");
    return cols;
}

inline void write_runlog_csv(const RunLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out.good()) {
        throw std::runtime_error("cannot write log file: " + path);
    }
    const auto cols = runlog_columns(log.n_wheels);
    for (std::size_t i = 0; i < cols.size(); ++i) {
        out << (i ? "," : "") << cols[i];
    }
    out << "\r\n";
    for (const RunRow& r : log.rows) {
        std::string line;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", r.t);
        line += buf;
        logdetail::append_vec(line, r.sigma);
        logdetail::append_vec(line, r.omega);
        logdetail::append_vecx(line, r.wheel_speed);
        logdetail::append_vec(line, r.sigma_hat);
        logdetail::append_vec(line, r.omega_hat);
        logdetail::append_vec(line, r.sigma_d);
        logdetail::append_vec(line, r.omega_d);
        logdetail::append_vec(line, r.sigma_e);
        logdetail::append_vec(line, r.omega_err);
        logdetail::append_vecx(line, r.u);
        logdetail::append_vecx(line, r.cmd);
        logdetail::append_vecx(line, r.omega_meas);
        logdetail::append_vecx(line, r.current_meas);
        logdetail::append_vecx(line, r.theta_hat);
        logdetail::append_num(line, r.lambda);
        out << line << "\r\n";
    }
}

inline RunLog read_runlog_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) {
        throw std::runtime_error("cannot read log file: " + path);
    }
    std::string header;
    std::getline(in, header);
    while (!header.empty() && (header.back() == '\r' || header.back() == '\n')) {
        header.pop_back();
    }
    // wheel count from the header: count theta_hat_* columns
    int n_wheels = 0;
    std::size_t pos = 0;
    while ((pos = header.find("theta_hat_", pos)) != std::string::npos) {
        ++n_wheels;
        pos += 10;
    }
    const auto expected = runlog_columns(n_wheels);
    std::string joined;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        joined += (i ? "," : "") + expected[i];
    }
    if (header != joined) {
        throw std::runtime_error("unexpected log schema in " + path);
    }

    RunLog log;
    log.n_wheels = n_wheels;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<double> vals;
        vals.reserve(expected.size());
        std::size_t start = 0;
        while (start <= line.size()) {
            const std::size_t comma = line.find(',', start);
            const std::string cell =
                line.substr(start, comma == std::string::npos ? comma : comma - start);
            vals.push_back(std::stod(cell));
            if (comma == std::string::npos) {
                break;
            }
            start = comma + 1;
        }
        if (vals.size() != expected.size()) {
            throw std::runtime_error("malformed log row in " + path);
        }
        RunRow r;
        std::size_t k = 0;
        auto take3 = [&](Vec3& v) {
            v.x() = vals[k++];
            v.y() = vals[k++];
            v.z() = vals[k++];
        };
        auto take_n = [&](VecX& v) {
            v.resize(n_wheels);
            for (int w = 0; w < n_wheels; ++w) {
                v[w] = vals[k++];
            }
        };
        r.t = vals[k++];
        take3(r.sigma);
        take3(r.omega);
        take_n(r.wheel_speed);
        take3(r.sigma_hat);
        take3(r.omega_hat);
        take3(r.sigma_d);
        take3(r.omega_d);
        take3(r.sigma_e);
        take3(r.omega_err);
        take_n(r.u);
        take_n(r.cmd);
        take_n(r.omega_meas);
        take_n(r.current_meas);
        take_n(r.theta_hat);
        r.lambda = vals[k++];
        log.rows.push_back(std::move(r));
    }
    return log;
}

struct StatSummary {
    double mean = 0.0;
    double max = 0.0;
    double stddev = 0.0;
    double p99 = 0.0;
    long count = 0;
};

inline StatSummary summarize(std::vector<double> samples) {
    StatSummary s;
    s.count = static_cast<long>(samples.size());
    if (samples.empty()) {
        return s;
    }
    double sum = 0.0;
    for (double v : samples) {
        sum += v;
        s.max = std::max(s.max, v);
    }
    s.mean = sum / static_cast<double>(samples.size());
    double var = 0.0;
    for (double v : samples) {
        var += (v - s.mean) * (v - s.mean);
    }
    s.stddev = std::sqrt(var / static_cast<double>(samples.size()));
    std::sort(samples.begin(), samples.end());
    const auto idx = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(samples.size()) - 1.0,
                         std::ceil(0.99 * static_cast<double>(samples.size())) - 1.0));
    s.p99 = samples[idx];
    return s;
}

inline nlohmann::json stat_to_json(const StatSummary& s) {
    return {{"mean", s.mean},
            {"max", s.max},
            {"stddev", s.stddev},
            {"p99", s.p99},
            {"count", s.count}};
}

struct TopicRateStats {
    std::string topic;
    double expected_period = 0.0;
    StatSummary period;
    long overruns = 0;
};

struct PhaseTrackingStats {
    double t_start = 0.0;
    double t_end = 0.0;
    double max_sigma_e_tail = 0.0;  ///< max |sigma_e| over the final 200 s
    double rate_err_at_end = 0.0;   ///< |omega_err| at the last row of the phase
};

struct MetricsSummary {
    bool no_data = true;
    std::string mode;
    double sim_duration = 0.0;
    double wall_time = 0.0;
    StatSummary ctl_step_ms;
    std::vector<TopicRateStats> rates;
    std::uint64_t crc_errors = 0;
    std::uint64_t seq_gaps = 0;
    std::uint64_t frames_delivered = 0;
    VecX theta_final;
    double lambda_final = 0.0;
    double lambda_crossing_t = -1.0;  ///< first time lambda >= threshold, -1 if never
    double final_sigma_e = 0.0;
    double final_rate_err = 0.0;
    std::vector<PhaseTrackingStats> phases;
};

/// Tracking/estimation metrics from the log. Timing and transport statistics
/// are filled in by the harness that owns the clocks and sockets.
inline MetricsSummary compute_metrics(const RunLog& log, const GuidanceTimeline& tl,
                                      double lambda_threshold) {
    MetricsSummary m;
    if (log.rows.empty()) {
        return m;
    }
    m.no_data = false;
    m.sim_duration = log.rows.back().t;
    m.theta_final = log.rows.back().theta_hat;
    m.lambda_final = log.rows.back().lambda;
    m.final_sigma_e = log.rows.back().sigma_e.norm();
    m.final_rate_err = log.rows.back().omega_err.norm();
    for (const RunRow& r : log.rows) {
        if (r.lambda >= lambda_threshold) {
            m.lambda_crossing_t = r.t;
            break;
        }
    }

    double phase_start = 0.0;
    for (double edge : guidance_phase_edges(tl)) {
        if (edge > m.sim_duration + 1e-9) {
            edge = m.sim_duration;
        }
        PhaseTrackingStats ph;
        ph.t_start = phase_start;
        ph.t_end = edge;
        const double tail_start = std::max(phase_start, edge - 200.0);
        const RunRow* last_in_phase = nullptr;
        for (const RunRow& r : log.rows) {
            if (r.t < phase_start || r.t >= edge) {
                continue;
            }
            last_in_phase = &r;
            if (r.t >= tail_start) {
                ph.max_sigma_e_tail = std::max(ph.max_sigma_e_tail, r.sigma_e.norm());
            }
        }
        if (last_in_phase != nullptr) {
            ph.rate_err_at_end = last_in_phase->omega_err.norm();
            m.phases.push_back(ph);
        }
        phase_start = edge;
        if (edge >= m.sim_duration) {
            break;
        }
    }
    return m;
}

inline nlohmann::json metrics_to_json(const MetricsSummary& m) {
    nlohmann::json j;
    j["no_data"] = m.no_data;
    if (m.no_data) {
        return j;
    }
    j["mode"] = m.mode;
    j["sim_duration_s"] = m.sim_duration;
    j["wall_time_s"] = m.wall_time;
    j["controller_step_ms"] = stat_to_json(m.ctl_step_ms);
    j["crc_errors"] = m.crc_errors;
    j["seq_gaps"] = m.seq_gaps;
    j["frames_delivered"] = m.frames_delivered;
    nlohmann::json rates = nlohmann::json::array();
    for (const auto& r : m.rates) {
        rates.push_back({{"topic", r.topic},
                         {"expected_period_s", r.expected_period},
                         {"period_s", stat_to_json(r.period)},
                         {"overruns", r.overruns}});
    }
    j["topic_rates"] = rates;
    nlohmann::json theta = nlohmann::json::array();
    for (int i = 0; i < m.theta_final.size(); ++i) {
        theta.push_back(m.theta_final[i]);
    }
    j["theta_final"] = theta;
    j["lambda_final"] = m.lambda_final;
    j["lambda_crossing_t_s"] = m.lambda_crossing_t;
    j["final_sigma_e"] = m.final_sigma_e;
    j["final_rate_err"] = m.final_rate_err;
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& p : m.phases) {
        phases.push_back({{"t_start_s", p.t_start},
                          {"t_end_s", p.t_end},
                          {"max_sigma_e_final_200s", p.max_sigma_e_tail},
                          {"rate_err_at_end", p.rate_err_at_end}});
    }
    j["phases"] = phases;
    return j;
}

/// Known plot keys and their column layouts (one tidy CSV per figure).
inline std::vector<std::string> plot_keys() {
    return {"error-mrp", "body-rate", "lambda", "theta-hat", "wheel-speed"};
}

inline void emit_plot_data(const RunLog& log, const std::string& which,
                           const std::string& out_dir) {
    auto open = [&](const std::string& name) {
        std::ofstream out(out_dir + "/" + name + ".csv");
        if (!out.good()) {
            throw std::runtime_error("cannot write plot file in " + out_dir);
        }
        return out;
    };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };

    if (which == "error-mrp") {
        auto out = open("error_mrp");
        out << "t,sigma_e_x,sigma_e_y,sigma_e_z\r\n";
        for (const auto& r : log.rows) {
            out << num(r.t) << ',' << num(r.sigma_e.x()) << ',' << num(r.sigma_e.y())
                << ',' << num(r.sigma_e.z()) << "\r\n";
        }
    } else if (which == "body-rate") {
        auto out = open("body_rate");
        out << "t,omega_x,omega_y,omega_z\r\n";
        for (const auto& r : log.rows) {
            out << num(r.t) << ',' << num(r.omega.x()) << ',' << num(r.omega.y())
                << ',' << num(r.omega.z()) << "\r\n";
        }
    } else if (which == "lambda") {
        auto out = open("lambda");
        out << "t,lambda\r\n";
        for (const auto& r : log.rows) {
            out << num(r.t) << ',' << num(r.lambda) << "\r\n";
        }
    } else if (which == "theta-hat") {
        auto out = open("theta_hat");
        out << "t";
        for (int w = 1; w <= log.n_wheels; ++w) {
            out << ",theta_hat_" << w;
        }
        out << ",lambda\r\n";
        for (const auto& r : log.rows) {
            out << num(r.t);
            for (int w = 0; w < log.n_wheels; ++w) {
                out << ',' << num(r.theta_hat[w]);
            }
            out << ',' << num(r.lambda) << "\r\n";
        }
    } else if (which == "wheel-speed") {
        auto out = open("wheel_speed");
        out << "t";
        for (int w = 1; w <= log.n_wheels; ++w) {
            out << ",omega_meas_" << w;
        }
        out << "\r\n";
        for (const auto& r : log.rows) {
            out << num(r.t);
            for (int w = 0; w < log.n_wheels; ++w) {
                out << ',' << num(r.omega_meas[w]);
            }
            out << "\r\n";
        }
    } else {
        std::string valid;
        for (const auto& k : plot_keys()) {
            valid += (valid.empty() ? "" : ", ") + k;
        }
        throw std::runtime_error("unknown plot key '" + which + "'; valid: " + valid);
    }
}

}  // namespace rwhil
