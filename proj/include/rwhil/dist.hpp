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

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <functional>
#include <variant>

#include "rwhil/bus.hpp"
#include "rwhil/mil.hpp"

namespace rwhil {

namespace dist {

inline void write_table(const std::string& path,
                        const std::vector<std::string>& header,
                        const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out.good()) {
        throw std::runtime_error("cannot write " + path);
    }
    for (std::size_t i = 0; i < header.size(); ++i) {
        out << (i ? "," : "") << header[i];
    }
    out << "\r\n";
    char buf[32];
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", row[i]);
            out << (i ? "," : "") << buf;
        }
        out << "\r\n";
    }
}

inline std::vector<std::vector<double>> read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) {
        throw std::runtime_error("cannot read " + path);
    }
    std::string line;
    std::getline(in, line);  // header
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<double> row;
        std::size_t start = 0;
        while (start <= line.size()) {
            const std::size_t comma = line.find(',', start);
            row.push_back(std::stod(line.substr(
                start, comma == std::string::npos ? comma : comma - start)));
            if (comma == std::string::npos) {
                break;
            }
            start = comma + 1;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_sim_shard(const std::string& path,
                            const std::vector<SimShardRow>& shard, int n) {
    std::vector<std::string> header{"t"};
    auto add3 = [&](const std::string& b) {
        header.push_back(b + "_x");
        header.push_back(b + "_y");
        header.push_back(b + "_z");
    };
    add3("sigma");
    add3("omega");
    for (int w = 1; w <= n; ++w) {
        header.push_back("wheel_speed_" + std::to_string(w));
    }
    add3("sigma_hat");
    add3("omega_hat");
    add3("sigma_d");
    add3("omega_d");
    add3("sigma_e");
    add3("omega_err");

    std::vector<std::vector<double>> rows;
    rows.reserve(shard.size());
    for (const auto& s : shard) {
        std::vector<double> row{s.t};
        auto push3 = [&](const Vec3& v) {
            row.push_back(v.x());
            row.push_back(v.y());
            row.push_back(v.z());
        };
        push3(s.sigma);
        push3(s.omega);
        for (int w = 0; w < n; ++w) {
            row.push_back(s.wheel_speed[w]);
        }
        push3(s.sigma_hat);
        push3(s.omega_hat);
        push3(s.sigma_d);
        push3(s.omega_d);
        push3(s.sigma_e);
        push3(s.omega_err);
        rows.push_back(std::move(row));
    }
    write_table(path, header, rows);
}

inline std::vector<SimShardRow> read_sim_shard(const std::string& path, int n) {
    std::vector<SimShardRow> shard;
    for (const auto& row : read_table(path)) {
        if (static_cast<int>(row.size()) != 1 + 18 + n) {
            throw std::runtime_error("bad sim shard row in " + path);
        }
        SimShardRow s;
        std::size_t k = 0;
        auto take3 = [&](Vec3& v) {
            v.x() = row[k++];
            v.y() = row[k++];
            v.z() = row[k++];
        };
        s.t = row[k++];
        take3(s.sigma);
        take3(s.omega);
        s.wheel_speed.resize(n);
        for (int w = 0; w < n; ++w) {
            s.wheel_speed[w] = row[k++];
        }
        take3(s.sigma_hat);
        take3(s.omega_hat);
        take3(s.sigma_d);
        take3(s.omega_d);
        take3(s.sigma_e);
        take3(s.omega_err);
        shard.push_back(std::move(s));
    }
    return shard;
}

inline void write_ctl_shard(const std::string& path,
                            const std::vector<CtlShardRow>& shard, int n) {
    std::vector<std::string> header{"t"};
    for (int w = 1; w <= n; ++w) header.push_back("u_" + std::to_string(w));
    for (int w = 1; w <= n; ++w) header.push_back("cmd_" + std::to_string(w));
    for (int w = 1; w <= n; ++w) header.push_back("theta_hat_" + std::to_string(w));
    header.push_back("lambda");
    std::vector<std::vector<double>> rows;
    for (const auto& s : shard) {
        std::vector<double> row{s.t};
        for (int w = 0; w < n; ++w) row.push_back(s.u[w]);
        for (int w = 0; w < n; ++w) row.push_back(s.cmd[w]);
        for (int w = 0; w < n; ++w) row.push_back(s.theta_hat[w]);
        row.push_back(s.lambda);
        rows.push_back(std::move(row));
    }
    write_table(path, header, rows);
}

inline std::vector<CtlShardRow> read_ctl_shard(const std::string& path, int n) {
    std::vector<CtlShardRow> shard;
    for (const auto& row : read_table(path)) {
        if (static_cast<int>(row.size()) != 2 + 3 * n) {
            throw std::runtime_error("bad ctl shard row in " + path);
        }
        CtlShardRow s;
        std::size_t k = 0;
        s.t = row[k++];
        s.u.resize(n);
        s.cmd.resize(n);
        s.theta_hat.resize(n);
        for (int w = 0; w < n; ++w) s.u[w] = row[k++];
        for (int w = 0; w < n; ++w) s.cmd[w] = row[k++];
        for (int w = 0; w < n; ++w) s.theta_hat[w] = row[k++];
        s.lambda = row[k++];
        shard.push_back(std::move(s));
    }
    return shard;
}

inline void write_rw_shard(const std::string& path,
                           const std::vector<RwShardRow>& shard, int n) {
    std::vector<std::string> header{"t"};
    for (int w = 1; w <= n; ++w) header.push_back("omega_meas_" + std::to_string(w));
    for (int w = 1; w <= n; ++w) header.push_back("current_meas_" + std::to_string(w));
    std::vector<std::vector<double>> rows;
    for (const auto& s : shard) {
        std::vector<double> row{s.t};
        for (int w = 0; w < n; ++w) row.push_back(s.omega_meas[w]);
        for (int w = 0; w < n; ++w) row.push_back(s.current_meas[w]);
        rows.push_back(std::move(row));
    }
    write_table(path, header, rows);
}

inline std::vector<RwShardRow> read_rw_shard(const std::string& path, int n) {
    std::vector<RwShardRow> shard;
    for (const auto& row : read_table(path)) {
        if (static_cast<int>(row.size()) != 1 + 2 * n) {
            throw std::runtime_error("bad rw shard row in " + path);
        }
        RwShardRow s;
        std::size_t k = 0;
        s.t = row[k++];
        s.omega_meas.resize(n);
        s.current_meas.resize(n);
        for (int w = 0; w < n; ++w) s.omega_meas[w] = row[k++];
        for (int w = 0; w < n; ++w) s.current_meas[w] = row[k++];
        shard.push_back(std::move(s));
    }
    return shard;
}

/// Publisher adapter over the socket client. Accelerated runs stamp virtual
/// time; real-time runs stamp the wall clock so rate supervision sees real
/// jitter.
class ClientPublisher : public Publisher {
public:
    ClientPublisher(BusClient& client, bool accelerated)
        : client_(client),
          accelerated_(accelerated),
          epoch_(std::chrono::steady_clock::now()) {}

    void publish(Topic topic, std::vector<std::uint8_t> payload, double t) override {
        std::uint64_t stamp;
        if (accelerated_) {
            stamp = static_cast<std::uint64_t>(t * 1e9);
        } else {
            stamp = static_cast<std::uint64_t>(
                std::chrono::duration_cast<std::chrono::nanoseconds>(
                    std::chrono::steady_clock::now() - epoch_)
                    .count());
        }
        client_.publish(topic, std::move(payload), stamp);
    }

private:
    BusClient& client_;
    bool accelerated_;
    std::chrono::steady_clock::time_point epoch_;
};

}  // namespace dist

/// Entry point of a spawned node process. Connects, subscribes, waits for
/// the scenario broadcast, then serves ticks until shutdown. Returns the
/// process exit code.
inline int node_process_main(NodeRole role, const std::string& host, int port,
                             const std::string& out_dir) {
    try {
        BusClient client(host, port, role);
        std::vector<Topic> subs{Topic::config, Topic::tick, Topic::shutdown,
                                Topic::node_down};
        switch (role) {
            case NodeRole::sim:
                subs.push_back(Topic::rw_cmd);
                subs.push_back(Topic::rw_state);
                break;
            case NodeRole::controller:
                subs.push_back(Topic::est_state);
                subs.push_back(Topic::rw_state);
                break;
            case NodeRole::rw:
                subs.push_back(Topic::rw_cmd);
                break;
        }
        client.subscribe(subs);

        // wait for the scenario broadcast
        ScenarioConfig cfg;
        bool have_cfg = false;
        const auto deadline =
            std::chrono::steady_clock::now() + std::chrono::seconds(30);
        std::vector<Envelope> backlog;
        while (!have_cfg) {
            if (std::chrono::steady_clock::now() > deadline) {
                return 2;
            }
            for (Envelope& env : client.poll(100)) {
                if (static_cast<Topic>(env.topic) == Topic::config) {
                    const nlohmann::json j = nlohmann::json::parse(
                        env.payload.begin(), env.payload.end());
                    cfg = config_from_json(j);
                    have_cfg = true;
                } else {
                    backlog.push_back(std::move(env));
                }
            }
        }

        dist::ClientPublisher pub(client, cfg.accelerated);
        std::unique_ptr<SimNode> sim;
        std::unique_ptr<CtlNode> ctl;
        std::unique_ptr<RwNode> rw;
        switch (role) {
            case NodeRole::sim: sim = std::make_unique<SimNode>(cfg, pub); break;
            case NodeRole::controller: ctl = std::make_unique<CtlNode>(cfg, pub); break;
            case NodeRole::rw: rw = std::make_unique<RwNode>(cfg, pub); break;
        }
        auto handle = [&](const Envelope& env) {
            if (sim) sim->handle(env);
            if (ctl) ctl->handle(env);
            if (rw) rw->handle(env);
        };
        auto on_tick = [&](std::uint64_t k, double t) {
            if (sim) sim->on_tick(k, t);
            if (ctl) ctl->on_tick(k, t);
            if (rw) rw->on_tick(k, t);
        };
        for (const Envelope& env : backlog) {
            handle(env);
        }

        bool down = false;
        bool running = true;
        while (running) {
            for (Envelope& env : client.poll(100)) {
                switch (static_cast<Topic>(env.topic)) {
                    case Topic::tick: {
                        const auto tick = decode_tick(env.payload);
                        if (tick) {
                            on_tick(tick->index, tick->t);
                            client.publish(Topic::tick_ack, encode_tick(*tick),
                                           env.timestamp_ns);
                        }
                        break;
                    }
                    case Topic::shutdown:
                        running = false;
                        break;
                    case Topic::node_down:
                        down = true;
                        running = false;
                        break;
                    default:
                        handle(env);
                        break;
                }
                if (!running) {
                    break;
                }
            }
        }

        const int n = cfg.wheel_count();
        nlohmann::json stats;
        stats["gaps"] = client.sequence_gaps();
        stats["crc_errors"] = client.counters().crc_errors();
        stats["frames"] = client.counters().delivered;
        if (sim) {
            dist::write_sim_shard(out_dir + "/sim_shard.csv", sim->shard(), n);
        }
        if (ctl) {
            dist::write_ctl_shard(out_dir + "/ctl_shard.csv", ctl->shard(), n);
            stats["step_ms"] = ctl->step_times_ms();
        }
        if (rw) {
            dist::write_rw_shard(out_dir + "/rw_shard.csv", rw->shard(), n);
        }
        std::ofstream stats_out(out_dir + "/" + node_role_name(role) + "_stats.json");
        stats_out << stats.dump(2) << "\n";
        return down ? 2 : 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "node failed: %s\n", e.what());
        return 2;
    }
}

/// Spawns the broker (in this process) plus the three node processes, runs
/// the scenario on the wire, merges the node logs afterwards. `self_exe` is
/// the binary re-executed with the hidden `node` subcommand. The optional
/// hook receives the child pids right after spawning (used by fault tests).
inline RunResult run_distributed(
    ScenarioConfig cfg, const std::string& out_dir, const std::string& self_exe,
    const std::function<void(const std::vector<pid_t>&)>& spawned_hook = {}) {
    RunResult result;
    const auto wall_start = std::chrono::steady_clock::now();
    std::filesystem::create_directories(out_dir);
    cfg.mode = RunMode::distributed;

    Broker::Options bo;
    bo.host = cfg.bus.host;
    bo.port = cfg.bus.port;
    bo.expected_nodes = 3;
    bo.bus_tick = cfg.timing.bus_tick;
    bo.duration = cfg.timeline.duration;
    bo.accelerated = cfg.accelerated;
    Broker broker(bo);
    broker.supervise(Topic::rw_state, cfg.timing.telemetry_period);
    broker.supervise(Topic::rw_cmd, cfg.timing.control_period);
    broker.supervise(Topic::est_state, cfg.timing.control_period);

    const std::string endpoint_port = std::to_string(broker.port());
    std::vector<pid_t> pids;
    for (const char* role : {"sim", "controller", "rw"}) {
        const pid_t pid = ::fork();
        if (pid == 0) {
            ::execl(self_exe.c_str(), self_exe.c_str(), "node", "--role", role,
                    "--host", cfg.bus.host.c_str(), "--port", endpoint_port.c_str(),
                    "--out", out_dir.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        if (pid < 0) {
            result.error = "fork failed";
            return result;
        }
        pids.push_back(pid);
    }
    if (spawned_hook) {
        spawned_hook(pids);
    }

    const std::string payload = config_to_json(cfg).dump();
    const BrokerResult br = broker.run(
        std::vector<std::uint8_t>(payload.begin(), payload.end()));

    // reap the children; anything still alive after the grace period is killed
    bool children_ok = true;
    for (const pid_t pid : pids) {
        int status = 0;
        bool reaped = false;
        for (int i = 0; i < 100; ++i) {
            if (::waitpid(pid, &status, WNOHANG) == pid) {
                reaped = true;
                break;
            }
            ::usleep(50000);
        }
        if (!reaped) {
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            children_ok = false;
        } else if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
            children_ok = false;
        }
    }

    if (!br.completed) {
        result.error = "node down: " + br.down_role;
        result.metrics.mode = "distributed";
        return result;
    }

    const int n = cfg.wheel_count();
    try {
        const auto sim = dist::read_sim_shard(out_dir + "/sim_shard.csv", n);
        const auto ctl = dist::read_ctl_shard(out_dir + "/ctl_shard.csv", n);
        const auto rw = dist::read_rw_shard(out_dir + "/rw_shard.csv", n);
        result.log = merge_shards(sim, ctl, rw, n);
    } catch (const std::exception& e) {
        result.error = std::string("shard merge failed: ") + e.what();
        return result;
    }

    result.metrics = compute_metrics(result.log, cfg.timeline, cfg.gains.lambda_min);
    result.metrics.mode = "distributed";
    result.metrics.rates = br.rates;
    result.metrics.crc_errors = br.crc_errors;
    result.metrics.frames_delivered = br.frames_routed;
    std::uint64_t gaps = 0;
    for (const char* role : {"sim", "controller", "rw"}) {
        std::ifstream in(out_dir + "/" + role + "_stats.json");
        if (!in.good()) {
            continue;
        }
        const auto j = nlohmann::json::parse(in);
        gaps += j.value("gaps", 0ULL);
        result.metrics.crc_errors += j.value("crc_errors", 0ULL);
        if (j.contains("step_ms")) {
            result.metrics.ctl_step_ms =
                summarize(j.at("step_ms").get<std::vector<double>>());
        }
    }
    result.metrics.seq_gaps = gaps;
    result.metrics.wall_time = std::chrono::duration<double>(
                                   std::chrono::steady_clock::now() - wall_start)
                                   .count();
    result.completed = children_ok;
    if (!children_ok) {
        result.error = "a node exited abnormally";
    }
    return result;
}

/// Writes the standard artifacts of a finished run into the output directory.
inline void write_run_outputs(const RunResult& result, const ScenarioConfig& cfg,
                              const std::string& out_dir, bool emit_plots) {
    std::filesystem::create_directories(out_dir);
    write_runlog_csv(result.log, out_dir + "/run.csv");

    nlohmann::json summary = metrics_to_json(result.metrics);
    summary["completed"] = result.completed;
    summary["log_schema"] = kLogSchemaVersion;
    if (!result.error.empty()) {
        summary["error"] = result.error;
    }
    std::ofstream sum(out_dir + "/summary.json");
    sum << summary.dump(2) << "\n";

    std::ofstream cfg_echo(out_dir + "/config.json");
    cfg_echo << config_to_json(cfg).dump(2) << "\n";

    if (emit_plots) {
        std::filesystem::create_directories(out_dir + "/plots");
        for (const auto& key : plot_keys()) {
            emit_plot_data(result.log, key, out_dir + "/plots");
        }
    }
}

}  // namespace rwhil
