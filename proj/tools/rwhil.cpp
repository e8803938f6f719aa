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

#include <unistd.h>

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "rwhil/dist.hpp"

namespace {

std::string self_exe_path() {
    char buf[4096];
    const ssize_t n = ::readlink("/proc/self/exe", buf, sizeof buf - 1);
    if (n <= 0) {
        return "rwhil";
    }
    buf[n] = '\0';
    return buf;
}

void print_summary(const rwhil::RunResult& result) {
    const auto& m = result.metrics;
    std::printf("run %s: %.1f s simulated in %.2f s wall\n",
                result.completed ? "completed" : "FAILED", m.sim_duration,
                m.wall_time);
    if (!result.error.empty()) {
        std::printf("  error: %s\n", result.error.c_str());
    }
    if (m.no_data) {
        return;
    }
    std::printf("  controller step: mean %.3f ms, max %.3f ms, stddev %.3f ms\n",
                m.ctl_step_ms.mean, m.ctl_step_ms.max, m.ctl_step_ms.stddev);
    std::printf("  theta_hat final:");
    for (int i = 0; i < m.theta_final.size(); ++i) {
        std::printf(" %.4f", m.theta_final[i]);
    }
    std::printf("\n  lambda: %.3e (crossed threshold at t=%.1f s)\n", m.lambda_final,
                m.lambda_crossing_t);
    for (const auto& r : m.rates) {
        std::printf("  %s: mean period %.4f s (expected %.4f), overruns %ld\n",
                    r.topic.c_str(), r.period.mean, r.expected_period, r.overruns);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"virtual hardware-in-the-loop testbed for reaction-wheel "
                 "attitude control"};
    app.require_subcommand(1);

    // run subcommand
    std::string config_path;
    std::string mode_override;
    std::string out_dir = "run_out";
    bool accel_flag = false;
    bool emit_plots = false;
    std::uint64_t seed_override = 0;
    bool seed_set = false;

    auto* run = app.add_subcommand("run", "execute a scenario");
    run->add_option("config", config_path, "scenario config file (JSON)")
        ->required();
    run->add_option("--mode", mode_override, "override run mode")
        ->check(CLI::IsMember({"mil", "dist"}));
    run->add_flag("--accel", accel_flag,
                  "accelerated clock (as fast as the nodes allow)");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--seed", seed_override, "override both RNG seeds")
        ->each([&](const std::string&) { seed_set = true; });
    run->add_flag("--emit-plots", emit_plots, "write per-figure CSV files");

    // hidden node subcommand used by the distributed runner
    std::string role_name;
    std::string host = "127.0.0.1";
    int port = 0;
    std::string node_out;
    auto* node = app.add_subcommand("node", "internal: run one node process");
    node->group("");  // hidden
    node->add_option("--role", role_name)->required();
    node->add_option("--host", host);
    node->add_option("--port", port)->required();
    node->add_option("--out", node_out)->required();

    CLI11_PARSE(app, argc, argv);

    if (node->parsed()) {
        rwhil::NodeRole role;
        if (role_name == "sim") {
            role = rwhil::NodeRole::sim;
        } else if (role_name == "controller") {
            role = rwhil::NodeRole::controller;
        } else if (role_name == "rw") {
            role = rwhil::NodeRole::rw;
        } else {
            std::fprintf(stderr, "unknown role '%s'\n", role_name.c_str());
            return 2;
        }
        return rwhil::node_process_main(role, host, port, node_out);
    }

    rwhil::ScenarioConfig cfg;
    try {
        cfg = rwhil::load_config(config_path);
        if (mode_override == "mil") {
            cfg.mode = rwhil::RunMode::mil;
        } else if (mode_override == "dist") {
            cfg.mode = rwhil::RunMode::distributed;
        }
        if (accel_flag) {
            cfg.accelerated = true;
        }
        if (seed_set) {
            cfg.seed_sensors = seed_override;
            cfg.seed_wheels = seed_override + 1;
        }
    } catch (const rwhil::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    }

    try {
        rwhil::RunResult result;
        if (cfg.mode == rwhil::RunMode::mil) {
            result = rwhil::run_mil(cfg);
        } else {
            result = rwhil::run_distributed(cfg, out_dir, self_exe_path());
        }
        rwhil::write_run_outputs(result, cfg, out_dir, emit_plots);
        print_summary(result);
        return result.completed ? 0 : 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "run failed: %s\n", e.what());
        return 2;
    }
}
