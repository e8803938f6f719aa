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

#include <chrono>

#include "rwhil/nodes.hpp"

namespace rwhil {

struct RunResult {
    bool completed = false;
    std::string error;
    RunLog log;
    MetricsSummary metrics;
};

/// In-process bus with the same delivery schedule as the socket broker:
/// frames published during tick k reach subscribers before tick k+1.
class LocalBus : public Publisher {
public:
    void publish(Topic topic, std::vector<std::uint8_t> payload, double t) override {
        Envelope env;
        env.topic = static_cast<std::uint16_t>(topic);
        env.seq = ++seq_[env.topic];
        env.timestamp_ns = static_cast<std::uint64_t>(t * 1e9);
        env.payload = std::move(payload);
        queue_.push_back(std::move(env));
    }

    std::vector<Envelope> take() {
        std::vector<Envelope> out;
        out.swap(queue_);
        return out;
    }

private:
    std::vector<Envelope> queue_;
    std::map<std::uint16_t, std::uint64_t> seq_;
};

/// Deterministic single-process run: the three nodes stepped on the shared
/// tick, message passing emulated by the local queue.
inline RunResult run_mil(const ScenarioConfig& cfg) {
    RunResult result;
    const auto wall_start = std::chrono::steady_clock::now();

    LocalBus bus;
    SimNode sim(cfg, bus);
    CtlNode ctl(cfg, bus);
    RwNode rw(cfg, bus);

    const auto ticks = static_cast<std::uint64_t>(
        std::llround(cfg.timeline.duration / cfg.timing.bus_tick));
    try {
        for (std::uint64_t k = 0; k <= ticks; ++k) {
            const double t = static_cast<double>(k) * cfg.timing.bus_tick;
            for (const Envelope& env : bus.take()) {
                switch (static_cast<Topic>(env.topic)) {
                    case Topic::rw_cmd:
                        sim.handle(env);
                        rw.handle(env);
                        break;
                    case Topic::rw_state:
                        sim.handle(env);
                        ctl.handle(env);
                        break;
                    case Topic::est_state:
                        ctl.handle(env);
                        break;
                    default:
                        break;
                }
            }
            sim.on_tick(k, t);
            ctl.on_tick(k, t);
            rw.on_tick(k, t);
        }
        result.completed = true;
    } catch (const DivergenceError& e) {
        result.error = e.what();
    } catch (const AllocationError& e) {
        result.error = e.what();
    }

    result.log = merge_shards(sim.shard(), ctl.shard(), rw.shard(), cfg.wheel_count());
    result.metrics =
        compute_metrics(result.log, cfg.timeline, cfg.gains.lambda_min);
    result.metrics.mode = "mil";
    result.metrics.ctl_step_ms = summarize(ctl.step_times_ms());
    result.metrics.wall_time = std::chrono::duration<double>(
                                   std::chrono::steady_clock::now() - wall_start)
                                   .count();
    return result;
}

}  // namespace rwhil
