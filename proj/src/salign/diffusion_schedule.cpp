// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/diffusion/schedule.hpp"

#include "salign/core/errors.hpp"

namespace salign::diffusion {

DiffusionSchedule DiffusionSchedule::linear(int timesteps, double beta_start, double beta_end) {
    if (timesteps < 1) throw ConfigError("DiffusionSchedule: timesteps must be >= 1");
    DiffusionSchedule s;
    s.timesteps = timesteps;
    s.betas.resize(static_cast<std::size_t>(timesteps));
    s.alpha_bars.resize(static_cast<std::size_t>(timesteps));
    double running = 1.0;
    for (int t = 0; t < timesteps; ++t) {
        const double beta =
            timesteps == 1 ? beta_start
                           : beta_start + (beta_end - beta_start) * t / (timesteps - 1);
        s.betas[static_cast<std::size_t>(t)] = beta;
        running *= 1.0 - beta;
        s.alpha_bars[static_cast<std::size_t>(t)] = running;
    }
    s.validate();
    return s;
}

void DiffusionSchedule::validate() const {
    if (timesteps < 1 || betas.size() != static_cast<std::size_t>(timesteps) ||
        alpha_bars.size() != static_cast<std::size_t>(timesteps)) {
        throw ConfigError("DiffusionSchedule: inconsistent sizes");
    }
    double prev = 1.0;
    for (int t = 0; t < timesteps; ++t) {
        const double beta = betas[static_cast<std::size_t>(t)];
        const double ab = alpha_bars[static_cast<std::size_t>(t)];
        if (!(beta > 0.0 && beta < 1.0)) {
            throw ConfigError("DiffusionSchedule: betas must lie in (0,1)");
        }
        if (!(ab < prev)) {
            throw ConfigError("DiffusionSchedule: alpha_bar must be strictly decreasing");
        }
        prev = ab;
    }
}

nlohmann::json DiffusionSchedule::to_json() const {
    return {{"timesteps", timesteps}, {"betas", betas}, {"alpha_bars", alpha_bars}};
}

DiffusionSchedule DiffusionSchedule::from_json(const nlohmann::json& j) {
    DiffusionSchedule s;
    s.timesteps = j.at("timesteps").get<int>();
    s.betas = j.at("betas").get<std::vector<double>>();
    s.alpha_bars = j.at("alpha_bars").get<std::vector<double>>();
    s.validate();
    return s;
}

}  // namespace salign::diffusion
