// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include <json.hpp>

namespace salign::diffusion {

// Forward-process noise schedule: per-step variances and their cumulative
// signal products. alpha_bar is strictly decreasing with alpha_bar_0 ~ 1.
struct DiffusionSchedule {
    int timesteps = 1000;
    std::vector<double> betas;
    std::vector<double> alpha_bars;

    static DiffusionSchedule linear(int timesteps = 1000, double beta_start = 1e-4,
                                    double beta_end = 0.02);
    void validate() const;

    nlohmann::json to_json() const;
    static DiffusionSchedule from_json(const nlohmann::json& j);
};

}  // namespace salign::diffusion
