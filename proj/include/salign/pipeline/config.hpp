// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "salign/alignment/alignment.hpp"
#include "salign/conditioning/conditioning.hpp"
#include "salign/diffusion/diffusion.hpp"
#include "salign/evidential/model.hpp"
#include "salign/synth/synth.hpp"

namespace salign::pipeline {

// Whole-experiment configuration. JSON parsing is strict: unknown keys are
// configuration errors at every level.
struct ExperimentConfig {
    synth::Task task = synth::Task::detection;
    std::uint64_t seed = 0;
    std::filesystem::path out_root;

    // data
    int image_size = 32;
    int num_landmarks = 4;
    int source_train = 200;
    int source_val = 50;
    int target_eval = 50;
    double geometry_jitter = 0.08;
    synth::StyleParams target_style = synth::StyleParams::target_default();

    // diffusion
    int base_epochs = 60;
    int control_epochs = 60;
    diffusion::DiffusionHyper diffusion_hyper = diffusion::DiffusionHyper::desk(32);

    // uncertainty-aware task model
    evidential::TaskHyper task_hyper = evidential::TaskHyper::desk(synth::Task::detection, 32);

    // alignment
    alignment::AlignmentConfig align;
    double calibration_quantile = 0.95;
    conditioning::ProducerConfig producer;

    bool dump_intermediates = true;  // condition/aligned/prediction PNGs for a few targets

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::filesystem::path& path);

    // The seeded synthetic detection benchmark: 200 source train, 50 target
    // eval, default style shift, m=8, n=4.
    static ExperimentConfig detection_benchmark(std::uint64_t seed,
                                                const std::filesystem::path& out_root);
};

}  // namespace salign::pipeline
