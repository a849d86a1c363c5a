// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "salign/diffusion/model.hpp"
#include "salign/diffusion/schedule.hpp"

namespace salign::diffusion {

// Training hyperparameters. Defaults follow the full-scale recipe (AdamW,
// lr 1e-4, batch 16, 400 epochs, 256x256, DDIM-50); desk() shrinks
// everything to CI scale.
struct DiffusionHyper {
    int epochs = 400;
    double lr = 1e-4;
    double weight_decay = 0.01;
    int batch_size = 16;
    int timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int ddim_steps = 50;
    UNetConfig net = [] {
        UNetConfig cfg;
        cfg.image_size = 256;
        cfg.c0 = 32;
        cfg.c1 = 64;
        cfg.c2 = 96;
        return cfg;
    }();

    static DiffusionHyper desk(int image_size, int epochs = 30);

    nlohmann::json to_json() const;
    static DiffusionHyper from_json(const nlohmann::json& j);
};

struct DiffusionCheckpoint {
    std::shared_ptr<DiffusionModel> model;
    DiffusionSchedule schedule;
    // Model space is 2*(x - data_mean): centering the training data keeps
    // the high-noise denoising regime unbiased.
    double data_mean = 0.5;
    nlohmann::json training_meta;

    Stage stage() const { return model->stage(); }
    int image_size() const { return model->config().image_size; }

    void save(const std::filesystem::path& path) const;
    static DiffusionCheckpoint load(const std::filesystem::path& path);

    std::uint64_t digest() const;
    std::uint64_t base_digest() const;
};

// Closed-form forward marginal: sqrt(ab_t)*x0 + sqrt(1-ab_t)*noise.
ImageGrid forward_noise(const ImageGrid& x0, int t, const ImageGrid& noise,
                        const DiffusionSchedule& schedule);

// Unconditional noise-prediction training on source images.
DiffusionCheckpoint train_base(const std::vector<ImageGrid>& images, const DiffusionHyper& hyper,
                               std::uint64_t seed);

// Control-branch training on (image, optimal condition) pairs. The base
// weights stay frozen and bit-identical.
DiffusionCheckpoint train_control(const std::vector<std::pair<ImageGrid, ImageGrid>>& pairs,
                                  const DiffusionCheckpoint& base, const DiffusionHyper& hyper,
                                  std::uint64_t seed);

// Deterministic DDIM sampling (eta = 0); condition required iff controlled.
ImageGrid ddim_sample(const DiffusionCheckpoint& ckpt,
                      const std::optional<ImageGrid>& condition, int steps, std::uint64_t seed);

}  // namespace salign::diffusion
