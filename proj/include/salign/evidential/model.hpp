// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "salign/evidential/nig.hpp"
#include "salign/nn/layers.hpp"
#include "salign/synth/synth.hpp"

namespace salign::evidential {

// Network geometry. Detection: two stacked hourglasses, four downsamples
// each, landmark heatmaps from the evidential head's gamma channels.
// Segmentation: a basic three-level U-Net with parallel probability and
// NIG head branches.
struct TaskNetConfig {
    synth::Task task = synth::Task::detection;
    int image_size = 64;
    int num_landmarks = 4;
    int channels = 24;
    int hourglass_depth = 4;

    int nig_channels() const {
        return task == synth::Task::detection ? num_landmarks : 1;
    }

    nlohmann::json to_json() const;
    static TaskNetConfig from_json(const nlohmann::json& j);
};

struct TaskHyper {
    int epochs = 40;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    int batch_size = 8;
    double lambda_reg = 0.01;         // evidential trade-off, annealed 0 -> lambda
    double uncertainty_weight = 0.1;  // weight of the evidential term in the total loss
    double heatmap_sigma = 2.0;       // px, ground-truth peak width
    double peak_threshold = 0.3;
    TaskNetConfig net;

    static TaskHyper desk(synth::Task task, int image_size, int epochs = 25);

    nlohmann::json to_json() const;
    static TaskHyper from_json(const nlohmann::json& j);
};

class TaskModel {
  public:
    TaskModel(const TaskNetConfig& config, std::uint64_t init_seed);

    struct Outputs {
        nn::Var inter_heat;  // detection: first-stack heatmaps
        nn::Var prob;        // segmentation: sigmoid probability grid
        nn::Var gamma, omega, alpha, beta;  // mapped NIG grids (N,Knig,H,W)
    };
    Outputs forward(const nn::Var& x) const;

    const TaskNetConfig& config() const { return config_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

  private:
    struct Hourglass {
        std::vector<nn::ResBlock> up, low_in, low_out;
        nn::ResBlock bottom;
        int depth = 0;
        nn::Var operator()(const nn::Var& x) const;
        nn::Var run(const nn::Var& x, int level) const;
    };

    void build_detection(Rng& rng);
    void build_segmentation(Rng& rng);
    Hourglass make_hourglass(const std::string& name, Rng& rng);

    TaskNetConfig config_;
    nn::ParamStore params_;

    // shared
    nn::Conv2dLayer stem_;
    nn::GroupNormLayer head_norm_;
    nn::Conv2dLayer nig_head_;

    // detection
    nn::ResBlock stem_block_;
    Hourglass hg1_, hg2_;
    nn::Conv2dLayer inter_head_, reinject_;
    nn::ResBlock merge_;

    // segmentation
    nn::ResBlock enc0_, enc1_, enc2_, mid_, dec1_, dec0_;
    nn::Conv2dLayer down0_, down1_, up1_, up0_;
    nn::Conv2dLayer prob_head_;
};

// Prediction mean is the NIG gamma; detection coordinates come from the
// gamma heatmaps, segmentation masks from gamma >= 0.5.
struct Prediction {
    synth::Task task = synth::Task::detection;
    std::vector<ImageGrid> heatmaps;
    std::vector<LandmarkDetection> landmarks;
    ImageGrid mask;
    ImageGrid probability;
    NIGParams nig;
    UncertaintyMap uncertainty;
    double model_uncertainty = 0.0;
};

struct TaskCheckpoint {
    std::shared_ptr<TaskModel> model;
    double lambda_reg = 0.01;
    double peak_threshold = 0.3;
    nlohmann::json training_meta;

    synth::Task task() const { return model->config().task; }
    int image_size() const { return model->config().image_size; }

    void save(const std::filesystem::path& path) const;
    static TaskCheckpoint load(const std::filesystem::path& path);
    std::uint64_t digest() const;
};

// Gaussian ground-truth heatmap, peak 1 at the landmark.
ImageGrid landmark_heatmap(const Point& landmark, int size, double sigma);

// Per-heatmap argmax, kept when the peak reaches `peak_threshold`.
std::vector<LandmarkDetection> extract_landmarks(const std::vector<ImageGrid>& heatmaps,
                                                 double peak_threshold = 0.3);

TaskCheckpoint train_task_model(const std::vector<synth::AnnotatedSample>& dataset,
                                synth::Task task, const TaskHyper& hyper, std::uint64_t seed);

Prediction predict(const TaskCheckpoint& ckpt, const ImageGrid& image);

}  // namespace salign::evidential
