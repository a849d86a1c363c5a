// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "salign/conditioning/conditioning.hpp"
#include "salign/diffusion/diffusion.hpp"
#include "salign/evidential/model.hpp"

namespace salign::alignment {

// Reference calibration values from full-scale clinical ultrasound data,
// kept for comparison when configuring real deployments. Desk-scale runs
// calibrate their own T_model from source validation data.
namespace clinical_reference {
inline constexpr double spine_t_model = 0.0099;
inline constexpr double carotid_t_model = 0.1200;
inline constexpr double detection_t_pre = 5.0;    // pixels
inline constexpr double segmentation_t_pre = 0.3;
}  // namespace clinical_reference

struct AlignmentConfig {
    int m = 8;                 // condition images per target
    int n = 4;                 // aligned samples per condition
    double t_model = 0.05;     // model-uncertainty threshold
    double t_pre = 5.0;        // prediction-uncertainty threshold (0.3 for segmentation)
    int ddim_steps = 50;
    std::uint64_t seed = 0;

    void validate() const;
};

// Full record of one target-image alignment. Both checkpoints stay frozen;
// every sample draws its own stream from (seed, condition, sample).
struct AlignmentResult {
    std::vector<conditioning::ConditionImage> conditions;            // m
    std::vector<std::vector<ImageGrid>> aligned;                     // m x n
    std::vector<std::vector<evidential::Prediction>> predictions;    // m x n
    std::vector<std::vector<double>> u_model;                        // m x n
    std::vector<double> u_model_mean;                                // m (row means)
    std::vector<double> u_pre;                                       // m
    std::optional<int> selected_condition;
    std::optional<evidential::Prediction> final_prediction;
    bool fallback_used = false;
};

// Spread of n landmark predictions around their mean, after ordering each
// set by vertical then horizontal position. Mismatched landmark counts give
// +infinity (forces rejection), as do uniformly empty prediction sets (no
// structure to assess).
double prediction_uncertainty_detection(const std::vector<std::vector<Point>>& prediction_sets);

// 1 - |intersection| / |union| over all n masks; empty union gives 1.
double prediction_uncertainty_segmentation(const std::vector<ImageGrid>& masks);

// Among indices passing both thresholds, the lowest prediction uncertainty;
// ties by lower model uncertainty, then lower index.
std::optional<int> select_condition(const std::vector<double>& u_model_vec,
                                    const std::vector<double>& u_pre_vec, double t_model,
                                    double t_pre);

// Argmin of the model-uncertainty row; ties by lower index.
int select_final_prediction(const std::vector<double>& u_model_row);

AlignmentResult align_image(const ImageGrid& target, const diffusion::DiffusionCheckpoint& gen,
                            const evidential::TaskCheckpoint& task,
                            const conditioning::ProducerConfig& producer,
                            const AlignmentConfig& config);

// Quantile of per-image model uncertainty over source validation data.
double calibrate_thresholds(const evidential::TaskCheckpoint& task,
                            const std::vector<synth::AnnotatedSample>& source_validation,
                            double quantile = 0.95);

// Per-image JSON record: uncertainty matrix/vectors, selection, fallback
// flag, final prediction.
nlohmann::json alignment_result_to_json(const AlignmentResult& result);

}  // namespace salign::alignment
