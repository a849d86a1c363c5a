// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "salign/core/image_grid.hpp"
#include "salign/synth/synth.hpp"

namespace salign::conditioning {

enum class ProducerKind { threshold_mask, noise_perturb };

std::string to_string(ProducerKind kind);
ProducerKind producer_kind_from_string(const std::string& s);

// Sweep settings: m condition images with parameters evenly spaced over
// [sweep_min, sweep_max]. None of the producers has learnable state.
struct ProducerConfig {
    ProducerKind kind = ProducerKind::threshold_mask;
    double sweep_min = 0.3;
    double sweep_max = 0.7;
    int m = 8;

    static ProducerConfig threshold_defaults() { return {}; }
    static ProducerConfig noise_defaults() {
        return {ProducerKind::noise_perturb, 0.05, 0.3, 8};
    }
    void validate() const;
};

struct ConditionImage {
    ImageGrid grid;
    enum class Producer { threshold_mask, noise_perturb, annotation_optimal } producer =
        Producer::threshold_mask;
    nlohmann::json producer_params;
};

// pixel = 1 iff intensity >= threshold.
ConditionImage threshold_mask_condition(const ImageGrid& image, double threshold);

// image + N(0, sigma^2) per pixel, clipped to [0,1].
ConditionImage noise_perturb_condition(const ImageGrid& image, double sigma, std::uint64_t seed);

// Training-pair condition from ground truth: dilated landmark disks for
// detection, the truth mask itself for segmentation.
ConditionImage optimal_condition_from_annotation(const synth::AnnotatedSample& sample,
                                                 int landmark_radius = 3);

std::vector<ConditionImage> condition_sweep(const ImageGrid& image, const ProducerConfig& config,
                                            std::uint64_t seed);

// Evenly spaced sweep parameters; m == 1 yields {sweep_min}.
std::vector<double> sweep_values(const ProducerConfig& config);

}  // namespace salign::conditioning
