// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/conditioning/conditioning.hpp"

#include <cmath>
#include <iostream>

#include "salign/core/errors.hpp"
#include "salign/core/rng.hpp"

namespace salign::conditioning {

std::string to_string(ProducerKind kind) {
    return kind == ProducerKind::threshold_mask ? "threshold_mask" : "noise_perturb";
}

ProducerKind producer_kind_from_string(const std::string& s) {
    if (s == "threshold_mask") return ProducerKind::threshold_mask;
    if (s == "noise_perturb") return ProducerKind::noise_perturb;
    throw ConfigError("unknown producer kind: " + s);
}

void ProducerConfig::validate() const {
    if (m < 1) throw ConfigError("ProducerConfig: m must be >= 1");
    if (!(sweep_min < sweep_max)) throw ConfigError("ProducerConfig: sweep_min must be < sweep_max");
}

ConditionImage threshold_mask_condition(const ImageGrid& image, double threshold) {
    if (threshold < 0.0 || threshold > 1.0) {
        throw ArgumentError("threshold_mask_condition: threshold must lie in [0,1]");
    }
    ConditionImage cond;
    cond.producer = ConditionImage::Producer::threshold_mask;
    cond.producer_params = {{"threshold", threshold}};
    cond.grid = ImageGrid(image.width(), image.height());
    cond.grid.spacing = image.spacing;
    for (std::int64_t i = 0; i < image.size(); ++i) {
        cond.grid.pixels()[static_cast<std::size_t>(i)] =
            image.pixels()[static_cast<std::size_t>(i)] >= static_cast<float>(threshold) ? 1.0f
                                                                                         : 0.0f;
    }
    return cond;
}

ConditionImage noise_perturb_condition(const ImageGrid& image, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw ArgumentError("noise_perturb_condition: sigma must be >= 0");
    ConditionImage cond;
    cond.producer = ConditionImage::Producer::noise_perturb;
    cond.producer_params = {{"sigma", sigma}, {"seed", seed}};
    cond.grid = image;
    if (sigma > 0.0) {
        Rng rng(seed);
        for (float& p : cond.grid.pixels()) {
            p = static_cast<float>(p + sigma * rng.normal());
        }
        cond.grid.clamp01();
    }
    return cond;
}

ConditionImage optimal_condition_from_annotation(const synth::AnnotatedSample& sample,
                                                 int landmark_radius) {
    ConditionImage cond;
    cond.producer = ConditionImage::Producer::annotation_optimal;
    if (sample.task == synth::Task::segmentation) {
        if (sample.mask.empty() || !sample.mask.same_shape(sample.image)) {
            throw ArgumentError("optimal_condition_from_annotation: sample has no mask annotation");
        }
        cond.grid = sample.mask;
        cond.producer_params = {{"source", "mask"}};
        if (cond.grid.max_value() < 0.5f) {
            std::cerr << "warning: empty truth mask for sample " << sample.id
                      << "; condition is empty\n";
        }
        return cond;
    }

    if (sample.image.empty()) {
        throw ArgumentError("optimal_condition_from_annotation: sample has no image");
    }
    cond.grid = ImageGrid(sample.image.width(), sample.image.height());
    cond.grid.spacing = sample.image.spacing;
    cond.producer_params = {{"source", "landmarks"}, {"radius", landmark_radius}};
    if (sample.landmarks.empty()) {
        std::cerr << "warning: empty landmark truth for sample " << sample.id
                  << "; condition is empty\n";
        return cond;
    }
    for (const Point& p : sample.landmarks) {
        const int x0 = std::max(0, static_cast<int>(std::floor(p.x)) - landmark_radius);
        const int x1 = std::min(cond.grid.width() - 1,
                                static_cast<int>(std::ceil(p.x)) + landmark_radius);
        const int y0 = std::max(0, static_cast<int>(std::floor(p.y)) - landmark_radius);
        const int y1 = std::min(cond.grid.height() - 1,
                                static_cast<int>(std::ceil(p.y)) + landmark_radius);
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                if (std::hypot(x - p.x, y - p.y) <= landmark_radius) cond.grid.at(x, y) = 1.0f;
            }
        }
    }
    return cond;
}

std::vector<double> sweep_values(const ProducerConfig& config) {
    config.validate();
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(config.m));
    if (config.m == 1) {
        values.push_back(config.sweep_min);
        return values;
    }
    for (int k = 0; k < config.m; ++k) {
        values.push_back(config.sweep_min +
                         (config.sweep_max - config.sweep_min) * k / (config.m - 1));
    }
    return values;
}

std::vector<ConditionImage> condition_sweep(const ImageGrid& image, const ProducerConfig& config,
                                            std::uint64_t seed) {
    const std::vector<double> values = sweep_values(config);
    std::vector<ConditionImage> conditions;
    conditions.reserve(values.size());
    Rng root(seed);
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (config.kind == ProducerKind::threshold_mask) {
            conditions.push_back(threshold_mask_condition(image, values[k]));
        } else {
            conditions.push_back(
                noise_perturb_condition(image, values[k], root.fork(k).next_u64()));
        }
        conditions.back().producer_params["sweep_index"] = k;
    }
    return conditions;
}

}  // namespace salign::conditioning
