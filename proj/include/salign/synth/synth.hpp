// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "salign/core/geometry.hpp"
#include "salign/core/image_grid.hpp"

namespace salign::synth {

enum class Task { detection, segmentation };

std::string to_string(Task task);
Task task_from_string(const std::string& s);

enum class Domain { source, target };

std::string to_string(Domain domain);
Domain domain_from_string(const std::string& s);

// Scene geometry parameters. Detection scenes are bright blobs on a dark
// speckle background (vertebra-like echoes); segmentation scenes are two
// stacked bright bands with jittered boundaries (intima/media surrogate).
struct SceneSpec {
    Task task = Task::detection;
    int image_size = 64;
    int num_landmarks = 4;
    int band_row_min = -1;  // segmentation; -1 derives defaults from image_size
    int band_row_max = -1;
    std::uint64_t speckle_seed = 0;
    double geometry_jitter = 0.08;  // fraction of image size

    void validate() const;
    int resolved_band_min() const;
    int resolved_band_max() const;
};

// Photometric style. Identity parameters reproduce the input bit-exactly.
struct StyleParams {
    double gamma = 1.0;           // > 0
    double contrast_scale = 1.0;  // > 0
    double blur_sigma = 0.0;      // pixels, >= 0
    double speckle_strength = 0.0;  // [0,1], multiplicative speckle
    double intensity_offset = 0.0;  // [-0.5, 0.5]

    static StyleParams identity() { return {}; }
    // Handheld-style degradation: dimmer nonlinearity, flattened contrast,
    // blur and much heavier speckle than the source scenes carry.
    static StyleParams target_default();

    bool is_identity() const;
    void validate() const;
};

struct AnnotatedSample {
    ImageGrid image;
    std::vector<Point> landmarks;  // detection ground truth
    ImageGrid mask;                // segmentation ground truth
    Task task = Task::detection;
    Domain domain = Domain::source;
    std::string id;
};

// Deterministic in (image, style, seed); output clipped to [0,1].
ImageGrid style_shift(const ImageGrid& image, const StyleParams& style, std::uint64_t seed);

// Deterministic in all arguments. Ground-truth geometry depends only on
// (spec, seed, index), never on style.
std::vector<AnnotatedSample> generate_dataset(const SceneSpec& spec, const StyleParams& style,
                                              int count, std::uint64_t seed,
                                              Domain domain = Domain::source);

// Dataset directory layout: <root>/<domain>/<id>.png + <id>.json sidecar.
void write_dataset(const std::filesystem::path& root, const std::vector<AnnotatedSample>& samples);
std::vector<AnnotatedSample> read_dataset(const std::filesystem::path& root, Domain domain);

}  // namespace salign::synth
