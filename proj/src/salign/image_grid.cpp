// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/core/image_grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "salign/core/errors.hpp"

namespace salign {

ImageGrid::ImageGrid(int width, int height, float fill)
    : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height, fill) {
    if (width < 0 || height < 0) {
        throw ArgumentError("ImageGrid: negative dimensions");
    }
}

float ImageGrid::min_value() const {
    if (pixels_.empty()) return 0.0f;
    return *std::min_element(pixels_.begin(), pixels_.end());
}

float ImageGrid::max_value() const {
    if (pixels_.empty()) return 0.0f;
    return *std::max_element(pixels_.begin(), pixels_.end());
}

float ImageGrid::mean_value() const {
    if (pixels_.empty()) return 0.0f;
    double sum = std::accumulate(pixels_.begin(), pixels_.end(), 0.0);
    return static_cast<float>(sum / static_cast<double>(pixels_.size()));
}

void ImageGrid::clamp01() {
    for (float& p : pixels_) p = std::clamp(p, 0.0f, 1.0f);
}

bool ImageGrid::in_unit_range(float tolerance) const {
    for (float p : pixels_) {
        if (!(p >= -tolerance && p <= 1.0f + tolerance)) return false;
    }
    return true;
}

float ImageGrid::max_abs_diff(const ImageGrid& a, const ImageGrid& b) {
    if (!a.same_shape(b)) {
        throw ArgumentError("ImageGrid::max_abs_diff: shape mismatch");
    }
    float worst = 0.0f;
    for (std::size_t i = 0; i < a.pixels().size(); ++i) {
        worst = std::max(worst, std::fabs(a.pixels()[i] - b.pixels()[i]));
    }
    return worst;
}

bool operator==(const ImageGrid& a, const ImageGrid& b) {
    return a.same_shape(b) && a.pixels() == b.pixels();
}

}  // namespace salign
