// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

namespace salign {

struct PixelSpacing {
    double x_mm = 1.0;
    double y_mm = 1.0;
};

// Single-channel 2D intensity grid, row-major, values nominally in [0,1].
// Carries images, condition images, heatmaps and uncertainty maps alike.
class ImageGrid {
  public:
    ImageGrid() = default;
    ImageGrid(int width, int height, float fill = 0.0f);

    int width() const { return width_; }
    int height() const { return height_; }
    std::int64_t size() const { return static_cast<std::int64_t>(width_) * height_; }
    bool empty() const { return width_ == 0 || height_ == 0; }

    float& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    float at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    bool contains(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }

    std::vector<float>& pixels() { return pixels_; }
    const std::vector<float>& pixels() const { return pixels_; }

    PixelSpacing spacing;

    bool same_shape(const ImageGrid& other) const {
        return width_ == other.width_ && height_ == other.height_;
    }

    // Min/max over all pixels; zero-size grids return (0, 0).
    float min_value() const;
    float max_value() const;
    float mean_value() const;

    void clamp01();
    bool in_unit_range(float tolerance = 0.0f) const;

    // Largest absolute pixel difference; shapes must match.
    static float max_abs_diff(const ImageGrid& a, const ImageGrid& b);

  private:
    int width_ = 0;
    int height_ = 0;
    std::vector<float> pixels_;
};

bool operator==(const ImageGrid& a, const ImageGrid& b);

}  // namespace salign
