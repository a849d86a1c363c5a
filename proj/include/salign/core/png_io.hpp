// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "salign/core/image_grid.hpp"

namespace salign {

// 8-bit grayscale PNG, the dataset interchange format. Values are mapped
// [0,1] <-> [0,255] with rounding; out-of-range values are clamped on write.
void write_png_gray8(const std::filesystem::path& path, const ImageGrid& image);

ImageGrid read_png_gray8(const std::filesystem::path& path);

}  // namespace salign
