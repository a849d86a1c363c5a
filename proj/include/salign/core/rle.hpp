// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "salign/core/image_grid.hpp"

namespace salign {

// Row-major run-length encoding of a binary mask: alternating run lengths,
// first run counts zeros (possibly 0). Sum of runs == width * height.
std::vector<std::int64_t> rle_encode_mask(const ImageGrid& mask);

ImageGrid rle_decode_mask(const std::vector<std::int64_t>& runs, int width, int height);

}  // namespace salign
