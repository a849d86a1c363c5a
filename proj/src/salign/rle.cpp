// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/core/rle.hpp"

#include <numeric>

#include "salign/core/errors.hpp"

namespace salign {

std::vector<std::int64_t> rle_encode_mask(const ImageGrid& mask) {
    std::vector<std::int64_t> runs;
    int current = 0;
    std::int64_t run = 0;
    for (float p : mask.pixels()) {
        int bit = p >= 0.5f ? 1 : 0;
        if (bit == current) {
            ++run;
        } else {
            runs.push_back(run);
            current = bit;
            run = 1;
        }
    }
    runs.push_back(run);
    return runs;
}

ImageGrid rle_decode_mask(const std::vector<std::int64_t>& runs, int width, int height) {
    std::int64_t total = std::accumulate(runs.begin(), runs.end(), std::int64_t{0});
    if (total != static_cast<std::int64_t>(width) * height) {
        throw FormatError("rle_decode_mask: run lengths do not cover the grid");
    }
    ImageGrid mask(width, height, 0.0f);
    std::int64_t pos = 0;
    int bit = 0;
    for (std::int64_t run : runs) {
        if (run < 0) throw FormatError("rle_decode_mask: negative run length");
        if (bit == 1) {
            for (std::int64_t i = 0; i < run; ++i) mask.pixels()[pos + i] = 1.0f;
        }
        pos += run;
        bit ^= 1;
    }
    return mask;
}

}  // namespace salign
