// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "salign/core/geometry.hpp"
#include "salign/core/image_grid.hpp"

namespace salign::measure {

// Observed clinical range for intima-media thickness, for sanity-checking
// full-scale measurements (mm).
namespace clinical_reference {
inline constexpr double cimt_min_mm = 0.776;
inline constexpr double cimt_max_mm = 1.895;
}  // namespace clinical_reference

// Ordered per-slice landmark detections from a scan sweep.
struct ScanSeries {
    std::vector<std::vector<Point>> slices;
    double slice_spacing_mm = 1.0;
    double pixel_spacing_mm = 1.0;
};

// Mean over occupied columns of the column's vertical extent
// (max row - min row + 1) times the vertical pixel spacing. Robust to
// interior holes by construction.
double cimt_from_mask(const ImageGrid& mask, double vertical_spacing_mm_per_px);

// Curvature proxy: lateral deviation curve of per-slice landmark centroids,
// smoothed with a centered moving average (window 5); returns the spread
// between the most- and least-inclined segment angles, in degrees.
double curvature_proxy_from_series(const ScanSeries& series);

}  // namespace salign::measure
