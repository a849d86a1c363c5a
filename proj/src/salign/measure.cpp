// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/measure/measure.hpp"

#include <algorithm>
#include <cmath>

#include "salign/core/errors.hpp"

namespace salign::measure {

double cimt_from_mask(const ImageGrid& mask, double vertical_spacing_mm_per_px) {
    if (mask.empty()) throw MeasurementUnavailable("cimt_from_mask: empty grid");
    if (!(vertical_spacing_mm_per_px > 0.0)) {
        throw ArgumentError("cimt_from_mask: spacing must be > 0");
    }
    double total = 0.0;
    int occupied = 0;
    for (int x = 0; x < mask.width(); ++x) {
        int min_row = -1, max_row = -1;
        for (int y = 0; y < mask.height(); ++y) {
            if (mask.at(x, y) >= 0.5f) {
                if (min_row < 0) min_row = y;
                max_row = y;
            }
        }
        if (min_row >= 0) {
            total += (max_row - min_row + 1) * vertical_spacing_mm_per_px;
            ++occupied;
        }
    }
    if (occupied == 0) throw MeasurementUnavailable("cimt_from_mask: mask has no foreground");
    return total / occupied;
}

double curvature_proxy_from_series(const ScanSeries& series) {
    if (!(series.slice_spacing_mm > 0.0) || !(series.pixel_spacing_mm > 0.0)) {
        throw ArgumentError("curvature_proxy_from_series: spacings must be > 0");
    }
    // Centroid lateral deviation per usable slice; empty slices are skipped
    // but keep their axial position.
    std::vector<double> lateral, axial;
    for (std::size_t i = 0; i < series.slices.size(); ++i) {
        const auto& landmarks = series.slices[i];
        if (landmarks.empty()) continue;
        double cx = 0.0;
        for (const Point& p : landmarks) cx += p.x;
        cx /= static_cast<double>(landmarks.size());
        lateral.push_back(cx * series.pixel_spacing_mm);
        axial.push_back(static_cast<double>(i) * series.slice_spacing_mm);
    }
    if (lateral.size() < 3) {
        throw MeasurementUnavailable("curvature_proxy_from_series: fewer than 3 usable slices");
    }

    // Centered moving average over the curve points, window 5, shrunk
    // symmetrically at the edges. Averaging (z, x) jointly keeps collinear
    // points collinear and bounds segment slopes by the raw extremes even
    // when skipped slices leave non-uniform axial spacing.
    const int n = static_cast<int>(lateral.size());
    std::vector<double> smooth_x(static_cast<std::size_t>(n));
    std::vector<double> smooth_z(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int radius = std::min({2, i, n - 1 - i});
        double acc_x = 0.0, acc_z = 0.0;
        for (int k = i - radius; k <= i + radius; ++k) {
            acc_x += lateral[static_cast<std::size_t>(k)];
            acc_z += axial[static_cast<std::size_t>(k)];
        }
        smooth_x[static_cast<std::size_t>(i)] = acc_x / (2 * radius + 1);
        smooth_z[static_cast<std::size_t>(i)] = acc_z / (2 * radius + 1);
    }

    double min_angle = 0.0, max_angle = 0.0;
    bool first = true;
    for (int i = 0; i + 1 < n; ++i) {
        const double dz =
            smooth_z[static_cast<std::size_t>(i + 1)] - smooth_z[static_cast<std::size_t>(i)];
        const double dx =
            smooth_x[static_cast<std::size_t>(i + 1)] - smooth_x[static_cast<std::size_t>(i)];
        const double angle = std::atan2(dx, dz) * 180.0 / M_PI;
        if (first) {
            min_angle = max_angle = angle;
            first = false;
        } else {
            min_angle = std::min(min_angle, angle);
            max_angle = std::max(max_angle, angle);
        }
    }
    return max_angle - min_angle;
}

}  // namespace salign::measure
