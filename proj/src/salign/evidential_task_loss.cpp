// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/evidential/task_loss.hpp"

#include <algorithm>
#include <cmath>

#include "salign/core/errors.hpp"

namespace salign::evidential {

namespace {
constexpr double kProbEps = 1e-6;
}

double task_loss_detection(const std::vector<float>& pred_heatmaps,
                           const std::vector<float>& gt_heatmaps) {
    if (pred_heatmaps.size() != gt_heatmaps.size() || pred_heatmaps.empty()) {
        throw ArgumentError("task_loss_detection: size mismatch");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < pred_heatmaps.size(); ++i) {
        const double d = static_cast<double>(pred_heatmaps[i]) - gt_heatmaps[i];
        sum += d * d;
    }
    return sum / static_cast<double>(pred_heatmaps.size());
}

double task_loss_segmentation(const ImageGrid& prob_grid, const ImageGrid& gt_mask) {
    if (!prob_grid.same_shape(gt_mask) || prob_grid.empty()) {
        throw ArgumentError("task_loss_segmentation: shape mismatch");
    }
    const std::size_t n = prob_grid.pixels().size();
    double ce = 0.0, overlap = 0.0, sum_p = 0.0, sum_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::clamp(static_cast<double>(prob_grid.pixels()[i]), kProbEps,
                                    1.0 - kProbEps);
        const double y = gt_mask.pixels()[i] >= 0.5f ? 1.0 : 0.0;
        ce += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
        overlap += p * y;
        sum_p += p;
        sum_y += y;
    }
    ce /= static_cast<double>(n);
    const double dice = 1.0 - (2.0 * overlap + 1.0) / (sum_p + sum_y + 1.0);
    return ce + dice;
}

std::vector<float> task_loss_segmentation_grad(const ImageGrid& prob_grid,
                                               const ImageGrid& gt_mask) {
    if (!prob_grid.same_shape(gt_mask) || prob_grid.empty()) {
        throw ArgumentError("task_loss_segmentation_grad: shape mismatch");
    }
    const std::size_t n = prob_grid.pixels().size();
    double overlap = 0.0, sum_p = 0.0, sum_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::clamp(static_cast<double>(prob_grid.pixels()[i]), kProbEps,
                                    1.0 - kProbEps);
        const double y = gt_mask.pixels()[i] >= 0.5f ? 1.0 : 0.0;
        overlap += p * y;
        sum_p += p;
        sum_y += y;
    }
    const double denom = sum_p + sum_y + 1.0;
    std::vector<float> grad(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double raw = prob_grid.pixels()[i];
        const double p = std::clamp(raw, kProbEps, 1.0 - kProbEps);
        const double y = gt_mask.pixels()[i] >= 0.5f ? 1.0 : 0.0;
        double g = 0.0;
        if (raw > kProbEps && raw < 1.0 - kProbEps) {
            g += (-(y / p) + (1.0 - y) / (1.0 - p)) / static_cast<double>(n);
            g += -(2.0 * y * denom - (2.0 * overlap + 1.0)) / (denom * denom);
        }
        grad[i] = static_cast<float>(g);
    }
    return grad;
}

}  // namespace salign::evidential
