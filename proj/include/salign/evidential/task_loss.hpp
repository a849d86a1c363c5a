// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "salign/core/image_grid.hpp"

namespace salign::evidential {

// Mean squared error over all pixels and heatmap channels.
double task_loss_detection(const std::vector<float>& pred_heatmaps,
                           const std::vector<float>& gt_heatmaps);

// Binary cross-entropy (mean per pixel) plus smoothed dice complement:
// CE + 1 - (2*sum(p*y) + 1) / (sum(p) + sum(y) + 1).
double task_loss_segmentation(const ImageGrid& prob_grid, const ImageGrid& gt_mask);

// d(task_loss_segmentation)/d(prob) for training; same clamping as the loss.
std::vector<float> task_loss_segmentation_grad(const ImageGrid& prob_grid,
                                               const ImageGrid& gt_mask);

}  // namespace salign::evidential
