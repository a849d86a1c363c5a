// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "salign/core/geometry.hpp"
#include "salign/core/image_grid.hpp"

namespace salign::metrics {

struct MatchedPair {
    int pred_index = -1;
    int truth_index = -1;
    double distance = 0.0;
};

// Detection scoring at a fixed match radius. "accuracy" is the matched
// fraction of predictions (precision-like) so it can pair with recall in F1.
struct DetectionReport {
    double accuracy_pct = 0.0;
    double recall_pct = 0.0;
    double f1_pct = 0.0;
    std::optional<double> mean_error_px;
    long matched = 0;
    long predicted = 0;
    long truth = 0;
    std::vector<std::vector<MatchedPair>> matches_per_image;
};

struct BlandAltman {
    double bias = 0.0;
    double sd = 0.0;
    double loa_low = 0.0;
    double loa_high = 0.0;
    long n = 0;
};

struct Correlation {
    double r = 0.0;
    double r2 = 0.0;
    double p_value = 1.0;
};

struct AgreementReport {
    double r = 0.0;
    double r2 = 0.0;
    double p_value = 1.0;
    double mean_abs_diff = 0.0;
    double bias = 0.0;
    double sd = 0.0;
    double loa_low = 0.0;
    double loa_high = 0.0;
    long n = 0;
};

// One-to-one greedy nearest-first matching within `radius_px` per image.
DetectionReport detection_metrics(const std::vector<std::vector<Point>>& pred_sets,
                                  const std::vector<std::vector<Point>>& truth_sets,
                                  double radius_px = 10.0);

// (dice, iou); both 1.0 when both masks are empty.
std::pair<double, double> dice_iou(const ImageGrid& pred_mask, const ImageGrid& truth_mask);

BlandAltman bland_altman(std::span<const double> a, std::span<const double> b);

// Pearson r, R^2 of the least-squares fit, two-sided p-value for r.
Correlation correlation_r2(std::span<const double> a, std::span<const double> b);

AgreementReport agreement_report(std::span<const double> a, std::span<const double> b);

// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

}  // namespace salign::metrics
