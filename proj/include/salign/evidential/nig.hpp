// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "salign/core/image_grid.hpp"

namespace salign::evidential {

// Per-pixel Normal-Inverse-Gamma parameter grids emitted by an evidential
// head. gamma is the prediction mean; the head's mapping keeps omega > 1,
// alpha > 1 and beta > 0.
struct NIGParams {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> gamma, omega, alpha, beta;

    static NIGParams zeros(int channels, int height, int width);
    std::int64_t size() const {
        return static_cast<std::int64_t>(channels) * height * width;
    }
    // Mathematical domain for the likelihood: omega, alpha, beta all positive
    // and finite. Throws DomainError otherwise.
    void validate_domain() const;
    // Head invariants: omega > 1, alpha > 1, beta > 0.
    bool satisfies_head_invariants() const;
};

// Nonnegative uncertainty grids, one channel per NIG channel:
// U = beta / (omega * (alpha - 1)).
struct UncertaintyMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> values;

    float at(int c, int x, int y) const {
        return values[(static_cast<std::int64_t>(c) * height + y) * width + x];
    }
    std::int64_t size() const {
        return static_cast<std::int64_t>(channels) * height * width;
    }
    double mean() const;
};

struct LandmarkDetection {
    int heatmap_index = 0;
    double x = 0.0;
    double y = 0.0;
    double peak = 0.0;
};

// log p(mu, sigma2 | gamma, omega, alpha, beta) of the NIG density.
double nig_log_density(double mu, double sigma2, double gamma, double omega, double alpha,
                       double beta);

// Mean over the grid of the NIG negative log-likelihood.
double nig_nll_loss(const NIGParams& params, const std::vector<float>& target);

// Mean of |y - gamma| * (2*omega + alpha).
double evidence_regularizer(const NIGParams& params, const std::vector<float>& target);

// nig_nll_loss + lambda * evidence_regularizer.
double evidential_loss(const NIGParams& params, const std::vector<float>& target,
                       double lambda_reg);

struct NIGGrads {
    std::vector<float> gamma, omega, alpha, beta;
};

// Analytic gradient of evidential_loss w.r.t. each parameter grid. This is
// the single source of gradient truth used by training; tests compare it
// against central finite differences.
NIGGrads evidential_loss_gradients(const NIGParams& params, const std::vector<float>& target,
                                   double lambda_reg);

UncertaintyMap uncertainty_map(const NIGParams& params);

// Mean uncertainty at the predicted landmark pixels; +infinity when the
// detection list is empty (no-detection signal).
double model_uncertainty_detection(const UncertaintyMap& umap,
                                   const std::vector<LandmarkDetection>& landmarks);

// Mean uncertainty over predicted foreground; +infinity for an empty mask.
double model_uncertainty_segmentation(const UncertaintyMap& umap, const ImageGrid& mask);

double digamma(double x);

// Flat-array forms used by batched training ops; same formulas and gradient
// truth as the NIGParams overloads.
double evidential_loss_span(const float* gamma, const float* omega, const float* alpha,
                            const float* beta, const float* target, std::int64_t n,
                            double lambda_reg);

// Accumulates d(loss)/d(param) * upstream into the four gradient arrays.
void evidential_loss_grad_span(const float* gamma, const float* omega, const float* alpha,
                               const float* beta, const float* target, std::int64_t n,
                               double lambda_reg, float upstream, float* d_gamma, float* d_omega,
                               float* d_alpha, float* d_beta);

}  // namespace salign::evidential
