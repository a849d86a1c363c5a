// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/evidential/nig.hpp"

#include <cmath>
#include <limits>

#include "salign/core/errors.hpp"

namespace salign::evidential {

NIGParams NIGParams::zeros(int channels, int height, int width) {
    NIGParams p;
    p.channels = channels;
    p.height = height;
    p.width = width;
    const std::size_t n = static_cast<std::size_t>(p.size());
    p.gamma.assign(n, 0.0f);
    p.omega.assign(n, 0.0f);
    p.alpha.assign(n, 0.0f);
    p.beta.assign(n, 0.0f);
    return p;
}

void NIGParams::validate_domain() const {
    const std::size_t n = static_cast<std::size_t>(size());
    if (gamma.size() != n || omega.size() != n || alpha.size() != n || beta.size() != n) {
        throw ArgumentError("NIGParams: grid sizes disagree with declared shape");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(omega[i] > 0.0f) || !(alpha[i] > 0.0f) || !(beta[i] > 0.0f) ||
            !std::isfinite(gamma[i]) || !std::isfinite(omega[i]) || !std::isfinite(alpha[i]) ||
            !std::isfinite(beta[i])) {
            throw DomainError("NIGParams: omega, alpha, beta must be positive and finite");
        }
    }
}

bool NIGParams::satisfies_head_invariants() const {
    const std::size_t n = static_cast<std::size_t>(size());
    for (std::size_t i = 0; i < n; ++i) {
        if (!(omega[i] > 1.0f && alpha[i] > 1.0f && beta[i] > 0.0f)) return false;
    }
    return true;
}

double UncertaintyMap::mean() const {
    if (values.empty()) return 0.0;
    double sum = 0.0;
    for (float v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

double nig_log_density(double mu, double sigma2, double gamma, double omega, double alpha,
                       double beta) {
    if (!(sigma2 > 0.0)) throw DomainError("nig_log_density: sigma2 must be > 0");
    if (!(omega > 0.0) || !(alpha > 0.0) || !(beta > 0.0)) {
        throw DomainError("nig_log_density: omega, alpha, beta must be > 0");
    }
    return alpha * std::log(beta) + 0.5 * std::log(omega) - std::lgamma(alpha) -
           0.5 * std::log(2.0 * M_PI * sigma2) - (alpha + 1.0) * std::log(sigma2) -
           (2.0 * beta + omega * (gamma - mu) * (gamma - mu)) / (2.0 * sigma2);
}

namespace {

void check_target(const NIGParams& params, const std::vector<float>& target, const char* op) {
    params.validate_domain();
    if (target.size() != static_cast<std::size_t>(params.size())) {
        throw ArgumentError(std::string(op) + ": target size mismatch");
    }
    for (float y : target) {
        if (!std::isfinite(y)) throw ArgumentError(std::string(op) + ": non-finite target");
    }
}

// Single-element NLL of the evidential regression likelihood.
inline double nll_element(double y, double g, double w, double a, double b) {
    const double big_omega = 2.0 * b * (1.0 + w);
    const double s = (y - g) * (y - g) * w + big_omega;
    return 0.5 * std::log(M_PI / w) - a * std::log(big_omega) + (a + 0.5) * std::log(s) +
           std::lgamma(a) - std::lgamma(a + 0.5);
}

}  // namespace

double nig_nll_loss(const NIGParams& params, const std::vector<float>& target) {
    check_target(params, target, "nig_nll_loss");
    const std::size_t n = target.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += nll_element(target[i], params.gamma[i], params.omega[i], params.alpha[i],
                           params.beta[i]);
    }
    return sum / static_cast<double>(n);
}

double evidential_loss_span(const float* gamma, const float* omega, const float* alpha,
                            const float* beta, const float* target, std::int64_t n,
                            double lambda_reg) {
    double sum = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        sum += nll_element(target[i], gamma[i], omega[i], alpha[i], beta[i]);
        if (lambda_reg > 0.0) {
            sum += lambda_reg * std::abs(static_cast<double>(target[i]) - gamma[i]) *
                   (2.0 * omega[i] + alpha[i]);
        }
    }
    return sum / static_cast<double>(n);
}

void evidential_loss_grad_span(const float* gamma, const float* omega, const float* alpha,
                               const float* beta, const float* target, std::int64_t n,
                               double lambda_reg, float upstream, float* d_gamma, float* d_omega,
                               float* d_alpha, float* d_beta) {
    const double scale = static_cast<double>(upstream) / static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const double y = target[i], g = gamma[i], w = omega[i], a = alpha[i], b = beta[i];
        const double r = y - g;
        const double big_omega = 2.0 * b * (1.0 + w);
        const double s = r * r * w + big_omega;

        double dg = (a + 0.5) * (-2.0 * r * w) / s;
        double dw = -0.5 / w - a * (2.0 * b) / big_omega + (a + 0.5) * (r * r + 2.0 * b) / s;
        double da = -std::log(big_omega) + std::log(s) + digamma(a) - digamma(a + 0.5);
        double db = -a * 2.0 * (1.0 + w) / big_omega + (a + 0.5) * 2.0 * (1.0 + w) / s;
        if (lambda_reg > 0.0) {
            const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
            dg += lambda_reg * (-sign) * (2.0 * w + a);
            dw += lambda_reg * 2.0 * std::abs(r);
            da += lambda_reg * std::abs(r);
        }
        d_gamma[i] += static_cast<float>(dg * scale);
        d_omega[i] += static_cast<float>(dw * scale);
        d_alpha[i] += static_cast<float>(da * scale);
        d_beta[i] += static_cast<float>(db * scale);
    }
}

double evidence_regularizer(const NIGParams& params, const std::vector<float>& target) {
    if (target.size() != static_cast<std::size_t>(params.size())) {
        throw ArgumentError("evidence_regularizer: target size mismatch");
    }
    const std::size_t n = target.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += std::abs(static_cast<double>(target[i]) - params.gamma[i]) *
               (2.0 * params.omega[i] + params.alpha[i]);
    }
    return sum / static_cast<double>(n);
}

double evidential_loss(const NIGParams& params, const std::vector<float>& target,
                       double lambda_reg) {
    if (lambda_reg < 0.0) throw ArgumentError("evidential_loss: lambda_reg must be >= 0");
    double loss = nig_nll_loss(params, target);
    if (lambda_reg > 0.0) loss += lambda_reg * evidence_regularizer(params, target);
    return loss;
}

NIGGrads evidential_loss_gradients(const NIGParams& params, const std::vector<float>& target,
                                   double lambda_reg) {
    check_target(params, target, "evidential_loss_gradients");
    const std::size_t n = target.size();
    NIGGrads grads;
    grads.gamma.assign(n, 0.0f);
    grads.omega.assign(n, 0.0f);
    grads.alpha.assign(n, 0.0f);
    grads.beta.assign(n, 0.0f);
    evidential_loss_grad_span(params.gamma.data(), params.omega.data(), params.alpha.data(),
                              params.beta.data(), target.data(), static_cast<std::int64_t>(n),
                              lambda_reg, 1.0f, grads.gamma.data(), grads.omega.data(),
                              grads.alpha.data(), grads.beta.data());
    return grads;
}

UncertaintyMap uncertainty_map(const NIGParams& params) {
    params.validate_domain();
    const std::size_t n = static_cast<std::size_t>(params.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (!(params.alpha[i] > 1.0f)) {
            throw DomainError("uncertainty_map: alpha must be > 1");
        }
    }
    UncertaintyMap umap;
    umap.channels = params.channels;
    umap.height = params.height;
    umap.width = params.width;
    umap.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        umap.values[i] = static_cast<float>(
            params.beta[i] / (static_cast<double>(params.omega[i]) * (params.alpha[i] - 1.0)));
    }
    return umap;
}

double model_uncertainty_detection(const UncertaintyMap& umap,
                                   const std::vector<LandmarkDetection>& landmarks) {
    if (landmarks.empty()) return std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (const LandmarkDetection& lm : landmarks) {
        const int x = static_cast<int>(std::lround(lm.x));
        const int y = static_cast<int>(std::lround(lm.y));
        if (lm.heatmap_index < 0 || lm.heatmap_index >= umap.channels || x < 0 ||
            x >= umap.width || y < 0 || y >= umap.height) {
            throw ArgumentError("model_uncertainty_detection: landmark outside the map");
        }
        sum += umap.at(lm.heatmap_index, x, y);
    }
    return sum / static_cast<double>(landmarks.size());
}

double model_uncertainty_segmentation(const UncertaintyMap& umap, const ImageGrid& mask) {
    if (umap.channels != 1 || umap.width != mask.width() || umap.height != mask.height()) {
        throw ArgumentError("model_uncertainty_segmentation: shape mismatch");
    }
    double sum = 0.0;
    std::int64_t count = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.at(x, y) >= 0.5f) {
                sum += umap.at(0, x, y);
                ++count;
            }
        }
    }
    if (count == 0) return std::numeric_limits<double>::infinity();
    return sum / static_cast<double>(count);
}

double digamma(double x) {
    if (!(x > 0.0)) throw DomainError("digamma: x must be > 0");
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // Asymptotic expansion; |error| < 1e-12 for x >= 6.
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 -
                      inv2 * (1.0 / 132)))));
    return result;
}

}  // namespace salign::evidential
