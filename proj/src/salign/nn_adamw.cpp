// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/nn/adamw.hpp"

#include <cmath>

namespace salign::nn {

AdamW::AdamW(std::vector<Var> params, Config config)
    : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Var& p : params_) {
        m_.push_back(Tensor::zeros_like(p->value));
        v_.push_back(Tensor::zeros_like(p->value));
    }
}

void AdamW::step() {
    ++step_count_;
    const float bc1 = 1.0f - std::pow(config_.beta1, static_cast<float>(step_count_));
    const float bc2 = 1.0f - std::pow(config_.beta2, static_cast<float>(step_count_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Var& p = params_[k];
        if (!p->requires_grad || !p->grad.defined()) continue;
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::int64_t i = 0; i < p->value.size(); ++i) {
            const float g = p->grad[i];
            m[i] = config_.beta1 * m[i] + (1.0f - config_.beta1) * g;
            v[i] = config_.beta2 * v[i] + (1.0f - config_.beta2) * g * g;
            const float mhat = m[i] / bc1;
            const float vhat = v[i] / bc2;
            p->value[i] -=
                config_.lr * (mhat / (std::sqrt(vhat) + config_.eps) +
                              config_.weight_decay * p->value[i]);
        }
    }
}

}  // namespace salign::nn
