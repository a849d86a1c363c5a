// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "salign/nn/tensor.hpp"

namespace salign::nn {

// Decoupled weight decay Adam. Deterministic given gradient sequence.
class AdamW {
  public:
    struct Config {
        float lr = 1e-4f;
        float beta1 = 0.9f;
        float beta2 = 0.999f;
        float eps = 1e-8f;
        float weight_decay = 0.01f;
    };

    AdamW(std::vector<Var> params, Config config);

    void step();
    void zero_grad() { nn::zero_grad(params_); }
    const Config& config() const { return config_; }

  private:
    std::vector<Var> params_;
    Config config_;
    long step_count_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace salign::nn
