// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "salign/core/rng.hpp"
#include "salign/nn/ops.hpp"
#include "salign/nn/tensor.hpp"

namespace salign::nn {

// Named parameter registry. Names are hierarchical ("base.dec0.conv1.w") so
// checkpoints can address tensors and training can freeze by prefix.
class ParamStore {
  public:
    Var add(const std::string& name, Tensor init);
    Var get(const std::string& name) const;
    bool has(const std::string& name) const { return named_.count(name) > 0; }

    std::vector<Var> all() const;
    std::vector<Var> matching_prefix(const std::string& prefix) const;
    const std::map<std::string, Var>& named() const { return named_; }

    void set_trainable_prefix(const std::string& prefix, bool trainable);
    void set_all_trainable(bool trainable);

  private:
    std::map<std::string, Var> named_;
};

Tensor normal_init(Rng& rng, std::vector<int> shape, float stddev);
Tensor kaiming_conv_init(Rng& rng, int co, int ci, int kh, int kw);

struct Conv2dLayer {
    Var w, b;
    int stride = 1, pad = 0;

    Conv2dLayer() = default;
    Conv2dLayer(ParamStore& ps, const std::string& name, int ci, int co, int k, int stride,
                int pad, Rng& rng, bool zero_init = false);
    Var operator()(const Var& x) const { return conv2d(x, w, b, stride, pad); }
};

struct LinearLayer {
    Var w, b;

    LinearLayer() = default;
    LinearLayer(ParamStore& ps, const std::string& name, int in, int out, Rng& rng);
    Var operator()(const Var& x) const { return linear(x, w, b); }
};

struct GroupNormLayer {
    Var gamma, beta;
    int groups = 8;

    GroupNormLayer() = default;
    GroupNormLayer(ParamStore& ps, const std::string& name, int channels, int groups);
    Var operator()(const Var& x) const { return group_norm(x, gamma, beta, groups); }
};

// GN -> SiLU -> conv3x3 (+ time proj) -> GN -> SiLU -> conv3x3, residual skip.
struct ResBlock {
    GroupNormLayer gn1, gn2;
    Conv2dLayer conv1, conv2;
    LinearLayer temb_proj;
    Conv2dLayer skip;
    bool has_temb = false, has_skip = false;

    ResBlock() = default;
    ResBlock(ParamStore& ps, const std::string& name, int ci, int co, int temb_dim, int groups,
             Rng& rng);
    Var operator()(const Var& x, const Var& temb) const;
};

// Single-head self attention over spatial positions, pre-normalized,
// residual output.
struct SelfAttention2d {
    GroupNormLayer norm;
    Conv2dLayer to_q, to_k, to_v, to_out;
    int channels = 0;

    SelfAttention2d() = default;
    SelfAttention2d(ParamStore& ps, const std::string& name, int channels, int groups, Rng& rng);
    Var operator()(const Var& x) const;
};

// (N) timestep values -> (N, dim) sin/cos features.
Tensor sinusoidal_time_embedding(const std::vector<float>& t, int dim);

int norm_groups_for(int channels);

}  // namespace salign::nn
