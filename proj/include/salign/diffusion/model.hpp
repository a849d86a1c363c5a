// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "salign/core/image_grid.hpp"
#include "salign/nn/layers.hpp"

namespace salign::diffusion {

enum class Stage { base, controlled };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& s);

// Desk-scale noise-prediction U-Net: three resolution levels plus a middle
// block; attention only at the lowest resolution. The controlled variant
// duplicates the middle and decoder blocks into a trainable branch fed with
// an encoded condition, joined back through zero-initialized 1x1
// convolutions so an untrained branch leaves sampling untouched.
struct UNetConfig {
    int image_size = 64;
    int c0 = 16;
    int c1 = 32;
    int c2 = 48;
    int temb_dim = 64;
    int cond_channels = 16;

    nlohmann::json to_json() const;
    static UNetConfig from_json(const nlohmann::json& j);
};

class DiffusionModel {
  public:
    DiffusionModel(const UNetConfig& config, Stage stage, std::uint64_t init_seed);

    // Trainable copy of the middle/decoder stack attached to a frozen base.
    static DiffusionModel make_controlled(const DiffusionModel& base_model);

    // x: (N,1,H,W) in [-1,1] model space, t: per-sample step values,
    // condition: (N,1,H,W) in [0,1], required iff stage is controlled.
    nn::Var predict_noise(const nn::Var& x, const std::vector<float>& t_values,
                          const nn::Var& condition) const;

    Stage stage() const { return stage_; }
    const UNetConfig& config() const { return config_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // Only control-branch parameters train in stage controlled.
    std::vector<nn::Var> trainable_params() const;
    void freeze_base();

  private:
    void build_base(Rng& rng);
    void build_control(Rng& rng);

    UNetConfig config_;
    Stage stage_;
    nn::ParamStore params_;

    // base network
    nn::Conv2dLayer stem_;
    nn::LinearLayer temb1_, temb2_;
    nn::ResBlock enc0_, enc1_, enc2_;
    nn::Conv2dLayer down0_, down1_;
    nn::ResBlock mid1_, mid2_;
    nn::SelfAttention2d mid_attn_;
    nn::ResBlock dec2_, dec1_, dec0_;
    nn::Conv2dLayer up1_, up0_;
    nn::GroupNormLayer head_norm_;
    nn::Conv2dLayer head_;

    // control branch (stage controlled only)
    nn::Conv2dLayer cond_enc1_, cond_enc2_, cond_enc3_;
    nn::Conv2dLayer ctrl_in_;
    nn::ResBlock cmid1_, cmid2_;
    nn::SelfAttention2d cmid_attn_;
    nn::ResBlock cdec2_, cdec1_, cdec0_;
    nn::Conv2dLayer cup1_, cup0_;
    nn::Conv2dLayer zero_mid_, zero_d2_, zero_d1_, zero_d0_;
};

}  // namespace salign::diffusion
