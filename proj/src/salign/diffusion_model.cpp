// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/diffusion/model.hpp"

#include "salign/core/errors.hpp"

namespace salign::diffusion {

using nn::Var;

std::string to_string(Stage stage) { return stage == Stage::base ? "base" : "controlled"; }

Stage stage_from_string(const std::string& s) {
    if (s == "base") return Stage::base;
    if (s == "controlled") return Stage::controlled;
    throw ConfigError("unknown diffusion stage: " + s);
}

nlohmann::json UNetConfig::to_json() const {
    return {{"image_size", image_size}, {"c0", c0},     {"c1", c1},
            {"c2", c2},                 {"temb_dim", temb_dim}, {"cond_channels", cond_channels}};
}

UNetConfig UNetConfig::from_json(const nlohmann::json& j) {
    UNetConfig cfg;
    cfg.image_size = j.at("image_size").get<int>();
    cfg.c0 = j.at("c0").get<int>();
    cfg.c1 = j.at("c1").get<int>();
    cfg.c2 = j.at("c2").get<int>();
    cfg.temb_dim = j.at("temb_dim").get<int>();
    cfg.cond_channels = j.at("cond_channels").get<int>();
    return cfg;
}

DiffusionModel::DiffusionModel(const UNetConfig& config, Stage stage, std::uint64_t init_seed)
    : config_(config), stage_(stage) {
    if (config.image_size % 4 != 0) {
        throw ConfigError("DiffusionModel: image_size must be divisible by 4");
    }
    Rng rng(init_seed);
    Rng base_rng = rng.fork(1);
    build_base(base_rng);
    if (stage_ == Stage::controlled) {
        Rng ctrl_rng = rng.fork(2);
        build_control(ctrl_rng);
    }
}

void DiffusionModel::build_base(Rng& rng) {
    const int c0 = config_.c0, c1 = config_.c1, c2 = config_.c2, td = config_.temb_dim;
    const int g0 = nn::norm_groups_for(c0), g1 = nn::norm_groups_for(c1),
              g2 = nn::norm_groups_for(c2);
    auto& ps = params_;
    temb1_ = nn::LinearLayer(ps, "base.temb1", td, td, rng);
    temb2_ = nn::LinearLayer(ps, "base.temb2", td, td, rng);
    stem_ = nn::Conv2dLayer(ps, "base.stem", 1, c0, 3, 1, 1, rng);
    enc0_ = nn::ResBlock(ps, "base.enc0", c0, c0, td, g0, rng);
    down0_ = nn::Conv2dLayer(ps, "base.down0", c0, c1, 3, 2, 1, rng);
    enc1_ = nn::ResBlock(ps, "base.enc1", c1, c1, td, g1, rng);
    down1_ = nn::Conv2dLayer(ps, "base.down1", c1, c2, 3, 2, 1, rng);
    enc2_ = nn::ResBlock(ps, "base.enc2", c2, c2, td, g2, rng);
    mid1_ = nn::ResBlock(ps, "base.mid1", c2, c2, td, g2, rng);
    mid_attn_ = nn::SelfAttention2d(ps, "base.mid_attn", c2, g2, rng);
    mid2_ = nn::ResBlock(ps, "base.mid2", c2, c2, td, g2, rng);
    dec2_ = nn::ResBlock(ps, "base.dec2", c2 + c2, c2, td, g2, rng);
    up1_ = nn::Conv2dLayer(ps, "base.up1", c2, c1, 3, 1, 1, rng);
    dec1_ = nn::ResBlock(ps, "base.dec1", c1 + c1, c1, td, g1, rng);
    up0_ = nn::Conv2dLayer(ps, "base.up0", c1, c0, 3, 1, 1, rng);
    dec0_ = nn::ResBlock(ps, "base.dec0", c0 + c0, c0, td, g0, rng);
    head_norm_ = nn::GroupNormLayer(ps, "base.head_norm", c0, g0);
    head_ = nn::Conv2dLayer(ps, "base.head", c0, 1, 3, 1, 1, rng);
}

void DiffusionModel::build_control(Rng& rng) {
    const int c0 = config_.c0, c1 = config_.c1, c2 = config_.c2, td = config_.temb_dim;
    const int cc = config_.cond_channels;
    const int g0 = nn::norm_groups_for(c0), g1 = nn::norm_groups_for(c1),
              g2 = nn::norm_groups_for(c2);
    auto& ps = params_;
    // 3-layer condition encoder, full resolution down to the middle scale.
    cond_enc1_ = nn::Conv2dLayer(ps, "ctrl.cond1", 1, 8, 3, 2, 1, rng);
    cond_enc2_ = nn::Conv2dLayer(ps, "ctrl.cond2", 8, cc, 3, 2, 1, rng);
    cond_enc3_ = nn::Conv2dLayer(ps, "ctrl.cond3", cc, cc, 3, 1, 1, rng);
    ctrl_in_ = nn::Conv2dLayer(ps, "ctrl.in", c2 + cc, c2, 3, 1, 1, rng);
    cmid1_ = nn::ResBlock(ps, "ctrl.mid1", c2, c2, td, g2, rng);
    cmid_attn_ = nn::SelfAttention2d(ps, "ctrl.mid_attn", c2, g2, rng);
    cmid2_ = nn::ResBlock(ps, "ctrl.mid2", c2, c2, td, g2, rng);
    cdec2_ = nn::ResBlock(ps, "ctrl.dec2", c2 + c2, c2, td, g2, rng);
    cup1_ = nn::Conv2dLayer(ps, "ctrl.up1", c2, c1, 3, 1, 1, rng);
    cdec1_ = nn::ResBlock(ps, "ctrl.dec1", c1 + c1, c1, td, g1, rng);
    cup0_ = nn::Conv2dLayer(ps, "ctrl.up0", c1, c0, 3, 1, 1, rng);
    cdec0_ = nn::ResBlock(ps, "ctrl.dec0", c0 + c0, c0, td, g0, rng);
    zero_mid_ = nn::Conv2dLayer(ps, "ctrl.zero_mid", c2, c2, 1, 1, 0, rng, /*zero_init=*/true);
    zero_d2_ = nn::Conv2dLayer(ps, "ctrl.zero_d2", c2, c2, 1, 1, 0, rng, /*zero_init=*/true);
    zero_d1_ = nn::Conv2dLayer(ps, "ctrl.zero_d1", c1, c1, 1, 1, 0, rng, /*zero_init=*/true);
    zero_d0_ = nn::Conv2dLayer(ps, "ctrl.zero_d0", c0, c0, 1, 1, 0, rng, /*zero_init=*/true);
}

DiffusionModel DiffusionModel::make_controlled(const DiffusionModel& base_model) {
    if (base_model.stage_ != Stage::base) {
        throw ArgumentError("make_controlled: expected a base-stage model");
    }
    DiffusionModel ctrl(base_model.config_, Stage::controlled, /*init_seed=*/1);
    // Copy base weights, then initialize the control copies from the
    // corresponding base blocks.
    for (const auto& [name, var] : base_model.params_.named()) {
        ctrl.params_.get(name)->value = var->value;
    }
    const std::pair<const char*, const char*> copies[] = {
        {"base.mid1", "ctrl.mid1"},   {"base.mid_attn", "ctrl.mid_attn"},
        {"base.mid2", "ctrl.mid2"},   {"base.dec2", "ctrl.dec2"},
        {"base.up1", "ctrl.up1"},     {"base.dec1", "ctrl.dec1"},
        {"base.up0", "ctrl.up0"},     {"base.dec0", "ctrl.dec0"},
    };
    for (const auto& [src_prefix, dst_prefix] : copies) {
        for (const auto& [name, var] : base_model.params_.named()) {
            if (name.rfind(src_prefix, 0) != 0) continue;
            const std::string suffix = name.substr(std::string(src_prefix).size());
            ctrl.params_.get(std::string(dst_prefix) + suffix)->value = var->value;
        }
    }
    ctrl.freeze_base();
    return ctrl;
}

void DiffusionModel::freeze_base() { params_.set_trainable_prefix("base.", false); }

std::vector<Var> DiffusionModel::trainable_params() const {
    return stage_ == Stage::base ? params_.matching_prefix("base.")
                                 : params_.matching_prefix("ctrl.");
}

Var DiffusionModel::predict_noise(const Var& x, const std::vector<float>& t_values,
                                  const Var& condition) const {
    if (!x || x->value.rank() != 4 || x->value.dim(1) != 1) {
        throw ArgumentError("predict_noise: x must be (N,1,H,W)");
    }
    if (x->value.dim(2) != config_.image_size || x->value.dim(3) != config_.image_size) {
        throw ArgumentError("predict_noise: image size mismatch");
    }
    if (static_cast<int>(t_values.size()) != x->value.dim(0)) {
        throw ArgumentError("predict_noise: one timestep per batch item required");
    }
    if (stage_ == Stage::controlled) {
        if (!condition) throw ArgumentError("predict_noise: controlled model requires a condition");
        if (!condition->value.same_shape(x->value)) {
            throw ArgumentError("predict_noise: condition/image size mismatch");
        }
    } else if (condition) {
        throw ArgumentError("predict_noise: base model takes no condition");
    }

    Var temb = nn::constant(nn::sinusoidal_time_embedding(t_values, config_.temb_dim));
    temb = temb2_(nn::silu(temb1_(temb)));

    Var h0 = enc0_(stem_(x), temb);
    Var h1 = enc1_(down0_(h0), temb);
    Var h2 = enc2_(down1_(h1), temb);
    Var mid = mid2_(mid_attn_(mid1_(h2, temb)), temb);

    if (stage_ == Stage::base) {
        Var d2 = dec2_(nn::concat_ch(mid, h2), temb);
        Var d1 = dec1_(nn::concat_ch(up1_(nn::upsample_nearest2(d2)), h1), temb);
        Var d0 = dec0_(nn::concat_ch(up0_(nn::upsample_nearest2(d1)), h0), temb);
        return head_(nn::silu(head_norm_(d0)));
    }

    Var cf = cond_enc3_(nn::silu(cond_enc2_(nn::silu(cond_enc1_(condition)))));
    Var c = ctrl_in_(nn::concat_ch(h2, cf));
    Var cmid = cmid2_(cmid_attn_(cmid1_(c, temb)), temb);
    Var mid_sum = nn::add(mid, zero_mid_(cmid));

    Var cd2 = cdec2_(nn::concat_ch(cmid, h2), temb);
    Var d2 = nn::add(dec2_(nn::concat_ch(mid_sum, h2), temb), zero_d2_(cd2));

    Var cd1 = cdec1_(nn::concat_ch(cup1_(nn::upsample_nearest2(cd2)), h1), temb);
    Var d1 = nn::add(dec1_(nn::concat_ch(up1_(nn::upsample_nearest2(d2)), h1), temb),
                     zero_d1_(cd1));

    Var cd0 = cdec0_(nn::concat_ch(cup0_(nn::upsample_nearest2(cd1)), h0), temb);
    Var d0 = nn::add(dec0_(nn::concat_ch(up0_(nn::upsample_nearest2(d1)), h0), temb),
                     zero_d0_(cd0));
    return head_(nn::silu(head_norm_(d0)));
}

}  // namespace salign::diffusion
