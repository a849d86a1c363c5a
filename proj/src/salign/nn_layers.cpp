// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/nn/layers.hpp"

#include <cmath>
#include <numeric>

#include "salign/core/errors.hpp"

namespace salign::nn {

Var ParamStore::add(const std::string& name, Tensor init) {
    if (named_.count(name)) throw ArgumentError("ParamStore: duplicate parameter " + name);
    Var p = leaf(std::move(init));
    named_.emplace(name, p);
    return p;
}

Var ParamStore::get(const std::string& name) const {
    auto it = named_.find(name);
    if (it == named_.end()) throw ArgumentError("ParamStore: unknown parameter " + name);
    return it->second;
}

std::vector<Var> ParamStore::all() const {
    std::vector<Var> out;
    out.reserve(named_.size());
    for (const auto& [name, p] : named_) out.push_back(p);
    return out;
}

std::vector<Var> ParamStore::matching_prefix(const std::string& prefix) const {
    std::vector<Var> out;
    for (const auto& [name, p] : named_) {
        if (name.rfind(prefix, 0) == 0) out.push_back(p);
    }
    return out;
}

void ParamStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
    for (auto& [name, p] : named_) {
        if (name.rfind(prefix, 0) == 0) p->requires_grad = trainable;
    }
}

void ParamStore::set_all_trainable(bool trainable) {
    for (auto& [name, p] : named_) p->requires_grad = trainable;
}

Tensor normal_init(Rng& rng, std::vector<int> shape, float stddev) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<float>(rng.normal(0.0, stddev));
    }
    return t;
}

Tensor kaiming_conv_init(Rng& rng, int co, int ci, int kh, int kw) {
    const float fan_in = static_cast<float>(ci * kh * kw);
    return normal_init(rng, {co, ci, kh, kw}, std::sqrt(2.0f / fan_in));
}

Conv2dLayer::Conv2dLayer(ParamStore& ps, const std::string& name, int ci, int co, int k,
                         int stride_, int pad_, Rng& rng, bool zero_init)
    : stride(stride_), pad(pad_) {
    Tensor wt = zero_init ? Tensor(std::vector<int>{co, ci, k, k})
                          : kaiming_conv_init(rng, co, ci, k, k);
    w = ps.add(name + ".w", std::move(wt));
    b = ps.add(name + ".b", Tensor(std::vector<int>{co}));
}

LinearLayer::LinearLayer(ParamStore& ps, const std::string& name, int in, int out, Rng& rng) {
    w = ps.add(name + ".w", normal_init(rng, {out, in}, std::sqrt(2.0f / static_cast<float>(in))));
    b = ps.add(name + ".b", Tensor(std::vector<int>{out}));
}

GroupNormLayer::GroupNormLayer(ParamStore& ps, const std::string& name, int channels, int groups_)
    : groups(groups_) {
    gamma = ps.add(name + ".g", Tensor(std::vector<int>{channels}, 1.0f));
    beta = ps.add(name + ".b", Tensor(std::vector<int>{channels}));
}

int norm_groups_for(int channels) {
    for (int g : {8, 4, 2}) {
        if (channels % g == 0) return g;
    }
    return 1;
}

ResBlock::ResBlock(ParamStore& ps, const std::string& name, int ci, int co, int temb_dim,
                   int groups, Rng& rng) {
    gn1 = GroupNormLayer(ps, name + ".gn1", ci, groups);
    conv1 = Conv2dLayer(ps, name + ".conv1", ci, co, 3, 1, 1, rng);
    if (temb_dim > 0) {
        temb_proj = LinearLayer(ps, name + ".temb", temb_dim, co, rng);
        has_temb = true;
    }
    gn2 = GroupNormLayer(ps, name + ".gn2", co, groups);
    conv2 = Conv2dLayer(ps, name + ".conv2", co, co, 3, 1, 1, rng);
    if (ci != co) {
        skip = Conv2dLayer(ps, name + ".skip", ci, co, 1, 1, 0, rng);
        has_skip = true;
    }
}

Var ResBlock::operator()(const Var& x, const Var& temb) const {
    Var h = conv1(silu(gn1(x)));
    if (has_temb) {
        if (!temb) throw ArgumentError("ResBlock: missing time embedding");
        h = add_rows(h, temb_proj(silu(temb)));
    }
    h = conv2(silu(gn2(h)));
    return add(h, has_skip ? skip(x) : x);
}

SelfAttention2d::SelfAttention2d(ParamStore& ps, const std::string& name, int channels_,
                                 int groups, Rng& rng)
    : channels(channels_) {
    norm = GroupNormLayer(ps, name + ".norm", channels_, groups);
    to_q = Conv2dLayer(ps, name + ".q", channels_, channels_, 1, 1, 0, rng);
    to_k = Conv2dLayer(ps, name + ".k", channels_, channels_, 1, 1, 0, rng);
    to_v = Conv2dLayer(ps, name + ".v", channels_, channels_, 1, 1, 0, rng);
    to_out = Conv2dLayer(ps, name + ".out", channels_, channels_, 1, 1, 0, rng);
}

Var SelfAttention2d::operator()(const Var& x) const {
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    const int T = H * W;
    Var h = norm(x);
    Var q = reshape(to_q(h), {N, C, T});
    Var k = reshape(to_k(h), {N, C, T});
    Var v = reshape(to_v(h), {N, C, T});
    Var scores = mul_scalar(bmm(transpose12(q), k), 1.0f / std::sqrt(static_cast<float>(C)));
    Var attn = softmax_last(scores);                       // (N,T,T)
    Var mixed = transpose12(bmm(attn, transpose12(v)));    // (N,C,T)
    Var out = to_out(reshape(mixed, {N, C, H, W}));
    return add(x, out);
}

Tensor sinusoidal_time_embedding(const std::vector<float>& t, int dim) {
    if (dim % 2 != 0) throw ArgumentError("sinusoidal_time_embedding: dim must be even");
    const int half = dim / 2;
    Tensor out(std::vector<int>{static_cast<int>(t.size()), dim});
    for (std::size_t n = 0; n < t.size(); ++n) {
        for (int i = 0; i < half; ++i) {
            const double freq =
                std::exp(-std::log(10000.0) * static_cast<double>(i) / std::max(1, half - 1));
            out[static_cast<std::int64_t>(n) * dim + i] =
                static_cast<float>(std::sin(t[n] * freq));
            out[static_cast<std::int64_t>(n) * dim + half + i] =
                static_cast<float>(std::cos(t[n] * freq));
        }
    }
    return out;
}

}  // namespace salign::nn
