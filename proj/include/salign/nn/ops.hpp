// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "salign/nn/tensor.hpp"

namespace salign::nn {

// Elementwise / broadcast arithmetic.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, float s);
Var mul_scalar(const Var& a, float s);

// x: (N,C,H,W) + bias (C).
Var add_bias_ch(const Var& x, const Var& bias);
// x: (N,C,H,W) + rows (N,C), broadcast over spatial dims.
Var add_rows(const Var& x, const Var& rows);

// x: (N,F), w: (G,F), b: (G) -> (N,G).
Var linear(const Var& x, const Var& w, const Var& b);

// x: (N,Ci,H,W), w: (Co,Ci,kh,kw), b: (Co).
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

Var upsample_nearest2(const Var& x);
Var avg_pool2(const Var& x);

// x: (N,C,H,W); gamma/beta: (C); C divisible by groups.
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, float eps = 1e-5f);

Var relu(const Var& x);
Var silu(const Var& x);
Var sigmoid(const Var& x);
Var softplus(const Var& x);

Var concat_ch(const Var& a, const Var& b);
// Channel range [from, to) of a (N,C,H,W) tensor.
Var slice_ch(const Var& x, int from, int to);
Var reshape(const Var& x, std::vector<int> shape);
// (N,A,B) -> (N,B,A).
Var transpose12(const Var& x);
// (N,I,K) x (N,K,J) -> (N,I,J).
Var bmm(const Var& a, const Var& b);
// Softmax over the last dimension.
Var softmax_last(const Var& x);

Var mean_all(const Var& x);
// Mean of (pred - target)^2 over all elements; target carries no gradient.
Var mse_loss(const Var& pred, const Tensor& target);

}  // namespace salign::nn
