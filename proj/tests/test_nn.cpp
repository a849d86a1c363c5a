// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "salign/core/rng.hpp"
#include "salign/nn/adamw.hpp"
#include "salign/nn/layers.hpp"
#include "salign/nn/ops.hpp"

using namespace salign;
using namespace salign::nn;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, float scale = 1.0f) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<float>(rng.normal(0.0, scale));
    }
    return t;
}

// Central finite differences against one analytic backward pass.
void check_gradients(const std::vector<Var>& leaves, const std::function<Var()>& build,
                     float rel_tol = 2e-2f, float abs_tol = 2e-3f) {
    Var out = build();
    REQUIRE(out->value.size() == 1);
    for (const Var& p : leaves) p->grad = Tensor();
    backward(out);

    for (const Var& p : leaves) {
        REQUIRE(p->grad.defined());
        for (std::int64_t i = 0; i < p->value.size(); ++i) {
            const float orig = p->value[i];
            const float h = std::max(1e-3f, 5e-3f * std::fabs(orig));
            p->value[i] = orig + h;
            const double fp = build()->value[0];
            p->value[i] = orig - h;
            const double fm = build()->value[0];
            p->value[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = p->grad[i];
            const double err = std::fabs(numeric - analytic);
            const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1.0});
            INFO("element ", i, " numeric=", numeric, " analytic=", analytic);
            CHECK(err <= rel_tol * denom + abs_tol);
        }
    }
}

// Direct convolution oracle.
Tensor conv2d_naive(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    const int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    Tensor y(std::vector<int>{N, Co, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    double acc = b[co];
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int iy = oy * stride + ky - pad;
                                const int ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += static_cast<double>(
                                           x[((static_cast<std::int64_t>(n) * Ci + ci) * H + iy) * W + ix]) *
                                       w[((static_cast<std::int64_t>(co) * Ci + ci) * kh + ky) * kw + kx];
                            }
                    y[((static_cast<std::int64_t>(n) * Co + co) * Ho + oy) * Wo + ox] =
                        static_cast<float>(acc);
                }
    return y;
}

}  // namespace

TEST_CASE("conv2d matches naive convolution") {
    Rng rng(1);
    for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{1, 0}}) {
        Var x = leaf(random_tensor(rng, {2, 3, 6, 5}));
        Var w = leaf(random_tensor(rng, {4, 3, 3, 3}, 0.5f));
        Var b = leaf(random_tensor(rng, {4}, 0.2f));
        Var y = conv2d(x, w, b, stride, pad);
        Tensor ref = conv2d_naive(x->value, w->value, b->value, stride, pad);
        REQUIRE(y->value.same_shape(ref));
        for (std::int64_t i = 0; i < ref.size(); ++i) {
            CHECK(y->value[i] == doctest::Approx(ref[i]).epsilon(1e-4));
        }
    }
}

TEST_CASE("conv2d gradients") {
    Rng rng(2);
    Var x = leaf(random_tensor(rng, {2, 2, 5, 5}));
    Var w = leaf(random_tensor(rng, {3, 2, 3, 3}, 0.5f));
    Var b = leaf(random_tensor(rng, {3}, 0.2f));
    check_gradients({x, w, b}, [&] { return mean_all(silu(conv2d(x, w, b, 1, 1))); });

    Var w2 = leaf(random_tensor(rng, {3, 2, 3, 3}, 0.5f));
    check_gradients({x, w2}, [&] { return mean_all(conv2d(x, w2, b, 2, 1)); });
}

TEST_CASE("linear gradients") {
    Rng rng(3);
    Var x = leaf(random_tensor(rng, {4, 6}));
    Var w = leaf(random_tensor(rng, {3, 6}, 0.5f));
    Var b = leaf(random_tensor(rng, {3}, 0.2f));
    check_gradients({x, w, b}, [&] { return mean_all(silu(linear(x, w, b))); });
}

TEST_CASE("group_norm normalizes and has correct gradients") {
    Rng rng(4);
    Var x = leaf(random_tensor(rng, {2, 4, 3, 3}, 2.0f));
    Var gamma = leaf(Tensor(std::vector<int>{4}, 1.0f));
    Var beta = leaf(Tensor(std::vector<int>{4}, 0.0f));

    Var y = group_norm(x, gamma, beta, 2);
    // per (n, group) mean ~0 and var ~1
    const int cpg = 2, hw = 9;
    for (int n = 0; n < 2; ++n) {
        for (int g = 0; g < 2; ++g) {
            double sum = 0.0, sq = 0.0;
            for (int cc = 0; cc < cpg; ++cc) {
                const int c = g * cpg + cc;
                for (int i = 0; i < hw; ++i) {
                    float v = y->value[((n * 4 + c) * hw) + i];
                    sum += v;
                    sq += v * v;
                }
            }
            const double m = sum / (cpg * hw);
            CHECK(std::abs(m) < 1e-4);
            CHECK(std::abs(sq / (cpg * hw) - m * m - 1.0) < 1e-2);
        }
    }

    check_gradients({x, gamma, beta},
                    [&] { return mean_all(silu(group_norm(x, gamma, beta, 2))); });
}

TEST_CASE("activation op gradients") {
    Rng rng(5);
    Var x = leaf(random_tensor(rng, {3, 7}));
    check_gradients({x}, [&] { return mean_all(relu(x)); });
    check_gradients({x}, [&] { return mean_all(sigmoid(x)); });
    check_gradients({x}, [&] { return mean_all(softplus(x)); });
    check_gradients({x}, [&] { return mean_all(mul(silu(x), sigmoid(x))); });
}

TEST_CASE("attention-style composite gradients") {
    Rng rng(6);
    Var q = leaf(random_tensor(rng, {2, 4, 3}, 0.7f));
    Var k = leaf(random_tensor(rng, {2, 3, 4}, 0.7f));
    Var v = leaf(random_tensor(rng, {2, 4, 5}, 0.7f));
    check_gradients({q, k, v}, [&] {
        Var scores = mul_scalar(bmm(q, k), 0.5f);  // (2,4,4)
        Var attn = softmax_last(scores);
        return mean_all(bmm(attn, v));
    });
}

TEST_CASE("pool, upsample, concat, bias gradients") {
    Rng rng(7);
    Var x = leaf(random_tensor(rng, {2, 2, 4, 4}));
    Var y = leaf(random_tensor(rng, {2, 3, 4, 4}));
    Var bias = leaf(random_tensor(rng, {2}, 0.3f));
    Var rows = leaf(random_tensor(rng, {2, 2}, 0.3f));
    check_gradients({x}, [&] { return mean_all(silu(avg_pool2(x))); });
    check_gradients({x}, [&] { return mean_all(silu(upsample_nearest2(x))); });
    check_gradients({x, y}, [&] { return mean_all(silu(concat_ch(x, y))); });
    check_gradients({x, bias}, [&] { return mean_all(silu(add_bias_ch(x, bias))); });
    check_gradients({x, rows}, [&] { return mean_all(silu(add_rows(x, rows))); });
}

TEST_CASE("gradient accumulates across reuse") {
    Tensor t(std::vector<int>{1});
    t[0] = 3.0f;
    Var x = leaf(t);
    // f = mean(x*x + 2x) -> df/dx = 2x + 2 = 8
    Var out = mean_all(add(mul(x, x), mul_scalar(x, 2.0f)));
    backward(out);
    CHECK(x->grad[0] == doctest::Approx(8.0f));
}

TEST_CASE("mse loss value and gradient") {
    Rng rng(8);
    Var p = leaf(random_tensor(rng, {2, 3}));
    Tensor target = random_tensor(rng, {2, 3});
    Var loss = mse_loss(p, target);
    double expect = 0.0;
    for (int i = 0; i < 6; ++i) {
        double d = p->value[i] - target[i];
        expect += d * d / 6.0;
    }
    CHECK(loss->value[0] == doctest::Approx(expect).epsilon(1e-5));
    check_gradients({p}, [&] { return mse_loss(p, target); });
}

TEST_CASE("ResBlock and attention layers run with gradients") {
    Rng rng(9);
    ParamStore ps;
    ResBlock block(ps, "rb", 4, 6, 8, 2, rng);
    SelfAttention2d attn(ps, "attn", 6, 2, rng);
    Var x = leaf(random_tensor(rng, {2, 4, 4, 4}));
    Var temb = leaf(random_tensor(rng, {2, 8}));

    auto build = [&] { return mean_all(attn(block(x, temb))); };
    Var out = build();
    backward(out);
    for (const Var& p : ps.all()) {
        CHECK(p->grad.defined());
    }

    // spot-check a couple of layer parameters with finite differences
    check_gradients({ps.get("rb.conv1.w"), ps.get("attn.q.w")}, build);
}

TEST_CASE("AdamW reduces a quadratic") {
    Tensor t(std::vector<int>{4});
    for (int i = 0; i < 4; ++i) t[i] = 2.0f + i;
    Var x = leaf(t);
    AdamW opt({x}, {.lr = 0.05f, .weight_decay = 0.0f});
    double first = 0.0, last = 0.0;
    for (int it = 0; it < 200; ++it) {
        opt.zero_grad();
        Var loss = mse_loss(x, Tensor(std::vector<int>{4}, 0.5f));
        backward(loss);
        if (it == 0) first = loss->value[0];
        last = loss->value[0];
        opt.step();
    }
    CHECK(last < 0.01 * first);
}

TEST_CASE("sinusoidal embedding shape and range") {
    Tensor e = sinusoidal_time_embedding({0.0f, 10.0f, 500.0f}, 16);
    CHECK(e.shape() == std::vector<int>{3, 16});
    for (std::int64_t i = 0; i < e.size(); ++i) {
        CHECK(e[i] >= -1.0f);
        CHECK(e[i] <= 1.0f);
    }
    // t=0: all sines 0, all cosines 1
    for (int i = 0; i < 8; ++i) {
        CHECK(e[i] == doctest::Approx(0.0f));
        CHECK(e[8 + i] == doctest::Approx(1.0f));
    }
}

TEST_CASE("ops are deterministic across repeated evaluation") {
    Rng rng(10);
    Var x = leaf(random_tensor(rng, {2, 3, 8, 8}));
    Var w = leaf(random_tensor(rng, {5, 3, 3, 3}, 0.4f));
    Var b = leaf(random_tensor(rng, {5}, 0.1f));
    Var y1 = conv2d(x, w, b, 1, 1);
    Var y2 = conv2d(x, w, b, 1, 1);
    for (std::int64_t i = 0; i < y1->value.size(); ++i) {
        CHECK(y1->value[i] == y2->value[i]);
    }
}
