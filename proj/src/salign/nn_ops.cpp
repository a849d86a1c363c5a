// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "salign/core/errors.hpp"

namespace salign::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value)) {
        throw ArgumentError(std::string(op) + ": shape mismatch");
    }
}

void check_rank(const Var& x, int rank, const char* op) {
    if (x->value.rank() != rank) {
        throw ArgumentError(std::string(op) + ": expected rank " + std::to_string(rank));
    }
}

void accumulate(Node& dst, const Tensor& g) {
    dst.ensure_grad();
    float* d = dst.grad.data();
    const float* s = g.data();
    for (std::int64_t i = 0; i < g.size(); ++i) d[i] += s[i];
}

float sigmoid_f(float x) {
    return x >= 0.0f ? 1.0f / (1.0f + std::exp(-x)) : std::exp(x) / (1.0f + std::exp(x));
}

}  // namespace

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = Tensor::zeros_like(a->value);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) accumulate(*a, n.grad);
        if (b->requires_grad) accumulate(*b, n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros_like(a->value);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) accumulate(*a, n.grad);
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.size(); ++i) b->grad[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros_like(a->value);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.size(); ++i)
                a->grad[i] += n.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.size(); ++i)
                b->grad[i] += n.grad[i] * a->value[i];
        }
    });
}

Var add_scalar(const Var& a, float s) {
    Tensor out = Tensor::zeros_like(a->value);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + s;
    return make_op(std::move(out), {a}, [a](Node& n) {
        if (a->requires_grad) accumulate(*a, n.grad);
    });
}

Var mul_scalar(const Var& a, float s) {
    Tensor out = Tensor::zeros_like(a->value);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * s;
    return make_op(std::move(out), {a}, [a, s](Node& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::int64_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * s;
        }
    });
}

Var add_bias_ch(const Var& x, const Var& bias) {
    check_rank(x, 4, "add_bias_ch");
    check_rank(bias, 1, "add_bias_ch");
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    if (bias->value.dim(0) != C) throw ArgumentError("add_bias_ch: bias size != channels");
    Tensor out = Tensor::zeros_like(x->value);
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const float b = bias->value[c];
            const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) out[base + i] = x->value[base + i] + b;
        }
    }
    return make_op(std::move(out), {x, bias}, [x, bias, N, C, hw](Node& n) {
        if (x->requires_grad) accumulate(*x, n.grad);
        if (bias->requires_grad) {
            bias->ensure_grad();
            for (int ni = 0; ni < N; ++ni) {
                for (int c = 0; c < C; ++c) {
                    const std::int64_t base = (static_cast<std::int64_t>(ni) * C + c) * hw;
                    double s = 0.0;
                    for (std::int64_t i = 0; i < hw; ++i) s += n.grad[base + i];
                    bias->grad[c] += static_cast<float>(s);
                }
            }
        }
    });
}

Var add_rows(const Var& x, const Var& rows) {
    check_rank(x, 4, "add_rows");
    check_rank(rows, 2, "add_rows");
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    if (rows->value.dim(0) != N || rows->value.dim(1) != C) {
        throw ArgumentError("add_rows: rows must be (N,C)");
    }
    Tensor out = Tensor::zeros_like(x->value);
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const float t = rows->value[static_cast<std::int64_t>(n) * C + c];
            const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) out[base + i] = x->value[base + i] + t;
        }
    }
    return make_op(std::move(out), {x, rows}, [x, rows, N, C, hw](Node& n) {
        if (x->requires_grad) accumulate(*x, n.grad);
        if (rows->requires_grad) {
            rows->ensure_grad();
            for (int ni = 0; ni < N; ++ni) {
                for (int c = 0; c < C; ++c) {
                    const std::int64_t base = (static_cast<std::int64_t>(ni) * C + c) * hw;
                    double s = 0.0;
                    for (std::int64_t i = 0; i < hw; ++i) s += n.grad[base + i];
                    rows->grad[static_cast<std::int64_t>(ni) * C + c] += static_cast<float>(s);
                }
            }
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    check_rank(x, 2, "linear");
    check_rank(w, 2, "linear");
    check_rank(b, 1, "linear");
    const int N = x->value.dim(0), F = x->value.dim(1);
    const int G = w->value.dim(0);
    if (w->value.dim(1) != F || b->value.dim(0) != G) {
        throw ArgumentError("linear: weight/bias shape mismatch");
    }
    Tensor out(std::vector<int>{N, G});
    {
        ConstMapMat X(x->value.data(), N, F);
        ConstMapMat W(w->value.data(), G, F);
        MapMat Y(out.data(), N, G);
        Y.noalias() = X * W.transpose();
        for (int n = 0; n < N; ++n)
            for (int g = 0; g < G; ++g) Y(n, g) += b->value[g];
    }
    return make_op(std::move(out), {x, w, b}, [x, w, b, N, F, G](Node& n) {
        ConstMapMat Gy(n.grad.data(), N, G);
        if (x->requires_grad) {
            x->ensure_grad();
            MapMat Dx(x->grad.data(), N, F);
            ConstMapMat W(w->value.data(), G, F);
            Dx.noalias() += Gy * W;
        }
        if (w->requires_grad) {
            w->ensure_grad();
            MapMat Dw(w->grad.data(), G, F);
            ConstMapMat X(x->value.data(), N, F);
            Dw.noalias() += Gy.transpose() * X;
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int g = 0; g < G; ++g) {
                double s = 0.0;
                for (int ni = 0; ni < N; ++ni) s += Gy(ni, g);
                b->grad[g] += static_cast<float>(s);
            }
        }
    });
}

namespace {

struct ConvDims {
    int N, Ci, H, W, Co, kh, kw, stride, pad, Ho, Wo;
};

void im2col(const float* x_n, const ConvDims& d, float* cols) {
    // cols: (Ci*kh*kw, Ho*Wo)
    const std::int64_t owo = static_cast<std::int64_t>(d.Ho) * d.Wo;
    std::int64_t row = 0;
    for (int ci = 0; ci < d.Ci; ++ci) {
        const float* plane = x_n + static_cast<std::int64_t>(ci) * d.H * d.W;
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx, ++row) {
                float* dst = cols + row * owo;
                for (int oy = 0; oy < d.Ho; ++oy) {
                    const int iy = oy * d.stride + ky - d.pad;
                    float* dd = dst + static_cast<std::int64_t>(oy) * d.Wo;
                    if (iy < 0 || iy >= d.H) {
                        std::fill(dd, dd + d.Wo, 0.0f);
                        continue;
                    }
                    const float* src = plane + static_cast<std::int64_t>(iy) * d.W;
                    for (int ox = 0; ox < d.Wo; ++ox) {
                        const int ix = ox * d.stride + kx - d.pad;
                        dd[ox] = (ix >= 0 && ix < d.W) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_accumulate(const float* cols, const ConvDims& d, float* dx_n) {
    const std::int64_t owo = static_cast<std::int64_t>(d.Ho) * d.Wo;
    std::int64_t row = 0;
    for (int ci = 0; ci < d.Ci; ++ci) {
        float* plane = dx_n + static_cast<std::int64_t>(ci) * d.H * d.W;
        for (int ky = 0; ky < d.kh; ++ky) {
            for (int kx = 0; kx < d.kw; ++kx, ++row) {
                const float* src = cols + row * owo;
                for (int oy = 0; oy < d.Ho; ++oy) {
                    const int iy = oy * d.stride + ky - d.pad;
                    if (iy < 0 || iy >= d.H) continue;
                    float* dst = plane + static_cast<std::int64_t>(iy) * d.W;
                    const float* ss = src + static_cast<std::int64_t>(oy) * d.Wo;
                    for (int ox = 0; ox < d.Wo; ++ox) {
                        const int ix = ox * d.stride + kx - d.pad;
                        if (ix >= 0 && ix < d.W) dst[ix] += ss[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    check_rank(x, 4, "conv2d");
    check_rank(w, 4, "conv2d");
    check_rank(b, 1, "conv2d");
    ConvDims d;
    d.N = x->value.dim(0);
    d.Ci = x->value.dim(1);
    d.H = x->value.dim(2);
    d.W = x->value.dim(3);
    d.Co = w->value.dim(0);
    d.kh = w->value.dim(2);
    d.kw = w->value.dim(3);
    d.stride = stride;
    d.pad = pad;
    if (w->value.dim(1) != d.Ci) throw ArgumentError("conv2d: in-channel mismatch");
    if (b->value.dim(0) != d.Co) throw ArgumentError("conv2d: bias size != out channels");
    if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1");
    d.Ho = (d.H + 2 * pad - d.kh) / stride + 1;
    d.Wo = (d.W + 2 * pad - d.kw) / stride + 1;
    if (d.Ho <= 0 || d.Wo <= 0) throw ArgumentError("conv2d: kernel larger than padded input");

    const std::int64_t ckk = static_cast<std::int64_t>(d.Ci) * d.kh * d.kw;
    const std::int64_t owo = static_cast<std::int64_t>(d.Ho) * d.Wo;

    Tensor out(std::vector<int>{d.N, d.Co, d.Ho, d.Wo});
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (int n = 0; n < d.N; ++n) {
        std::vector<float> cols(static_cast<std::size_t>(ckk * owo));
        im2col(x->value.data() + static_cast<std::int64_t>(n) * d.Ci * d.H * d.W, d, cols.data());
        ConstMapMat W(w->value.data(), d.Co, ckk);
        ConstMapMat C(cols.data(), ckk, owo);
        MapMat Y(out.data() + static_cast<std::int64_t>(n) * d.Co * owo, d.Co, owo);
        Y.noalias() = W * C;
        for (int co = 0; co < d.Co; ++co) Y.row(co).array() += b->value[co];
    }

    return make_op(std::move(out), {x, w, b}, [x, w, b, d, ckk, owo](Node& node) {
        const int N = d.N;
        if (x->requires_grad) {
            x->ensure_grad();
#pragma omp parallel for schedule(static) num_threads(thread_count())
            for (int n = 0; n < N; ++n) {
                std::vector<float> dcols(static_cast<std::size_t>(ckk * owo));
                ConstMapMat W(w->value.data(), d.Co, ckk);
                ConstMapMat Gy(node.grad.data() + static_cast<std::int64_t>(n) * d.Co * owo, d.Co,
                               owo);
                MapMat Dc(dcols.data(), ckk, owo);
                Dc.noalias() = W.transpose() * Gy;
                col2im_accumulate(dcols.data(), d,
                                  x->grad.data() + static_cast<std::int64_t>(n) * d.Ci * d.H * d.W);
            }
        }
        if (w->requires_grad) {
            w->ensure_grad();
            // Per-sample partials reduced in fixed order for determinism.
            std::vector<std::vector<float>> partials(static_cast<std::size_t>(N));
#pragma omp parallel for schedule(static) num_threads(thread_count())
            for (int n = 0; n < N; ++n) {
                std::vector<float> cols(static_cast<std::size_t>(ckk * owo));
                im2col(x->value.data() + static_cast<std::int64_t>(n) * d.Ci * d.H * d.W, d,
                       cols.data());
                partials[n].assign(static_cast<std::size_t>(d.Co * ckk), 0.0f);
                ConstMapMat Gy(node.grad.data() + static_cast<std::int64_t>(n) * d.Co * owo, d.Co,
                               owo);
                ConstMapMat C(cols.data(), ckk, owo);
                MapMat Dw(partials[n].data(), d.Co, ckk);
                Dw.noalias() = Gy * C.transpose();
            }
            for (int n = 0; n < N; ++n) {
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(d.Co) * ckk; ++i) {
                    w->grad[i] += partials[n][static_cast<std::size_t>(i)];
                }
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int n = 0; n < N; ++n) {
                for (int co = 0; co < d.Co; ++co) {
                    const float* g =
                        node.grad.data() + (static_cast<std::int64_t>(n) * d.Co + co) * owo;
                    double s = 0.0;
                    for (std::int64_t i = 0; i < owo; ++i) s += g[i];
                    b->grad[co] += static_cast<float>(s);
                }
            }
        }
    });
}

Var upsample_nearest2(const Var& x) {
    check_rank(x, 4, "upsample_nearest2");
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    Tensor out(std::vector<int>{N, C, 2 * H, 2 * W});
    for (int nc = 0; nc < N * C; ++nc) {
        const float* src = x->value.data() + static_cast<std::int64_t>(nc) * H * W;
        float* dst = out.data() + static_cast<std::int64_t>(nc) * 4 * H * W;
        for (int y = 0; y < 2 * H; ++y) {
            const float* srow = src + static_cast<std::int64_t>(y / 2) * W;
            float* drow = dst + static_cast<std::int64_t>(y) * 2 * W;
            for (int xk = 0; xk < 2 * W; ++xk) drow[xk] = srow[xk / 2];
        }
    }
    return make_op(std::move(out), {x}, [x, N, C, H, W](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int nc = 0; nc < N * C; ++nc) {
            const float* g = n.grad.data() + static_cast<std::int64_t>(nc) * 4 * H * W;
            float* dx = x->grad.data() + static_cast<std::int64_t>(nc) * H * W;
            for (int y = 0; y < 2 * H; ++y) {
                const float* grow = g + static_cast<std::int64_t>(y) * 2 * W;
                float* drow = dx + static_cast<std::int64_t>(y / 2) * W;
                for (int xk = 0; xk < 2 * W; ++xk) drow[xk / 2] += grow[xk];
            }
        }
    });
}

Var avg_pool2(const Var& x) {
    check_rank(x, 4, "avg_pool2");
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    if (H % 2 != 0 || W % 2 != 0) throw ArgumentError("avg_pool2: odd spatial size");
    const int Ho = H / 2, Wo = W / 2;
    Tensor out(std::vector<int>{N, C, Ho, Wo});
    for (int nc = 0; nc < N * C; ++nc) {
        const float* src = x->value.data() + static_cast<std::int64_t>(nc) * H * W;
        float* dst = out.data() + static_cast<std::int64_t>(nc) * Ho * Wo;
        for (int y = 0; y < Ho; ++y) {
            for (int xk = 0; xk < Wo; ++xk) {
                const float* s = src + static_cast<std::int64_t>(2 * y) * W + 2 * xk;
                dst[static_cast<std::int64_t>(y) * Wo + xk] =
                    0.25f * (s[0] + s[1] + s[W] + s[W + 1]);
            }
        }
    }
    return make_op(std::move(out), {x}, [x, N, C, H, W, Ho, Wo](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int nc = 0; nc < N * C; ++nc) {
            const float* g = n.grad.data() + static_cast<std::int64_t>(nc) * Ho * Wo;
            float* dx = x->grad.data() + static_cast<std::int64_t>(nc) * H * W;
            for (int y = 0; y < Ho; ++y) {
                for (int xk = 0; xk < Wo; ++xk) {
                    const float gv = 0.25f * g[static_cast<std::int64_t>(y) * Wo + xk];
                    float* s = dx + static_cast<std::int64_t>(2 * y) * W + 2 * xk;
                    s[0] += gv;
                    s[1] += gv;
                    s[W] += gv;
                    s[W + 1] += gv;
                }
            }
        }
    });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, float eps) {
    check_rank(x, 4, "group_norm");
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    if (C % groups != 0) throw ArgumentError("group_norm: channels not divisible by groups");
    if (gamma->value.size() != C || beta->value.size() != C) {
        throw ArgumentError("group_norm: gamma/beta must have C elements");
    }
    const int cpg = C / groups;
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    const std::int64_t m = cpg * hw;

    Tensor out = Tensor::zeros_like(x->value);
    auto stats = std::make_shared<std::vector<float>>(static_cast<std::size_t>(N) * groups * 2);
    for (int n = 0; n < N; ++n) {
        for (int g = 0; g < groups; ++g) {
            const std::int64_t base = (static_cast<std::int64_t>(n) * C + g * cpg) * hw;
            double sum = 0.0, sq = 0.0;
            for (std::int64_t i = 0; i < m; ++i) {
                const float v = x->value[base + i];
                sum += v;
                sq += static_cast<double>(v) * v;
            }
            const float mean = static_cast<float>(sum / m);
            const float var = static_cast<float>(sq / m - static_cast<double>(mean) * mean);
            const float invstd = 1.0f / std::sqrt(std::max(var, 0.0f) + eps);
            (*stats)[(static_cast<std::size_t>(n) * groups + g) * 2] = mean;
            (*stats)[(static_cast<std::size_t>(n) * groups + g) * 2 + 1] = invstd;
            for (int cc = 0; cc < cpg; ++cc) {
                const int c = g * cpg + cc;
                const float ga = gamma->value[c], be = beta->value[c];
                const std::int64_t cbase = (static_cast<std::int64_t>(n) * C + c) * hw;
                for (std::int64_t i = 0; i < hw; ++i) {
                    out[cbase + i] = (x->value[cbase + i] - mean) * invstd * ga + be;
                }
            }
        }
    }

    return make_op(std::move(out), {x, gamma, beta},
                   [x, gamma, beta, stats, N, C, groups, cpg, hw, m](Node& node) {
        for (int n = 0; n < N; ++n) {
            for (int g = 0; g < groups; ++g) {
                const float mean = (*stats)[(static_cast<std::size_t>(n) * groups + g) * 2];
                const float invstd = (*stats)[(static_cast<std::size_t>(n) * groups + g) * 2 + 1];
                // Group sums of gamma-scaled upstream grad and its product with x_hat.
                double sum_g = 0.0, sum_gx = 0.0;
                for (int cc = 0; cc < cpg; ++cc) {
                    const int c = g * cpg + cc;
                    const float ga = gamma->value[c];
                    const std::int64_t cbase = (static_cast<std::int64_t>(n) * C + c) * hw;
                    for (std::int64_t i = 0; i < hw; ++i) {
                        const float gu = node.grad[cbase + i] * ga;
                        const float xh = (x->value[cbase + i] - mean) * invstd;
                        sum_g += gu;
                        sum_gx += static_cast<double>(gu) * xh;
                    }
                }
                const float mg = static_cast<float>(sum_g / m);
                const float mgx = static_cast<float>(sum_gx / m);
                for (int cc = 0; cc < cpg; ++cc) {
                    const int c = g * cpg + cc;
                    const float ga = gamma->value[c];
                    const std::int64_t cbase = (static_cast<std::int64_t>(n) * C + c) * hw;
                    if (x->requires_grad) x->ensure_grad();
                    if (gamma->requires_grad) gamma->ensure_grad();
                    if (beta->requires_grad) beta->ensure_grad();
                    double dga = 0.0, dbe = 0.0;
                    for (std::int64_t i = 0; i < hw; ++i) {
                        const float gu = node.grad[cbase + i];
                        const float xh = (x->value[cbase + i] - mean) * invstd;
                        if (x->requires_grad) {
                            x->grad[cbase + i] += invstd * (gu * ga - mg - xh * mgx);
                        }
                        dga += static_cast<double>(gu) * xh;
                        dbe += gu;
                    }
                    if (gamma->requires_grad) gamma->grad[c] += static_cast<float>(dga);
                    if (beta->requires_grad) beta->grad[c] += static_cast<float>(dbe);
                }
            }
        }
    });
}

Var relu(const Var& x) {
    Tensor out = Tensor::zeros_like(x->value);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0f, x->value[i]);
    return make_op(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.size(); ++i) {
            if (x->value[i] > 0.0f) x->grad[i] += n.grad[i];
        }
    });
}

Var silu(const Var& x) {
    Tensor out = Tensor::zeros_like(x->value);
    for (std::int64_t i = 0; i < out.size(); ++i) {
        out[i] = x->value[i] * sigmoid_f(x->value[i]);
    }
    return make_op(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.size(); ++i) {
            const float s = sigmoid_f(x->value[i]);
            x->grad[i] += n.grad[i] * s * (1.0f + x->value[i] * (1.0f - s));
        }
    });
}

Var sigmoid(const Var& x) {
    Tensor out = Tensor::zeros_like(x->value);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = sigmoid_f(x->value[i]);
    auto saved = std::make_shared<Tensor>(out);
    return make_op(std::move(out), {x}, [x, saved](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.size(); ++i) {
            const float y = (*saved)[i];
            x->grad[i] += n.grad[i] * y * (1.0f - y);
        }
    });
}

Var softplus(const Var& x) {
    Tensor out = Tensor::zeros_like(x->value);
    for (std::int64_t i = 0; i < out.size(); ++i) {
        const float v = x->value[i];
        out[i] = v > 20.0f ? v : (v < -20.0f ? std::exp(v) : std::log1p(std::exp(v)));
    }
    return make_op(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.size(); ++i) {
            x->grad[i] += n.grad[i] * sigmoid_f(x->value[i]);
        }
    });
}

Var concat_ch(const Var& a, const Var& b) {
    check_rank(a, 4, "concat_ch");
    check_rank(b, 4, "concat_ch");
    const int N = a->value.dim(0), Ca = a->value.dim(1), H = a->value.dim(2), W = a->value.dim(3);
    const int Cb = b->value.dim(1);
    if (b->value.dim(0) != N || b->value.dim(2) != H || b->value.dim(3) != W) {
        throw ArgumentError("concat_ch: mismatched batch/spatial dims");
    }
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    Tensor out(std::vector<int>{N, Ca + Cb, H, W});
    for (int n = 0; n < N; ++n) {
        std::copy_n(a->value.data() + static_cast<std::int64_t>(n) * Ca * hw, Ca * hw,
                    out.data() + static_cast<std::int64_t>(n) * (Ca + Cb) * hw);
        std::copy_n(b->value.data() + static_cast<std::int64_t>(n) * Cb * hw, Cb * hw,
                    out.data() + static_cast<std::int64_t>(n) * (Ca + Cb) * hw + Ca * hw);
    }
    return make_op(std::move(out), {a, b}, [a, b, N, Ca, Cb, hw](Node& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (int ni = 0; ni < N; ++ni) {
                const float* g = n.grad.data() + static_cast<std::int64_t>(ni) * (Ca + Cb) * hw;
                float* da = a->grad.data() + static_cast<std::int64_t>(ni) * Ca * hw;
                for (std::int64_t i = 0; i < Ca * hw; ++i) da[i] += g[i];
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int ni = 0; ni < N; ++ni) {
                const float* g =
                    n.grad.data() + static_cast<std::int64_t>(ni) * (Ca + Cb) * hw + Ca * hw;
                float* db = b->grad.data() + static_cast<std::int64_t>(ni) * Cb * hw;
                for (std::int64_t i = 0; i < Cb * hw; ++i) db[i] += g[i];
            }
        }
    });
}

Var slice_ch(const Var& x, int from, int to) {
    check_rank(x, 4, "slice_ch");
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    if (from < 0 || to > C || from >= to) throw ArgumentError("slice_ch: bad channel range");
    const int Cs = to - from;
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    Tensor out(std::vector<int>{N, Cs, H, W});
    for (int n = 0; n < N; ++n) {
        std::copy_n(x->value.data() + (static_cast<std::int64_t>(n) * C + from) * hw, Cs * hw,
                    out.data() + static_cast<std::int64_t>(n) * Cs * hw);
    }
    return make_op(std::move(out), {x}, [x, N, C, Cs, from, hw](Node& node) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int n = 0; n < N; ++n) {
            const float* g = node.grad.data() + static_cast<std::int64_t>(n) * Cs * hw;
            float* dx = x->grad.data() + (static_cast<std::int64_t>(n) * C + from) * hw;
            for (std::int64_t i = 0; i < Cs * hw; ++i) dx[i] += g[i];
        }
    });
}

Var reshape(const Var& x, std::vector<int> shape) {
    Tensor out(shape);
    if (out.size() != x->value.size()) throw ArgumentError("reshape: element count mismatch");
    std::copy_n(x->value.data(), x->value.size(), out.data());
    return make_op(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.size(); ++i) x->grad[i] += n.grad[i];
    });
}

Var transpose12(const Var& x) {
    check_rank(x, 3, "transpose12");
    const int N = x->value.dim(0), A = x->value.dim(1), B = x->value.dim(2);
    Tensor out(std::vector<int>{N, B, A});
    for (int n = 0; n < N; ++n) {
        const float* src = x->value.data() + static_cast<std::int64_t>(n) * A * B;
        float* dst = out.data() + static_cast<std::int64_t>(n) * A * B;
        for (int a = 0; a < A; ++a)
            for (int b = 0; b < B; ++b) dst[static_cast<std::int64_t>(b) * A + a] = src[static_cast<std::int64_t>(a) * B + b];
    }
    return make_op(std::move(out), {x}, [x, N, A, B](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int ni = 0; ni < N; ++ni) {
            const float* g = n.grad.data() + static_cast<std::int64_t>(ni) * A * B;
            float* dx = x->grad.data() + static_cast<std::int64_t>(ni) * A * B;
            for (int b = 0; b < B; ++b)
                for (int a = 0; a < A; ++a) dx[static_cast<std::int64_t>(a) * B + b] += g[static_cast<std::int64_t>(b) * A + a];
        }
    });
}

Var bmm(const Var& a, const Var& b) {
    check_rank(a, 3, "bmm");
    check_rank(b, 3, "bmm");
    const int N = a->value.dim(0), I = a->value.dim(1), K = a->value.dim(2);
    const int J = b->value.dim(2);
    if (b->value.dim(0) != N || b->value.dim(1) != K) throw ArgumentError("bmm: shape mismatch");
    Tensor out(std::vector<int>{N, I, J});
    for (int n = 0; n < N; ++n) {
        ConstMapMat A(a->value.data() + static_cast<std::int64_t>(n) * I * K, I, K);
        ConstMapMat B(b->value.data() + static_cast<std::int64_t>(n) * K * J, K, J);
        MapMat Y(out.data() + static_cast<std::int64_t>(n) * I * J, I, J);
        Y.noalias() = A * B;
    }
    return make_op(std::move(out), {a, b}, [a, b, N, I, K, J](Node& n) {
        for (int ni = 0; ni < N; ++ni) {
            ConstMapMat G(n.grad.data() + static_cast<std::int64_t>(ni) * I * J, I, J);
            if (a->requires_grad) {
                a->ensure_grad();
                ConstMapMat B(b->value.data() + static_cast<std::int64_t>(ni) * K * J, K, J);
                MapMat Da(a->grad.data() + static_cast<std::int64_t>(ni) * I * K, I, K);
                Da.noalias() += G * B.transpose();
            }
            if (b->requires_grad) {
                b->ensure_grad();
                ConstMapMat A(a->value.data() + static_cast<std::int64_t>(ni) * I * K, I, K);
                MapMat Db(b->grad.data() + static_cast<std::int64_t>(ni) * K * J, K, J);
                Db.noalias() += A.transpose() * G;
            }
        }
    });
}

Var softmax_last(const Var& x) {
    if (x->value.rank() < 1) throw ArgumentError("softmax_last: rank must be >= 1");
    const int S = x->value.dim(x->value.rank() - 1);
    const std::int64_t rows = x->value.size() / S;
    Tensor out = Tensor::zeros_like(x->value);
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* src = x->value.data() + r * S;
        float* dst = out.data() + r * S;
        float m = src[0];
        for (int i = 1; i < S; ++i) m = std::max(m, src[i]);
        double sum = 0.0;
        for (int i = 0; i < S; ++i) {
            dst[i] = std::exp(src[i] - m);
            sum += dst[i];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (int i = 0; i < S; ++i) dst[i] *= inv;
    }
    auto saved = std::make_shared<Tensor>(out);
    return make_op(std::move(out), {x}, [x, saved, S, rows](Node& n) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
            const float* y = saved->data() + r * S;
            const float* g = n.grad.data() + r * S;
            float* dx = x->grad.data() + r * S;
            double dot = 0.0;
            for (int i = 0; i < S; ++i) dot += static_cast<double>(g[i]) * y[i];
            for (int i = 0; i < S; ++i) dx[i] += (g[i] - static_cast<float>(dot)) * y[i];
        }
    });
}

Var mean_all(const Var& x) {
    const std::int64_t n = x->value.size();
    if (n == 0) throw ArgumentError("mean_all: empty tensor");
    double sum = 0.0;
    for (std::int64_t i = 0; i < n; ++i) sum += x->value[i];
    Tensor out(std::vector<int>{1});
    out[0] = static_cast<float>(sum / static_cast<double>(n));
    return make_op(std::move(out), {x}, [x, n](Node& node) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const float g = node.grad[0] / static_cast<float>(n);
        for (std::int64_t i = 0; i < n; ++i) x->grad[i] += g;
    });
}

Var mse_loss(const Var& pred, const Tensor& target) {
    if (!pred->value.same_shape(target)) throw ArgumentError("mse_loss: shape mismatch");
    const std::int64_t n = pred->value.size();
    double sum = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double diff = static_cast<double>(pred->value[i]) - target[i];
        sum += diff * diff;
    }
    Tensor out(std::vector<int>{1});
    out[0] = static_cast<float>(sum / static_cast<double>(n));
    auto t = std::make_shared<Tensor>(target);
    return make_op(std::move(out), {pred}, [pred, t, n](Node& node) {
        if (!pred->requires_grad) return;
        pred->ensure_grad();
        const float scale = 2.0f * node.grad[0] / static_cast<float>(n);
        for (std::int64_t i = 0; i < n; ++i) {
            pred->grad[i] += scale * (pred->value[i] - (*t)[i]);
        }
    });
}

}  // namespace salign::nn
