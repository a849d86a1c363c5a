// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "salign/core/errors.hpp"
#include "salign/core/rng.hpp"
#include "salign/evidential/nig.hpp"
#include "salign/evidential/task_loss.hpp"

using namespace salign;
using namespace salign::evidential;

namespace {

// Midpoint quadrature of the NIG density over a wide (mu, sigma2) box.
double nig_mass(double gamma, double omega, double alpha, double beta, double mu_lo, double mu_hi,
                double s2_lo, double s2_hi, int nmu = 400, int ns = 1200) {
    const double dmu = (mu_hi - mu_lo) / nmu;
    const double ds = (s2_hi - s2_lo) / ns;
    double mass = 0.0;
    for (int i = 0; i < nmu; ++i) {
        const double mu = mu_lo + (i + 0.5) * dmu;
        for (int j = 0; j < ns; ++j) {
            const double s2 = s2_lo + (j + 0.5) * ds;
            mass += std::exp(nig_log_density(mu, s2, gamma, omega, alpha, beta)) * dmu * ds;
        }
    }
    return mass;
}

NIGParams single(double g, double w, double a, double b) {
    NIGParams p = NIGParams::zeros(1, 1, 1);
    p.gamma[0] = static_cast<float>(g);
    p.omega[0] = static_cast<float>(w);
    p.alpha[0] = static_cast<float>(a);
    p.beta[0] = static_cast<float>(b);
    return p;
}

NIGParams random_params(Rng& rng, int c, int h, int w) {
    NIGParams p = NIGParams::zeros(c, h, w);
    for (std::int64_t i = 0; i < p.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        p.gamma[k] = static_cast<float>(rng.normal(0.0, 1.0));
        p.omega[k] = static_cast<float>(rng.uniform(1.05, 4.0));
        p.alpha[k] = static_cast<float>(rng.uniform(1.1, 4.0));
        p.beta[k] = static_cast<float>(rng.uniform(0.1, 3.0));
    }
    return p;
}

std::vector<float> random_target_away_from_gamma(Rng& rng, const NIGParams& p) {
    std::vector<float> y(static_cast<std::size_t>(p.size()));
    for (std::size_t i = 0; i < y.size(); ++i) {
        double v;
        do {
            v = rng.normal(0.0, 1.0);
        } while (std::abs(v - p.gamma[i]) < 1e-2);
        y[i] = static_cast<float>(v);
    }
    return y;
}

}  // namespace

TEST_CASE("NIG density integrates to one") {
    // E[mu] spread sqrt(beta/((alpha-1)*omega)) = 0.5, inverse-gamma tail thin
    const double mass = nig_mass(0.0, 2.0, 3.0, 1.0, -6.0, 6.0, 1e-4, 10.0);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("NIG density symmetric in mu about gamma") {
    for (double d : {0.1, 0.7, 2.3}) {
        CHECK(nig_log_density(1.0 + d, 0.8, 1.0, 2.0, 3.0, 1.5) ==
              doctest::Approx(nig_log_density(1.0 - d, 0.8, 1.0, 2.0, 3.0, 1.5)).epsilon(1e-12));
    }
}

TEST_CASE("larger beta shifts mass toward larger sigma2") {
    const double tail_b1 = nig_mass(0.0, 2.0, 3.0, 1.0, -8.0, 8.0, 1.0, 12.0);
    const double tail_b2 = nig_mass(0.0, 2.0, 3.0, 2.0, -8.0, 8.0, 1.0, 12.0);
    CHECK(tail_b2 > tail_b1);
}

TEST_CASE("NIG NLL frozen value") {
    // Exact evaluation: 0.5*ln(pi) - 2*ln(4) + 2.5*ln(4) - ln(Gamma(2.5))
    const double expected = 0.9808292530114462;
    const double loss = nig_nll_loss(single(0.0, 1.0, 2.0, 1.0), {0.0f});
    CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(loss - 0.981) < 1e-3);
}

TEST_CASE("NLL grows with residual and is minimal at y = gamma") {
    const NIGParams p = single(0.0, 2.0, 2.0, 1.0);
    double prev = nig_nll_loss(p, {0.0f});
    CHECK(std::isfinite(prev));
    for (float y : {0.5f, 1.0f, 2.0f, 4.0f}) {
        const double cur = nig_nll_loss(p, {y});
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("evidence regularizer closed forms") {
    CHECK(evidence_regularizer(single(0.3, 2.0, 3.0, 1.0), {0.3f}) == doctest::Approx(0.0));
    CHECK(evidence_regularizer(single(0.0, 2.0, 3.0, 1.0), {1.0f}) == doctest::Approx(7.0));
    // linear in (2*omega + alpha)
    CHECK(evidence_regularizer(single(0.0, 4.0, 6.0, 1.0), {1.0f}) == doctest::Approx(14.0));
}

TEST_CASE("evidential loss composes NLL and regularizer") {
    Rng rng(17);
    NIGParams p = random_params(rng, 2, 3, 3);
    auto y = random_target_away_from_gamma(rng, p);
    CHECK(evidential_loss(p, y, 0.0) == doctest::Approx(nig_nll_loss(p, y)).epsilon(1e-12));
    const double composed = nig_nll_loss(p, y) + 0.7 * evidence_regularizer(p, y);
    CHECK(evidential_loss(p, y, 0.7) == doctest::Approx(composed).epsilon(1e-12));
}

TEST_CASE("evidential loss gradients match central finite differences") {
    Rng rng(23);
    const double h = 1e-5;
    for (int trial = 0; trial < 25; ++trial) {
        NIGParams p = random_params(rng, 1, 3, 2);
        auto y = random_target_away_from_gamma(rng, p);
        const double lambda = trial % 3 == 0 ? 0.0 : (trial % 3 == 1 ? 0.01 : 1.0);
        NIGGrads grads = evidential_loss_gradients(p, y, lambda);
        for (std::int64_t i = 0; i < p.size(); ++i) {
            const auto k = static_cast<std::size_t>(i);
            auto check_one = [&](std::vector<float>& field, float analytic) {
                const float orig = field[k];
                const float plus = static_cast<float>(orig + h);
                const float minus = static_cast<float>(orig - h);
                field[k] = plus;
                const double fp = evidential_loss(p, y, lambda);
                field[k] = minus;
                const double fm = evidential_loss(p, y, lambda);
                field[k] = orig;
                // divide by the step the float storage actually realized
                const double numeric = (fp - fm) / (static_cast<double>(plus) - minus);
                const double a = static_cast<double>(analytic);
                const double rel =
                    std::abs(numeric - a) / std::max({std::abs(numeric), std::abs(a), 1e-8});
                CHECK(rel < 1e-4);
            };
            check_one(p.gamma, grads.gamma[k]);
            check_one(p.omega, grads.omega[k]);
            check_one(p.alpha, grads.alpha[k]);
            check_one(p.beta, grads.beta[k]);
        }
    }
}

TEST_CASE("uncertainty map closed form") {
    UncertaintyMap u = uncertainty_map(single(0.0, 2.0, 3.0, 4.0));
    CHECK(u.values[0] == doctest::Approx(1.0));

    UncertaintyMap tiny = uncertainty_map(single(0.0, 2.0, 3.0, 1e-6));
    CHECK(tiny.values[0] == doctest::Approx(0.0).epsilon(1e-5));

    UncertaintyMap doubled = uncertainty_map(single(0.0, 2.0, 3.0, 8.0));
    CHECK(doubled.values[0] == doctest::Approx(2.0 * u.values[0]));

    Rng rng(29);
    NIGParams p = random_params(rng, 2, 4, 4);
    UncertaintyMap m = uncertainty_map(p);
    for (std::int64_t i = 0; i < p.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        const double expect = p.beta[k] / (static_cast<double>(p.omega[k]) * (p.alpha[k] - 1.0));
        CHECK(m.values[k] == doctest::Approx(expect).epsilon(1e-6));
        CHECK(m.values[k] >= 0.0f);
    }

    CHECK_THROWS_AS(uncertainty_map(single(0.0, 2.0, 1.0, 1.0)), DomainError);
}

TEST_CASE("model uncertainty reductions") {
    UncertaintyMap u;
    u.channels = 2;
    u.height = 4;
    u.width = 4;
    u.values.assign(32, 0.5f);

    std::vector<LandmarkDetection> lms{{0, 1.0, 1.0, 1.0}, {1, 2.0, 3.0, 1.0}};
    CHECK(model_uncertainty_detection(u, lms) == doctest::Approx(0.5));

    u.values[(0 * 4 + 1) * 4 + 1] = 0.2f;
    u.values[(1 * 4 + 3) * 4 + 2] = 0.4f;
    CHECK(model_uncertainty_detection(u, lms) == doctest::Approx(0.3));

    CHECK(std::isinf(model_uncertainty_detection(u, {})));

    UncertaintyMap s;
    s.channels = 1;
    s.height = 2;
    s.width = 2;
    s.values = {0.1f, 0.3f, 0.9f, 0.9f};
    ImageGrid mask(2, 2, 0.0f);
    mask.at(0, 0) = 1.0f;
    mask.at(1, 0) = 1.0f;
    CHECK(model_uncertainty_segmentation(s, mask) == doctest::Approx(0.2));

    ImageGrid uniform_mask(2, 2, 1.0f);
    s.values = {0.1f, 0.1f, 0.1f, 0.1f};
    CHECK(model_uncertainty_segmentation(s, uniform_mask) == doctest::Approx(0.1));

    ImageGrid empty_mask(2, 2, 0.0f);
    CHECK(std::isinf(model_uncertainty_segmentation(s, empty_mask)));
}

TEST_CASE("detection task loss") {
    std::vector<float> a(64, 0.25f);
    CHECK(task_loss_detection(a, a) == doctest::Approx(0.0));

    std::vector<float> b(64, 0.75f);
    CHECK(task_loss_detection(a, b) == doctest::Approx(0.25));

    Rng rng(31);
    std::vector<float> p(100), q(100);
    for (std::size_t i = 0; i < 100; ++i) {
        p[i] = static_cast<float>(rng.normal());
        q[i] = static_cast<float>(rng.normal());
    }
    // independent accumulation order
    double expect = 0.0;
    for (std::size_t i = 100; i-- > 0;) {
        expect += (static_cast<double>(p[i]) - q[i]) * (static_cast<double>(p[i]) - q[i]);
    }
    expect /= 100.0;
    CHECK(task_loss_detection(p, q) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("segmentation task loss closed forms and monotonicity") {
    ImageGrid mask(8, 8, 0.0f);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 4; ++x) mask.at(x, y) = 1.0f;
    }

    ImageGrid perfect = mask;
    CHECK(task_loss_segmentation(perfect, mask) == doctest::Approx(0.0).epsilon(1e-4));

    ImageGrid half(8, 8, 0.5f);
    const double n = 64.0;
    const double expected_dice = 1.0 - (2.0 * 0.5 * 32.0 + 1.0) / (32.0 + 32.0 + 1.0);
    CHECK(task_loss_segmentation(half, mask) ==
          doctest::Approx(std::log(2.0) + expected_dice).epsilon(1e-6));
    (void)n;

    Rng rng(37);
    ImageGrid probs(8, 8);
    for (float& p : probs.pixels()) p = static_cast<float>(rng.uniform(0.05, 0.95));
    double prev = task_loss_segmentation(probs, mask);
    for (int step = 0; step < 5; ++step) {
        for (std::size_t i = 0; i < probs.pixels().size(); ++i) {
            const float y = mask.pixels()[i];
            probs.pixels()[i] += 0.15f * (y - probs.pixels()[i]);
        }
        const double cur = task_loss_segmentation(probs, mask);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("segmentation loss gradient matches finite differences") {
    Rng rng(41);
    ImageGrid probs(4, 4);
    ImageGrid mask(4, 4);
    for (float& p : probs.pixels()) p = static_cast<float>(rng.uniform(0.1, 0.9));
    for (float& m : mask.pixels()) m = rng.uniform() < 0.5 ? 0.0f : 1.0f;

    auto grad = task_loss_segmentation_grad(probs, mask);
    const double h = 1e-5;
    for (std::size_t i = 0; i < probs.pixels().size(); ++i) {
        const float orig = probs.pixels()[i];
        const float plus = static_cast<float>(orig + h);
        const float minus = static_cast<float>(orig - h);
        probs.pixels()[i] = plus;
        const double fp = task_loss_segmentation(probs, mask);
        probs.pixels()[i] = minus;
        const double fm = task_loss_segmentation(probs, mask);
        probs.pixels()[i] = orig;
        const double numeric = (fp - fm) / (static_cast<double>(plus) - minus);
        CHECK(std::abs(numeric - grad[i]) <
              1e-4 * std::max(1.0, std::abs(numeric)));
    }
}

TEST_CASE("domain validation") {
    CHECK_THROWS_AS(nig_log_density(0.0, -1.0, 0.0, 2.0, 3.0, 1.0), DomainError);
    CHECK_THROWS_AS(nig_log_density(0.0, 1.0, 0.0, -2.0, 3.0, 1.0), DomainError);
    NIGParams bad = single(0.0, 0.0, 2.0, 1.0);
    CHECK_THROWS_AS(nig_nll_loss(bad, {0.0f}), DomainError);
    NIGParams p = single(0.0, 2.0, 2.0, 1.0);
    CHECK_THROWS_AS(nig_nll_loss(p, {std::numeric_limits<float>::quiet_NaN()}), ArgumentError);
    CHECK_THROWS_AS(nig_nll_loss(p, {0.0f, 1.0f}), ArgumentError);
}
