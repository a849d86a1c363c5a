// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "salign/conditioning/conditioning.hpp"
#include "salign/core/errors.hpp"
#include "salign/core/rng.hpp"
#include "salign/synth/synth.hpp"

using namespace salign;
using namespace salign::conditioning;

namespace {

// 4-connected component count for binary grids.
int count_components(const ImageGrid& mask) {
    std::vector<int> label(static_cast<std::size_t>(mask.size()), 0);
    int components = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.at(x, y) < 0.5f || label[static_cast<std::size_t>(y) * mask.width() + x]) continue;
            ++components;
            std::vector<std::pair<int, int>> stack{{x, y}};
            label[static_cast<std::size_t>(y) * mask.width() + x] = components;
            while (!stack.empty()) {
                auto [cx, cy] = stack.back();
                stack.pop_back();
                const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
                for (int d = 0; d < 4; ++d) {
                    const int nx = cx + dx[d], ny = cy + dy[d];
                    if (!mask.contains(nx, ny) || mask.at(nx, ny) < 0.5f) continue;
                    auto idx = static_cast<std::size_t>(ny) * mask.width() + nx;
                    if (!label[idx]) {
                        label[idx] = components;
                        stack.emplace_back(nx, ny);
                    }
                }
            }
        }
    }
    return components;
}

}  // namespace

TEST_CASE("threshold mask basics and oracle") {
    ImageGrid low(8, 8, 0.2f);
    auto all_zero = threshold_mask_condition(low, 0.5);
    CHECK(all_zero.grid.max_value() == doctest::Approx(0.0f));

    auto all_one = threshold_mask_condition(low, 0.0);
    CHECK(all_one.grid.min_value() == doctest::Approx(1.0f));

    CHECK_THROWS_AS(threshold_mask_condition(low, 1.5), ArgumentError);

    synth::SceneSpec spec;
    spec.image_size = 32;
    auto sample = synth::generate_dataset(spec, synth::StyleParams::identity(), 1, 9)[0];
    auto cond = threshold_mask_condition(sample.image, 0.5);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            const float expect = sample.image.at(x, y) >= 0.5f ? 1.0f : 0.0f;
            CHECK(cond.grid.at(x, y) == expect);
        }
    }
    CHECK(cond.grid.max_value() == doctest::Approx(1.0f));
}

TEST_CASE("noise perturbation determinism and statistics") {
    ImageGrid img(64, 64, 0.5f);
    auto ident = noise_perturb_condition(img, 0.0, 3);
    CHECK(ident.grid == img);

    auto a = noise_perturb_condition(img, 0.1, 3);
    auto b = noise_perturb_condition(img, 0.1, 3);
    CHECK(a.grid == b.grid);

    auto c = noise_perturb_condition(img, 0.1, 4);
    CHECK(ImageGrid::max_abs_diff(a.grid, c.grid) > 0.0f);

    // sample variance of (out - in) ~ sigma^2 within 10% on 64x64
    double sum = 0.0, sq = 0.0;
    const auto n = static_cast<double>(img.size());
    for (std::int64_t i = 0; i < img.size(); ++i) {
        const double d = a.grid.pixels()[static_cast<std::size_t>(i)] -
                         img.pixels()[static_cast<std::size_t>(i)];
        sum += d;
        sq += d * d;
    }
    const double var = sq / n - (sum / n) * (sum / n);
    CHECK(var == doctest::Approx(0.01).epsilon(0.10));
}

TEST_CASE("optimal conditions from annotations") {
    synth::SceneSpec seg;
    seg.image_size = 32;
    seg.task = synth::Task::segmentation;
    auto ssample = synth::generate_dataset(seg, synth::StyleParams::identity(), 1, 5)[0];
    auto scond = optimal_condition_from_annotation(ssample);
    CHECK(scond.grid == ssample.mask);

    synth::SceneSpec det;
    det.image_size = 32;
    det.num_landmarks = 4;
    auto dsample = synth::generate_dataset(det, synth::StyleParams::identity(), 1, 5)[0];
    auto dcond = optimal_condition_from_annotation(dsample);
    CHECK(count_components(dcond.grid) == 4);

    synth::AnnotatedSample empty_truth = dsample;
    empty_truth.landmarks.clear();
    auto econd = optimal_condition_from_annotation(empty_truth);
    CHECK(econd.grid.max_value() == doctest::Approx(0.0f));

    synth::AnnotatedSample missing;
    missing.task = synth::Task::segmentation;
    missing.image = dsample.image;
    CHECK_THROWS_AS(optimal_condition_from_annotation(missing), ArgumentError);
}

TEST_CASE("condition sweep spacing and monotonicity") {
    ProducerConfig cfg;
    cfg.m = 8;
    cfg.sweep_min = 0.3;
    cfg.sweep_max = 0.7;
    auto values = sweep_values(cfg);
    REQUIRE(values.size() == 8);
    for (int k = 0; k < 8; ++k) {
        CHECK(values[static_cast<std::size_t>(k)] ==
              doctest::Approx(0.3 + 0.4 * k / 7.0).epsilon(1e-12));
    }

    ProducerConfig single = cfg;
    single.m = 1;
    auto one = sweep_values(single);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == doctest::Approx(0.3));

    synth::SceneSpec spec;
    spec.image_size = 32;
    auto sample = synth::generate_dataset(spec, synth::StyleParams::identity(), 1, 13)[0];
    auto conditions = condition_sweep(sample.image, cfg, 21);
    REQUIRE(conditions.size() == 8);
    for (std::size_t k = 1; k < conditions.size(); ++k) {
        // rising threshold never adds foreground
        for (std::int64_t i = 0; i < sample.image.size(); ++i) {
            const auto idx = static_cast<std::size_t>(i);
            if (conditions[k].grid.pixels()[idx] >= 0.5f) {
                CHECK(conditions[k - 1].grid.pixels()[idx] >= 0.5f);
            }
        }
    }

    // noise sweeps are reproducible per seed
    ProducerConfig noise = ProducerConfig::noise_defaults();
    auto n1 = condition_sweep(sample.image, noise, 5);
    auto n2 = condition_sweep(sample.image, noise, 5);
    REQUIRE(n1.size() == n2.size());
    for (std::size_t k = 0; k < n1.size(); ++k) CHECK(n1[k].grid == n2[k].grid);

    ProducerConfig bad;
    bad.m = 0;
    CHECK_THROWS_AS(sweep_values(bad), ConfigError);
    ProducerConfig swapped;
    swapped.sweep_min = 0.7;
    swapped.sweep_max = 0.3;
    CHECK_THROWS_AS(sweep_values(swapped), ConfigError);
}
