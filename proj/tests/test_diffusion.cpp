// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "salign/core/errors.hpp"
#include "salign/core/rng.hpp"
#include "salign/diffusion/diffusion.hpp"
#include "salign/synth/synth.hpp"

using namespace salign;
using namespace salign::diffusion;

namespace {

ImageGrid random_image(Rng& rng, int size) {
    ImageGrid img(size, size);
    for (float& p : img.pixels()) p = static_cast<float>(rng.uniform());
    return img;
}

DiffusionHyper tiny_hyper(int size, int epochs) {
    DiffusionHyper h = DiffusionHyper::desk(size, epochs);
    h.net.c0 = 8;
    h.net.c1 = 8;
    h.net.c2 = 8;
    h.net.temb_dim = 16;
    h.net.cond_channels = 8;
    h.batch_size = 8;
    h.lr = 1e-3;
    return h;
}

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "salign_diffusion_test";
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("linear schedule invariants") {
    auto s = DiffusionSchedule::linear(1000);
    CHECK(s.alpha_bars[0] == doctest::Approx(1.0 - 1e-4));
    for (int t = 1; t < 1000; ++t) {
        CHECK(s.alpha_bars[static_cast<std::size_t>(t)] <
              s.alpha_bars[static_cast<std::size_t>(t - 1)]);
        CHECK(s.betas[static_cast<std::size_t>(t)] > 0.0);
        CHECK(s.betas[static_cast<std::size_t>(t)] < 1.0);
    }
    CHECK(s.alpha_bars.back() < 1e-2);

    // signal-to-noise ratio strictly decreasing
    double prev_snr = std::numeric_limits<double>::infinity();
    for (int t = 0; t < 1000; t += 111) {
        const double ab = s.alpha_bars[static_cast<std::size_t>(t)];
        const double snr = ab / (1.0 - ab);
        CHECK(snr < prev_snr);
        prev_snr = snr;
    }

    CHECK_THROWS_AS(DiffusionSchedule::linear(0), ConfigError);
}

TEST_CASE("forward_noise closed forms") {
    auto schedule = DiffusionSchedule::linear(1000);
    Rng rng(5);
    ImageGrid x0 = random_image(rng, 16);
    ImageGrid noise(16, 16);
    for (float& p : noise.pixels()) p = static_cast<float>(rng.normal());

    // near-zero noise limit
    ImageGrid early = forward_noise(x0, 0, noise, schedule);
    CHECK(ImageGrid::max_abs_diff(early, x0) < 0.15f);

    // full-noise limit
    ImageGrid late = forward_noise(x0, 999, noise, schedule);
    CHECK(ImageGrid::max_abs_diff(late, noise) < 0.3f);

    // zero image -> exactly sqrt(1-ab)*noise
    ImageGrid zeros(16, 16, 0.0f);
    const int t = 345;
    ImageGrid out = forward_noise(zeros, t, noise, schedule);
    const float sigma =
        static_cast<float>(std::sqrt(1.0 - schedule.alpha_bars[static_cast<std::size_t>(t)]));
    for (std::size_t i = 0; i < out.pixels().size(); ++i) {
        CHECK(out.pixels()[i] == sigma * noise.pixels()[i]);
    }

    CHECK_THROWS_AS(forward_noise(x0, 1000, noise, schedule), ArgumentError);
    CHECK_THROWS_AS(forward_noise(x0, -1, noise, schedule), ArgumentError);
}

TEST_CASE("zero-initialized control branch reproduces base sampling") {
    DiffusionHyper h = DiffusionHyper::desk(32, 1);
    DiffusionCheckpoint base;
    base.model = std::make_shared<DiffusionModel>(h.net, Stage::base, 77);
    base.schedule = DiffusionSchedule::linear(1000);

    DiffusionCheckpoint controlled;
    controlled.model = std::make_shared<DiffusionModel>(DiffusionModel::make_controlled(*base.model));
    controlled.schedule = base.schedule;

    Rng rng(123);
    for (int trial = 0; trial < 5; ++trial) {
        ImageGrid condition = random_image(rng, 32);
        const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(trial);
        ImageGrid from_base = ddim_sample(base, std::nullopt, 10, seed);
        ImageGrid from_ctrl = ddim_sample(controlled, condition, 10, seed);
        CHECK(ImageGrid::max_abs_diff(from_base, from_ctrl) == 0.0f);
    }
}

TEST_CASE("ddim sampling is deterministic per seed and validates arguments") {
    DiffusionHyper h = tiny_hyper(16, 1);
    DiffusionCheckpoint ckpt;
    ckpt.model = std::make_shared<DiffusionModel>(h.net, Stage::base, 3);
    ckpt.schedule = DiffusionSchedule::linear(100);

    ImageGrid a = ddim_sample(ckpt, std::nullopt, 5, 42);
    ImageGrid b = ddim_sample(ckpt, std::nullopt, 5, 42);
    CHECK(a == b);
    CHECK(a.in_unit_range());
    ImageGrid c = ddim_sample(ckpt, std::nullopt, 5, 43);
    CHECK(ImageGrid::max_abs_diff(a, c) > 0.0f);

    CHECK_THROWS_AS(ddim_sample(ckpt, ImageGrid(16, 16), 5, 1), ArgumentError);
    CHECK_THROWS_AS(ddim_sample(ckpt, std::nullopt, 0, 1), ArgumentError);
    CHECK_THROWS_AS(ddim_sample(ckpt, std::nullopt, 101, 1), ArgumentError);

    DiffusionCheckpoint ctrl;
    ctrl.model = std::make_shared<DiffusionModel>(DiffusionModel::make_controlled(*ckpt.model));
    ctrl.schedule = ckpt.schedule;
    CHECK_THROWS_AS(ddim_sample(ctrl, std::nullopt, 5, 1), ArgumentError);
}

TEST_CASE("base training reduces the loss and is reproducible") {
    Rng rng(9);
    std::vector<ImageGrid> images;
    for (int i = 0; i < 32; ++i) images.push_back(random_image(rng, 16));

    DiffusionHyper h = tiny_hyper(16, 5);
    DiffusionCheckpoint ckpt = train_base(images, h, 11);
    auto curve = ckpt.training_meta.at("loss_curve").get<std::vector<double>>();
    REQUIRE(curve.size() == 5);
    CHECK(curve.back() < curve.front());

    DiffusionCheckpoint again = train_base(images, h, 11);
    auto curve2 = again.training_meta.at("loss_curve").get<std::vector<double>>();
    for (std::size_t i = 0; i < curve.size(); ++i) CHECK(curve[i] == curve2[i]);
    CHECK(ckpt.digest() == again.digest());

    CHECK_THROWS_AS(train_base({}, h, 0), ConfigError);
    std::vector<ImageGrid> wrong{random_image(rng, 32)};
    CHECK_THROWS_AS(train_base(wrong, h, 0), ConfigError);
}

TEST_CASE("control training leaves base weights bit-identical and learns") {
    Rng rng(21);
    std::vector<ImageGrid> images;
    for (int i = 0; i < 24; ++i) images.push_back(random_image(rng, 16));
    DiffusionHyper h = tiny_hyper(16, 3);
    DiffusionCheckpoint base = train_base(images, h, 31);

    std::vector<std::pair<ImageGrid, ImageGrid>> pairs;
    for (int i = 0; i < 24; ++i) {
        ImageGrid cond(16, 16, 0.0f);
        for (int y = 4; y < 12; ++y)
            for (int x = 4; x < 12; ++x) cond.at(x, y) = 1.0f;
        pairs.emplace_back(images[static_cast<std::size_t>(i)], cond);
    }

    const std::uint64_t base_digest_before = base.base_digest();
    DiffusionCheckpoint ctrl = train_control(pairs, base, h, 32);
    CHECK(ctrl.base_digest() == base_digest_before);
    CHECK(base.base_digest() == base_digest_before);
    CHECK(ctrl.stage() == Stage::controlled);

    auto curve = ctrl.training_meta.at("loss_curve").get<std::vector<double>>();
    REQUIRE(curve.size() == 3);
    CHECK(curve.back() < curve.front());

    CHECK_THROWS_AS(train_control(pairs, ctrl, h, 0), ArgumentError);
    std::vector<std::pair<ImageGrid, ImageGrid>> bad{{images[0], ImageGrid(8, 8)}};
    CHECK_THROWS_AS(train_control(bad, base, h, 0), ArgumentError);
}

TEST_CASE("checkpoint round trip is lossless") {
    auto dir = temp_dir();
    Rng rng(55);
    std::vector<ImageGrid> images;
    for (int i = 0; i < 8; ++i) images.push_back(random_image(rng, 16));
    DiffusionHyper h = tiny_hyper(16, 1);
    DiffusionCheckpoint ckpt = train_base(images, h, 2);

    const auto path1 = dir / "base.ckpt";
    const auto path2 = dir / "base2.ckpt";
    ckpt.save(path1);
    DiffusionCheckpoint loaded = DiffusionCheckpoint::load(path1);
    loaded.save(path2);

    std::ifstream f1(path1, std::ios::binary), f2(path2, std::ios::binary);
    std::string bytes1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(bytes1 == bytes2);
    CHECK(loaded.digest() == ckpt.digest());

    ImageGrid a = ddim_sample(ckpt, std::nullopt, 4, 7);
    ImageGrid b = ddim_sample(loaded, std::nullopt, 4, 7);
    CHECK(a == b);

    // version tamper is refused
    std::string tampered = bytes1;
    tampered[8] = static_cast<char>(0x7f);
    const auto bad_path = dir / "bad.ckpt";
    std::ofstream(bad_path, std::ios::binary).write(tampered.data(),
                                                    static_cast<std::streamsize>(tampered.size()));
    CHECK_THROWS_AS(DiffusionCheckpoint::load(bad_path), FormatError);
}

TEST_CASE("full-scale hyperparameter defaults") {
    DiffusionHyper h;
    CHECK(h.epochs == 400);
    CHECK(h.lr == doctest::Approx(1e-4));
    CHECK(h.batch_size == 16);
    CHECK(h.net.image_size == 256);
    CHECK(h.ddim_steps == 50);
    CHECK(h.timesteps == 1000);
    CHECK(h.to_json().at("optimizer") == "adamw");
}
