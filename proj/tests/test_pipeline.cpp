// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "salign/core/errors.hpp"
#include "salign/pipeline/pipeline.hpp"

using namespace salign;
using namespace salign::pipeline;

namespace {

ExperimentConfig tiny_config(const std::filesystem::path& out) {
    ExperimentConfig cfg;
    cfg.task = synth::Task::detection;
    cfg.seed = 3;
    cfg.out_root = out;
    cfg.image_size = 16;
    cfg.num_landmarks = 2;
    cfg.source_train = 8;
    cfg.source_val = 4;
    cfg.target_eval = 3;

    cfg.base_epochs = 1;
    cfg.control_epochs = 1;
    cfg.diffusion_hyper = diffusion::DiffusionHyper::desk(16, 1);
    cfg.diffusion_hyper.net.c0 = 8;
    cfg.diffusion_hyper.net.c1 = 8;
    cfg.diffusion_hyper.net.c2 = 8;
    cfg.diffusion_hyper.net.temb_dim = 16;
    cfg.diffusion_hyper.net.cond_channels = 8;

    cfg.task_hyper = evidential::TaskHyper::desk(synth::Task::detection, 16, 1);
    cfg.task_hyper.net.channels = 8;
    cfg.task_hyper.net.hourglass_depth = 2;
    cfg.task_hyper.net.num_landmarks = 2;

    cfg.align.m = 2;
    cfg.align.n = 2;
    cfg.align.t_pre = 50.0;
    cfg.align.t_model = 0.0;  // calibrate
    cfg.align.ddim_steps = 2;
    cfg.align.seed = cfg.seed;
    cfg.producer.m = 2;
    cfg.dump_intermediates = true;
    return cfg;
}

}  // namespace

TEST_CASE("pipeline end to end smoke run") {
    const auto out = std::filesystem::temp_directory_path() / "salign_pipeline_smoke";
    std::filesystem::remove_all(out);
    ExperimentConfig cfg = tiny_config(out);

    nlohmann::json comparison = run_pipeline(cfg);

    CHECK(std::filesystem::exists(out / "manifest.json"));
    CHECK(std::filesystem::exists(out / "checkpoints" / "diffusion_base.ckpt"));
    CHECK(std::filesystem::exists(out / "checkpoints" / "diffusion_control.ckpt"));
    CHECK(std::filesystem::exists(out / "checkpoints" / "task.ckpt"));
    CHECK(std::filesystem::exists(out / "reports" / "calibration.json"));
    CHECK(std::filesystem::exists(out / "reports" / "source_only.json"));
    CHECK(std::filesystem::exists(out / "reports" / "comparison.json"));
    CHECK(std::filesystem::exists(out / "reports" / "comparison.csv"));
    CHECK(std::filesystem::exists(out / "plots" / "metrics.svg"));
    int alignment_files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(out / "alignments")) {
        if (entry.path().extension() == ".json") ++alignment_files;
    }
    CHECK(alignment_files == 3);
    CHECK(comparison.contains("source_only"));
    CHECK(comparison.contains("aligned"));
    CHECK(comparison.at("aligned").at("n_images").get<int>() == 3);

    // reruns with the same config and seed reproduce the metrics exactly
    const auto out2 = std::filesystem::temp_directory_path() / "salign_pipeline_smoke2";
    std::filesystem::remove_all(out2);
    ExperimentConfig cfg2 = tiny_config(out2);
    nlohmann::json comparison2 = run_pipeline(cfg2);
    CHECK(comparison.at("aligned") == comparison2.at("aligned"));
    CHECK(comparison.at("source_only") == comparison2.at("source_only"));

    // resume skips retraining and reproduces the same comparison
    nlohmann::json resumed = run_pipeline(cfg, /*resume=*/true);
    CHECK(resumed.at("aligned") == comparison.at("aligned"));

    // report regeneration from stored artifacts agrees
    nlohmann::json regen = regenerate_reports(cfg);
    CHECK(regen.at("aligned") == comparison.at("aligned"));
}

TEST_CASE("pipeline validates configuration before any work") {
    ExperimentConfig cfg = tiny_config("/tmp/salign_never_created");
    cfg.source_train = 0;
    CHECK_THROWS_AS(run_pipeline(cfg), StageError);
    CHECK_FALSE(std::filesystem::exists("/tmp/salign_never_created/checkpoints"));

    try {
        run_pipeline(cfg);
    } catch (const StageError& e) {
        CHECK(e.stage() == "config");
    }
}

TEST_CASE("config json round trip and strictness") {
    const auto out = std::filesystem::temp_directory_path() / "salign_cfg";
    ExperimentConfig cfg = tiny_config(out);
    nlohmann::json j = cfg.to_json();
    ExperimentConfig back = ExperimentConfig::from_json(j);
    CHECK(back.seed == cfg.seed);
    CHECK(back.image_size == cfg.image_size);
    CHECK(back.align.m == cfg.align.m);
    CHECK(back.task_hyper.net.channels == cfg.task_hyper.net.channels);

    nlohmann::json bad = j;
    bad["tresholds"] = 1;  // misspelled key must be rejected
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);

    nlohmann::json bad2 = j;
    bad2["alignment"]["t_modle"] = 0.5;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad2), ConfigError);

    nlohmann::json noseed = j;
    noseed.erase("seed");
    CHECK_THROWS_AS(ExperimentConfig::from_json(noseed), ConfigError);
}

TEST_CASE("benchmark config pins the spec-level experiment") {
    ExperimentConfig cfg = ExperimentConfig::detection_benchmark(1, "/tmp/bench_cfg");
    CHECK(cfg.source_train == 200);
    CHECK(cfg.target_eval == 50);
    CHECK(cfg.align.m == 8);
    CHECK(cfg.align.n == 4);
    CHECK(cfg.task == synth::Task::detection);
    CHECK(cfg.target_style.gamma == doctest::Approx(1.6));
    CHECK(cfg.target_style.contrast_scale == doctest::Approx(0.7));
    CHECK(cfg.target_style.blur_sigma == doctest::Approx(1.0));
    CHECK(cfg.target_style.speckle_strength > 0.12);  // heavier than source speckle
}
