// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/pipeline/config.hpp"

#include "salign/core/errors.hpp"
#include "salign/core/json_util.hpp"

namespace salign::pipeline {

void ExperimentConfig::validate() const {
    if (out_root.empty()) throw ConfigError("config: out_root is required");
    if (source_train < 1 || source_val < 1 || target_eval < 1) {
        throw ConfigError("config: dataset sizes must be >= 1");
    }
    if (base_epochs < 1 || control_epochs < 1) {
        throw ConfigError("config: diffusion epochs must be >= 1");
    }
    if (!(calibration_quantile > 0.0) || calibration_quantile > 1.0) {
        throw ConfigError("config: calibration_quantile must lie in (0, 1]");
    }
    target_style.validate();
    producer.validate();
    if (align.m < 1 || align.n < 1 || align.ddim_steps < 1 || !(align.t_pre > 0.0)) {
        throw ConfigError("config: alignment requires m, n, ddim_steps >= 1 and t_pre > 0");
    }
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json style = {{"gamma", target_style.gamma},
                            {"contrast_scale", target_style.contrast_scale},
                            {"blur_sigma", target_style.blur_sigma},
                            {"speckle_strength", target_style.speckle_strength},
                            {"intensity_offset", target_style.intensity_offset}};
    return {{"task", synth::to_string(task)},
            {"seed", seed},
            {"out_root", out_root.string()},
            {"data",
             {{"image_size", image_size},
              {"num_landmarks", num_landmarks},
              {"source_train", source_train},
              {"source_val", source_val},
              {"target_eval", target_eval},
              {"geometry_jitter", geometry_jitter},
              {"target_style", style}}},
            {"diffusion",
             {{"base_epochs", base_epochs},
              {"control_epochs", control_epochs},
              {"lr", diffusion_hyper.lr},
              {"batch_size", diffusion_hyper.batch_size},
              {"timesteps", diffusion_hyper.timesteps},
              {"channels",
               {diffusion_hyper.net.c0, diffusion_hyper.net.c1, diffusion_hyper.net.c2}},
              {"temb_dim", diffusion_hyper.net.temb_dim},
              {"cond_channels", diffusion_hyper.net.cond_channels}}},
            {"task_model",
             {{"epochs", task_hyper.epochs},
              {"lr", task_hyper.lr},
              {"batch_size", task_hyper.batch_size},
              {"lambda_reg", task_hyper.lambda_reg},
              {"uncertainty_weight", task_hyper.uncertainty_weight},
              {"heatmap_sigma", task_hyper.heatmap_sigma},
              {"peak_threshold", task_hyper.peak_threshold},
              {"channels", task_hyper.net.channels},
              {"hourglass_depth", task_hyper.net.hourglass_depth}}},
            {"alignment",
             {{"m", align.m},
              {"n", align.n},
              {"t_model", align.t_model},
              {"t_pre", align.t_pre},
              {"ddim_steps", align.ddim_steps},
              {"calibration_quantile", calibration_quantile}}},
            {"producer",
             {{"kind", conditioning::to_string(producer.kind)},
              {"sweep_min", producer.sweep_min},
              {"sweep_max", producer.sweep_max}}},
            {"dump_intermediates", dump_intermediates}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"task", "seed", "out_root", "data", "diffusion", "task_model",
                         "alignment", "producer", "dump_intermediates"},
                        "config");
    ExperimentConfig cfg;
    cfg.task = synth::task_from_string(j.at("task").get<std::string>());
    if (!j.contains("seed")) throw ConfigError("config: seed is mandatory");
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.out_root = j.at("out_root").get<std::string>();
    cfg.dump_intermediates = j.value("dump_intermediates", true);

    if (j.contains("data")) {
        const auto& d = j.at("data");
        reject_unknown_keys(d,
                            {"image_size", "num_landmarks", "source_train", "source_val",
                             "target_eval", "geometry_jitter", "target_style"},
                            "config.data");
        cfg.image_size = d.value("image_size", cfg.image_size);
        cfg.num_landmarks = d.value("num_landmarks", cfg.num_landmarks);
        cfg.source_train = d.value("source_train", cfg.source_train);
        cfg.source_val = d.value("source_val", cfg.source_val);
        cfg.target_eval = d.value("target_eval", cfg.target_eval);
        cfg.geometry_jitter = d.value("geometry_jitter", cfg.geometry_jitter);
        if (d.contains("target_style")) {
            const auto& s = d.at("target_style");
            reject_unknown_keys(s,
                                {"gamma", "contrast_scale", "blur_sigma", "speckle_strength",
                                 "intensity_offset"},
                                "config.data.target_style");
            cfg.target_style.gamma = s.value("gamma", cfg.target_style.gamma);
            cfg.target_style.contrast_scale =
                s.value("contrast_scale", cfg.target_style.contrast_scale);
            cfg.target_style.blur_sigma = s.value("blur_sigma", cfg.target_style.blur_sigma);
            cfg.target_style.speckle_strength =
                s.value("speckle_strength", cfg.target_style.speckle_strength);
            cfg.target_style.intensity_offset =
                s.value("intensity_offset", cfg.target_style.intensity_offset);
        }
    }

    cfg.diffusion_hyper = diffusion::DiffusionHyper::desk(cfg.image_size);
    if (j.contains("diffusion")) {
        const auto& d = j.at("diffusion");
        reject_unknown_keys(d,
                            {"base_epochs", "control_epochs", "lr", "batch_size", "timesteps",
                             "channels", "temb_dim", "cond_channels"},
                            "config.diffusion");
        cfg.base_epochs = d.value("base_epochs", cfg.base_epochs);
        cfg.control_epochs = d.value("control_epochs", cfg.control_epochs);
        cfg.diffusion_hyper.lr = d.value("lr", cfg.diffusion_hyper.lr);
        cfg.diffusion_hyper.batch_size = d.value("batch_size", cfg.diffusion_hyper.batch_size);
        cfg.diffusion_hyper.timesteps = d.value("timesteps", cfg.diffusion_hyper.timesteps);
        if (d.contains("channels")) {
            const auto ch = d.at("channels").get<std::vector<int>>();
            if (ch.size() != 3) throw ConfigError("config.diffusion.channels: need 3 values");
            cfg.diffusion_hyper.net.c0 = ch[0];
            cfg.diffusion_hyper.net.c1 = ch[1];
            cfg.diffusion_hyper.net.c2 = ch[2];
        }
        cfg.diffusion_hyper.net.temb_dim = d.value("temb_dim", cfg.diffusion_hyper.net.temb_dim);
        cfg.diffusion_hyper.net.cond_channels =
            d.value("cond_channels", cfg.diffusion_hyper.net.cond_channels);
    }
    cfg.diffusion_hyper.net.image_size = cfg.image_size;

    cfg.task_hyper = evidential::TaskHyper::desk(cfg.task, cfg.image_size);
    if (j.contains("task_model")) {
        const auto& t = j.at("task_model");
        reject_unknown_keys(t,
                            {"epochs", "lr", "batch_size", "lambda_reg", "uncertainty_weight",
                             "heatmap_sigma", "peak_threshold", "channels", "hourglass_depth"},
                            "config.task_model");
        cfg.task_hyper.epochs = t.value("epochs", cfg.task_hyper.epochs);
        cfg.task_hyper.lr = t.value("lr", cfg.task_hyper.lr);
        cfg.task_hyper.batch_size = t.value("batch_size", cfg.task_hyper.batch_size);
        cfg.task_hyper.lambda_reg = t.value("lambda_reg", cfg.task_hyper.lambda_reg);
        cfg.task_hyper.uncertainty_weight =
            t.value("uncertainty_weight", cfg.task_hyper.uncertainty_weight);
        cfg.task_hyper.heatmap_sigma = t.value("heatmap_sigma", cfg.task_hyper.heatmap_sigma);
        cfg.task_hyper.peak_threshold = t.value("peak_threshold", cfg.task_hyper.peak_threshold);
        cfg.task_hyper.net.channels = t.value("channels", cfg.task_hyper.net.channels);
        cfg.task_hyper.net.hourglass_depth =
            t.value("hourglass_depth", cfg.task_hyper.net.hourglass_depth);
    }
    cfg.task_hyper.net.task = cfg.task;
    cfg.task_hyper.net.image_size = cfg.image_size;
    cfg.task_hyper.net.num_landmarks = cfg.num_landmarks;

    cfg.align.t_pre = cfg.task == synth::Task::detection ? 5.0 : 0.3;
    if (j.contains("alignment")) {
        const auto& a = j.at("alignment");
        reject_unknown_keys(a, {"m", "n", "t_model", "t_pre", "ddim_steps", "calibration_quantile"},
                            "config.alignment");
        cfg.align.m = a.value("m", cfg.align.m);
        cfg.align.n = a.value("n", cfg.align.n);
        cfg.align.t_model = a.value("t_model", 0.0);  // 0 = calibrate from source validation
        cfg.align.t_pre = a.value("t_pre", cfg.align.t_pre);
        cfg.align.ddim_steps = a.value("ddim_steps", cfg.diffusion_hyper.ddim_steps);
        cfg.calibration_quantile = a.value("calibration_quantile", cfg.calibration_quantile);
    } else {
        cfg.align.ddim_steps = cfg.diffusion_hyper.ddim_steps;
        cfg.align.t_model = 0.0;
    }
    cfg.align.seed = cfg.seed;

    if (j.contains("producer")) {
        const auto& p = j.at("producer");
        reject_unknown_keys(p, {"kind", "sweep_min", "sweep_max"}, "config.producer");
        if (p.contains("kind")) {
            cfg.producer.kind = conditioning::producer_kind_from_string(p.at("kind"));
        }
        if (cfg.producer.kind == conditioning::ProducerKind::noise_perturb) {
            cfg.producer = conditioning::ProducerConfig::noise_defaults();
        }
        cfg.producer.sweep_min = p.value("sweep_min", cfg.producer.sweep_min);
        cfg.producer.sweep_max = p.value("sweep_max", cfg.producer.sweep_max);
    }
    cfg.producer.m = cfg.align.m;

    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    return from_json(load_json_file(path));
}

ExperimentConfig ExperimentConfig::detection_benchmark(std::uint64_t seed,
                                                       const std::filesystem::path& out_root) {
    ExperimentConfig cfg;
    cfg.task = synth::Task::detection;
    cfg.seed = seed;
    cfg.out_root = out_root;
    cfg.image_size = 32;
    cfg.num_landmarks = 4;
    cfg.source_train = 200;
    cfg.source_val = 50;
    cfg.target_eval = 50;
    cfg.target_style = synth::StyleParams::target_default();

    cfg.base_epochs = 90;
    cfg.control_epochs = 90;
    cfg.diffusion_hyper = diffusion::DiffusionHyper::desk(32);
    cfg.diffusion_hyper.ddim_steps = 10;

    cfg.task_hyper = evidential::TaskHyper::desk(synth::Task::detection, 32, 35);
    cfg.task_hyper.net.num_landmarks = 4;

    cfg.align.m = 8;
    cfg.align.n = 4;
    cfg.align.t_pre = 5.0;
    cfg.align.ddim_steps = 10;
    cfg.align.t_model = 0.0;  // calibrated
    cfg.align.seed = seed;
    cfg.calibration_quantile = 0.95;

    cfg.producer = conditioning::ProducerConfig::threshold_defaults();
    cfg.producer.m = cfg.align.m;
    cfg.validate();
    return cfg;
}

}  // namespace salign::pipeline
