// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0
//
// salign: training-free style alignment for cross-device image analysis.
// Subcommands cover dataset synthesis, model training, threshold
// calibration, per-image alignment, evaluation, downstream measurements and
// the full pipeline.

#include <CLI11.hpp>

#include <cstdlib>
#include <iomanip>
#include <iostream>

#include "salign/alignment/alignment.hpp"
#include "salign/core/errors.hpp"
#include "salign/core/json_util.hpp"
#include "salign/core/png_io.hpp"
#include "salign/core/rng.hpp"
#include "salign/measure/measure.hpp"
#include "salign/pipeline/pipeline.hpp"

using namespace salign;

namespace {

std::filesystem::path apply_out_root_override(const std::filesystem::path& path) {
    if (const char* env = std::getenv("SALIGN_OUT_ROOT")) {
        return std::filesystem::path(env) / path.filename();
    }
    return path;
}

void print_comparison(const nlohmann::json& comparison) {
    const std::string task = comparison.at("task").get<std::string>();
    std::cout << "\n== target-domain evaluation (" << task << ") ==\n";
    std::cout << std::fixed << std::setprecision(2);
    if (task == "detection") {
        std::cout << std::setw(14) << "method" << std::setw(12) << "accuracy%" << std::setw(10)
                  << "recall%" << std::setw(8) << "F1%" << std::setw(10) << "ME(px)" << "\n";
        for (const char* method : {"source_only", "aligned"}) {
            const auto& r = comparison.at(method);
            std::cout << std::setw(14) << method << std::setw(12)
                      << r.at("accuracy_pct").get<double>() << std::setw(10)
                      << r.at("recall_pct").get<double>() << std::setw(8)
                      << r.at("f1_pct").get<double>() << std::setw(10);
            if (r.at("mean_error_px").is_null()) {
                std::cout << "n/a";
            } else {
                std::cout << r.at("mean_error_px").get<double>();
            }
            std::cout << "\n";
        }
    } else {
        std::cout << std::setw(14) << "method" << std::setw(10) << "Dice%" << std::setw(10)
                  << "IoU%" << "\n";
        for (const char* method : {"source_only", "aligned"}) {
            const auto& r = comparison.at(method);
            std::cout << std::setw(14) << method << std::setw(10)
                      << r.at("mean_dice_pct").get<double>() << std::setw(10)
                      << r.at("mean_iou_pct").get<double>() << "\n";
        }
    }
    for (const char* method : {"source_only", "aligned"}) {
        const auto& u = comparison.at(method).at("model_uncertainty");
        std::cout << method << " model uncertainty: mean ";
        if (u.at("mean_finite").is_null()) {
            std::cout << "n/a";
        } else {
            std::cout << std::setprecision(5) << u.at("mean_finite").get<double>()
                      << std::setprecision(2);
        }
        std::cout << " (undetected " << u.at("undetected").get<long>() << "/"
                  << u.at("n").get<std::size_t>() << ")\n";
    }
}

synth::StyleParams style_from_name(const std::string& name) {
    if (name == "source" || name == "identity") return synth::StyleParams::identity();
    if (name == "target") return synth::StyleParams::target_default();
    throw ConfigError("unknown style preset: " + name);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"training-free style alignment for cross-device image analysis"};
    app.require_subcommand(1);

    // ---- synth-data ----
    auto* synth_cmd = app.add_subcommand("synth-data", "generate a synthetic dataset");
    std::string sd_task = "detection", sd_style = "source", sd_domain;
    int sd_count = 100, sd_size = 64, sd_landmarks = 4;
    std::uint64_t sd_seed = 0;
    std::string sd_out;
    synth_cmd->add_option("--task", sd_task, "detection|segmentation");
    synth_cmd->add_option("--count", sd_count)->required();
    synth_cmd->add_option("--seed", sd_seed)->required();
    synth_cmd->add_option("--out", sd_out)->required();
    synth_cmd->add_option("--image-size", sd_size);
    synth_cmd->add_option("--landmarks", sd_landmarks);
    synth_cmd->add_option("--style", sd_style, "source|target");
    synth_cmd->add_option("--domain", sd_domain, "source|target (defaults to style)");

    // ---- train-diffusion ----
    auto* td_cmd = app.add_subcommand("train-diffusion", "train the generative model");
    std::string td_stage = "base", td_data, td_out, td_base;
    int td_epochs = 0, td_size = 0;
    std::uint64_t td_seed = 0;
    td_cmd->add_option("--stage", td_stage, "base|control")->required();
    td_cmd->add_option("--data", td_data, "dataset root (uses its source/ split)")->required();
    td_cmd->add_option("--epochs", td_epochs)->required();
    td_cmd->add_option("--seed", td_seed)->required();
    td_cmd->add_option("--out", td_out)->required();
    td_cmd->add_option("--base", td_base, "base checkpoint (stage control)");
    td_cmd->add_option("--image-size", td_size, "expected image size (default: from data)");

    // ---- train-task ----
    auto* tt_cmd = app.add_subcommand("train-task", "train the uncertainty-aware task model");
    std::string tt_task = "detection", tt_data, tt_out;
    int tt_epochs = 0;
    std::uint64_t tt_seed = 0;
    tt_cmd->add_option("--task", tt_task)->required();
    tt_cmd->add_option("--data", tt_data)->required();
    tt_cmd->add_option("--epochs", tt_epochs)->required();
    tt_cmd->add_option("--seed", tt_seed)->required();
    tt_cmd->add_option("--out", tt_out)->required();

    // ---- calibrate ----
    auto* cal_cmd = app.add_subcommand("calibrate", "compute the model-uncertainty threshold");
    std::string cal_ckpt, cal_data, cal_out;
    double cal_quantile = 0.95;
    cal_cmd->add_option("--task-ckpt", cal_ckpt)->required();
    cal_cmd->add_option("--data", cal_data, "source validation dataset root")->required();
    cal_cmd->add_option("--quantile", cal_quantile);
    cal_cmd->add_option("--out", cal_out)->required();

    // ---- align ----
    auto* al_cmd = app.add_subcommand("align", "align target images and select predictions");
    std::string al_target, al_gen, al_task, al_out, al_producer = "threshold_mask";
    int al_m = 8, al_n = 4, al_steps = 50;
    double al_tmodel = 0.0, al_tpre = 0.0, al_sweep_min = -1.0, al_sweep_max = -1.0;
    std::uint64_t al_seed = 0;
    bool al_dump = false;
    al_cmd->add_option("--target", al_target, "PNG file or dataset root")->required();
    al_cmd->add_option("--diffusion-ckpt", al_gen)->required();
    al_cmd->add_option("--task-ckpt", al_task)->required();
    al_cmd->add_option("--m", al_m);
    al_cmd->add_option("--n", al_n);
    al_cmd->add_option("--t-model", al_tmodel)->required();
    al_cmd->add_option("--t-pre", al_tpre)->required();
    al_cmd->add_option("--ddim-steps", al_steps);
    al_cmd->add_option("--seed", al_seed)->required();
    al_cmd->add_option("--out", al_out)->required();
    al_cmd->add_option("--producer", al_producer, "threshold_mask|noise_perturb");
    al_cmd->add_option("--sweep-min", al_sweep_min);
    al_cmd->add_option("--sweep-max", al_sweep_max);
    al_cmd->add_flag("--dump-intermediates", al_dump);

    // ---- evaluate ----
    auto* ev_cmd = app.add_subcommand("evaluate", "evaluate stored alignments against truth");
    std::string ev_run, ev_task = "detection";
    ev_cmd->add_option("--run", ev_run, "run directory")->required();
    ev_cmd->add_option("--task", ev_task);

    // ---- measure ----
    auto* me_cmd = app.add_subcommand("measure", "downstream measurements");
    auto* cimt_cmd = me_cmd->add_subcommand("cimt", "average band thickness from a mask");
    std::string cimt_mask;
    double cimt_spacing = 0.15;
    cimt_cmd->add_option("--mask", cimt_mask, "binary mask PNG")->required();
    cimt_cmd->add_option("--spacing", cimt_spacing, "vertical mm per pixel")->required();
    auto* curv_cmd = me_cmd->add_subcommand("curvature", "curvature proxy from alignment JSONs");
    std::string curv_series;
    double curv_slice = 1.0, curv_pixel = 1.0;
    curv_cmd->add_option("--series", curv_series, "directory of per-slice alignment JSONs")
        ->required();
    curv_cmd->add_option("--slice-spacing", curv_slice, "mm between slices");
    curv_cmd->add_option("--pixel-spacing", curv_pixel, "mm per pixel");
    me_cmd->require_subcommand(1);

    // ---- run / report ----
    auto* run_cmd = app.add_subcommand("run", "full pipeline from a config file");
    std::string run_config, run_out_override;
    bool run_resume = false, run_benchmark = false;
    std::uint64_t run_seed = 1;
    run_cmd->add_option("--config", run_config, "experiment config JSON");
    run_cmd->add_flag("--resume", run_resume, "skip stages whose outputs exist");
    run_cmd->add_flag("--benchmark", run_benchmark, "seeded synthetic detection benchmark");
    run_cmd->add_option("--seed", run_seed, "benchmark seed");
    run_cmd->add_option("--out", run_out_override, "benchmark output root");

    auto* rep_cmd = app.add_subcommand("report", "regenerate reports/plots for a run");
    std::string rep_run;
    rep_cmd->add_option("--run", rep_run, "run directory with manifest.json")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) {
            synth::SceneSpec spec;
            spec.task = synth::task_from_string(sd_task);
            spec.image_size = sd_size;
            spec.num_landmarks = sd_landmarks;
            const synth::StyleParams style = style_from_name(sd_style);
            const synth::Domain domain = sd_domain.empty()
                                             ? (style.is_identity() ? synth::Domain::source
                                                                    : synth::Domain::target)
                                             : synth::domain_from_string(sd_domain);
            auto samples = synth::generate_dataset(spec, style, sd_count, sd_seed, domain);
            synth::write_dataset(apply_out_root_override(sd_out), samples);
            std::cout << "wrote " << samples.size() << " samples to " << sd_out << "\n";
        } else if (td_cmd->parsed()) {
            auto data = synth::read_dataset(td_data, synth::Domain::source);
            if (data.empty()) throw ConfigError("train-diffusion: empty dataset");
            const int size = td_size > 0 ? td_size : data.front().image.width();
            diffusion::DiffusionHyper hyper = diffusion::DiffusionHyper::desk(size, td_epochs);
            if (td_stage == "base") {
                std::vector<ImageGrid> images;
                for (const auto& s : data) images.push_back(s.image);
                auto ckpt = diffusion::train_base(images, hyper, td_seed);
                ckpt.save(apply_out_root_override(td_out));
            } else if (td_stage == "control") {
                if (td_base.empty()) throw ConfigError("train-diffusion: --base required");
                auto base = diffusion::DiffusionCheckpoint::load(td_base);
                std::vector<std::pair<ImageGrid, ImageGrid>> pairs;
                for (const auto& s : data) {
                    pairs.emplace_back(s.image,
                                       conditioning::optimal_condition_from_annotation(s).grid);
                }
                auto ckpt = diffusion::train_control(pairs, base, hyper, td_seed);
                ckpt.save(apply_out_root_override(td_out));
            } else {
                throw ConfigError("train-diffusion: unknown stage " + td_stage);
            }
            std::cout << "checkpoint written to " << td_out << "\n";
        } else if (tt_cmd->parsed()) {
            auto data = synth::read_dataset(tt_data, synth::Domain::source);
            if (data.empty()) throw ConfigError("train-task: empty dataset");
            const synth::Task task = synth::task_from_string(tt_task);
            evidential::TaskHyper hyper =
                evidential::TaskHyper::desk(task, data.front().image.width(), tt_epochs);
            if (task == synth::Task::detection) {
                hyper.net.num_landmarks = static_cast<int>(data.front().landmarks.size());
            }
            auto ckpt = evidential::train_task_model(data, task, hyper, tt_seed);
            ckpt.save(apply_out_root_override(tt_out));
            std::cout << "checkpoint written to " << tt_out << "\n";
        } else if (cal_cmd->parsed()) {
            auto ckpt = evidential::TaskCheckpoint::load(cal_ckpt);
            auto data = synth::read_dataset(cal_data, synth::Domain::source);
            const double t_model = alignment::calibrate_thresholds(ckpt, data, cal_quantile);
            save_json_file(apply_out_root_override(cal_out),
                           {{"t_model", t_model},
                            {"quantile", cal_quantile},
                            {"n_validation", data.size()}});
            std::cout << "t_model = " << t_model << "\n";
        } else if (al_cmd->parsed()) {
            auto gen = diffusion::DiffusionCheckpoint::load(al_gen);
            auto task = evidential::TaskCheckpoint::load(al_task);
            alignment::AlignmentConfig cfg;
            cfg.m = al_m;
            cfg.n = al_n;
            cfg.t_model = al_tmodel;
            cfg.t_pre = al_tpre;
            cfg.ddim_steps = al_steps;
            conditioning::ProducerConfig producer =
                conditioning::producer_kind_from_string(al_producer) ==
                        conditioning::ProducerKind::threshold_mask
                    ? conditioning::ProducerConfig::threshold_defaults()
                    : conditioning::ProducerConfig::noise_defaults();
            if (al_sweep_min >= 0.0) producer.sweep_min = al_sweep_min;
            if (al_sweep_max >= 0.0) producer.sweep_max = al_sweep_max;
            producer.m = al_m;

            const auto out_dir = apply_out_root_override(al_out);
            std::filesystem::create_directories(out_dir);

            std::vector<std::pair<std::string, ImageGrid>> targets;
            if (std::filesystem::is_directory(al_target)) {
                for (const auto& s : synth::read_dataset(al_target, synth::Domain::target)) {
                    targets.emplace_back(s.id, s.image);
                }
            } else {
                targets.emplace_back(std::filesystem::path(al_target).stem().string(),
                                     read_png_gray8(al_target));
            }
            Rng root(al_seed);
            for (std::size_t i = 0; i < targets.size(); ++i) {
                alignment::AlignmentConfig per_image = cfg;
                per_image.seed = root.fork(i).next_u64();
                auto result = alignment::align_image(targets[i].second, gen, task, producer,
                                                     per_image);
                save_json_file(out_dir / (targets[i].first + ".json"),
                               alignment_result_to_json(result));
                if (al_dump) {
                    const auto sel = static_cast<std::size_t>(*result.selected_condition);
                    write_png_gray8(out_dir / (targets[i].first + "_condition.png"),
                                    result.conditions[sel].grid);
                    write_png_gray8(out_dir / (targets[i].first + "_aligned.png"),
                                    result.aligned[sel][0]);
                }
                std::cout << targets[i].first << ": condition " << *result.selected_condition
                          << (result.fallback_used ? " (fallback)" : "") << "\n";
            }
        } else if (ev_cmd->parsed()) {
            pipeline::ExperimentConfig cfg;
            cfg.task = synth::task_from_string(ev_task);
            cfg.seed = 0;
            cfg.out_root = ev_run;
            print_comparison(pipeline::regenerate_reports(cfg));
        } else if (cimt_cmd->parsed()) {
            ImageGrid mask = read_png_gray8(cimt_mask);
            std::cout << "cimt_mm = " << measure::cimt_from_mask(mask, cimt_spacing) << "\n";
        } else if (curv_cmd->parsed()) {
            measure::ScanSeries series;
            series.slice_spacing_mm = curv_slice;
            series.pixel_spacing_mm = curv_pixel;
            std::vector<std::filesystem::path> files;
            for (const auto& entry : std::filesystem::directory_iterator(curv_series)) {
                if (entry.path().extension() == ".json") files.push_back(entry.path());
            }
            std::sort(files.begin(), files.end());
            for (const auto& file : files) {
                nlohmann::json j = load_json_file(file);
                std::vector<Point> pts;
                if (j.contains("final_prediction") &&
                    j.at("final_prediction").contains("landmarks")) {
                    for (const auto& lm : j.at("final_prediction").at("landmarks")) {
                        pts.push_back({lm.at("x").get<double>(), lm.at("y").get<double>()});
                    }
                }
                series.slices.push_back(std::move(pts));
            }
            std::cout << "curvature_deg = " << measure::curvature_proxy_from_series(series)
                      << "\n";
        } else if (run_cmd->parsed()) {
            pipeline::ExperimentConfig cfg;
            if (run_benchmark) {
                std::filesystem::path out =
                    run_out_override.empty() ? std::filesystem::path("runs/benchmark")
                                             : std::filesystem::path(run_out_override);
                cfg = pipeline::ExperimentConfig::detection_benchmark(
                    run_seed, apply_out_root_override(out));
            } else {
                if (run_config.empty()) throw ConfigError("run: --config or --benchmark required");
                cfg = pipeline::ExperimentConfig::from_file(run_config);
                if (const char* env = std::getenv("SALIGN_OUT_ROOT")) {
                    cfg.out_root = std::filesystem::path(env) / cfg.out_root.filename();
                }
            }
            print_comparison(pipeline::run_pipeline(cfg, run_resume));
        } else if (rep_cmd->parsed()) {
            nlohmann::json manifest = load_json_file(std::filesystem::path(rep_run) /
                                                     "manifest.json");
            pipeline::ExperimentConfig cfg =
                pipeline::ExperimentConfig::from_json(manifest.at("config"));
            cfg.out_root = rep_run;
            print_comparison(pipeline::regenerate_reports(cfg));
        }
    } catch (const pipeline::StageError& e) {
        std::cerr << "error " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error [stage=config]: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
