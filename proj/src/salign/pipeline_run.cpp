// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "salign/core/digest.hpp"
#include "salign/core/errors.hpp"
#include "salign/core/json_util.hpp"
#include "salign/core/png_io.hpp"
#include "salign/core/rle.hpp"
#include "salign/core/rng.hpp"
#include "salign/measure/measure.hpp"
#include "salign/pipeline/svg_plot.hpp"

namespace salign::pipeline {

RunPaths RunPaths::at(const std::filesystem::path& root) {
    RunPaths p;
    p.root = root;
    p.data_train = root / "data" / "train";
    p.data_val = root / "data" / "val";
    p.data_eval = root / "data" / "eval";
    p.checkpoints = root / "checkpoints";
    p.alignments = root / "alignments";
    p.reports = root / "reports";
    p.plots = root / "plots";
    return p;
}

void RunPaths::create_all() const {
    for (const auto& dir : {root, data_train, data_val, data_eval, checkpoints, alignments,
                            reports, plots}) {
        std::filesystem::create_directories(dir);
    }
}

namespace {

double finite_mean(const std::vector<double>& values, long& inf_count) {
    double sum = 0.0;
    long n = 0;
    inf_count = 0;
    for (double v : values) {
        if (std::isfinite(v)) {
            sum += v;
            ++n;
        } else {
            ++inf_count;
        }
    }
    return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

nlohmann::json uncertainty_summary(const std::vector<double>& values) {
    long inf_count = 0;
    const double mean = finite_mean(values, inf_count);
    nlohmann::json j;
    j["n"] = values.size();
    j["undetected"] = inf_count;
    if (std::isfinite(mean)) {
        j["mean_finite"] = mean;
    } else {
        j["mean_finite"] = nullptr;
    }
    return j;
}

std::vector<Point> landmarks_to_points(const std::vector<evidential::LandmarkDetection>& lms) {
    std::vector<Point> pts;
    pts.reserve(lms.size());
    for (const auto& lm : lms) pts.push_back({lm.x, lm.y});
    return pts;
}

// Mean landmark lateral position, the per-image scalar used for agreement
// analysis on the detection task.
double lateral_centroid(const std::vector<Point>& pts) {
    double cx = 0.0;
    for (const Point& p : pts) cx += p.x;
    return pts.empty() ? std::numeric_limits<double>::quiet_NaN()
                       : cx / static_cast<double>(pts.size());
}

struct EvalInputs {
    // per image: prediction points (detection) or mask (segmentation)
    std::vector<std::vector<Point>> pred_points;
    std::vector<ImageGrid> pred_masks;
    std::vector<double> model_uncertainty;
    std::vector<bool> fallback;
};

nlohmann::json evaluate_predictions(const EvalInputs& inputs,
                                    const std::vector<synth::AnnotatedSample>& targets,
                                    synth::Task task) {
    nlohmann::json report;
    if (task == synth::Task::detection) {
        std::vector<std::vector<Point>> truth_sets;
        for (const auto& s : targets) truth_sets.push_back(s.landmarks);
        const metrics::DetectionReport det =
            metrics::detection_metrics(inputs.pred_points, truth_sets, 10.0);
        report["accuracy_pct"] = det.accuracy_pct;
        report["recall_pct"] = det.recall_pct;
        report["f1_pct"] = det.f1_pct;
        if (det.mean_error_px) {
            report["mean_error_px"] = *det.mean_error_px;
        } else {
            report["mean_error_px"] = nullptr;
        }
        report["matched"] = det.matched;
        report["predicted"] = det.predicted;
        report["truth"] = det.truth;
    } else {
        double dice_sum = 0.0, iou_sum = 0.0;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            auto [dice, iou] = metrics::dice_iou(inputs.pred_masks[i], targets[i].mask);
            dice_sum += dice;
            iou_sum += iou;
        }
        report["mean_dice_pct"] = 100.0 * dice_sum / static_cast<double>(targets.size());
        report["mean_iou_pct"] = 100.0 * iou_sum / static_cast<double>(targets.size());
    }
    report["model_uncertainty"] = uncertainty_summary(inputs.model_uncertainty);
    long fallbacks = 0;
    for (bool f : inputs.fallback) fallbacks += f;
    report["fallbacks"] = fallbacks;
    report["n_images"] = targets.size();
    return report;
}

void draw_cross(ImageGrid& img, double x, double y, float value, int arm = 2) {
    const int cx = static_cast<int>(std::lround(x));
    const int cy = static_cast<int>(std::lround(y));
    for (int d = -arm; d <= arm; ++d) {
        if (img.contains(cx + d, cy)) img.at(cx + d, cy) = value;
        if (img.contains(cx, cy + d)) img.at(cx, cy + d) = value;
    }
}

void dump_intermediates(const std::filesystem::path& dir, const std::string& id,
                        const alignment::AlignmentResult& result) {
    std::filesystem::create_directories(dir);
    const int sel = result.selected_condition.value_or(0);
    const auto s = static_cast<std::size_t>(sel);
    write_png_gray8(dir / (id + "_condition.png"), result.conditions[s].grid);
    write_png_gray8(dir / (id + "_aligned.png"), result.aligned[s][0]);
    if (result.final_prediction) {
        ImageGrid overlay = result.aligned[s][0];
        if (result.final_prediction->task == synth::Task::detection) {
            for (const auto& lm : result.final_prediction->landmarks) {
                draw_cross(overlay, lm.x, lm.y, 1.0f);
            }
        } else {
            const ImageGrid& mask = result.final_prediction->mask;
            for (int y = 1; y < mask.height() - 1; ++y) {
                for (int x = 1; x < mask.width() - 1; ++x) {
                    const bool on = mask.at(x, y) >= 0.5f;
                    const bool edge = on && (mask.at(x - 1, y) < 0.5f || mask.at(x + 1, y) < 0.5f ||
                                             mask.at(x, y - 1) < 0.5f || mask.at(x, y + 1) < 0.5f);
                    if (edge) overlay.at(x, y) = 1.0f;
                }
            }
        }
        write_png_gray8(dir / (id + "_prediction.png"), overlay);
    }
}

void write_csv_comparison(const std::filesystem::path& path, const nlohmann::json& comparison,
                          synth::Task task) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    if (task == synth::Task::detection) {
        out << "method,accuracy_pct,recall_pct,f1_pct,mean_error_px\n";
        for (const char* method : {"source_only", "aligned"}) {
            const auto& r = comparison.at(method);
            out << method << "," << r.at("accuracy_pct").get<double>() << ","
                << r.at("recall_pct").get<double>() << "," << r.at("f1_pct").get<double>() << ",";
            if (r.at("mean_error_px").is_null()) {
                out << "na";
            } else {
                out << r.at("mean_error_px").get<double>();
            }
            out << "\n";
        }
    } else {
        out << "method,mean_dice_pct,mean_iou_pct\n";
        for (const char* method : {"source_only", "aligned"}) {
            const auto& r = comparison.at(method);
            out << method << "," << r.at("mean_dice_pct").get<double>() << ","
                << r.at("mean_iou_pct").get<double>() << "\n";
        }
    }
}

// Per-image scalar measurement for agreement plots: mean landmark x
// (detection) or band thickness (segmentation).
void measurement_series(const EvalInputs& inputs,
                        const std::vector<synth::AnnotatedSample>& targets, synth::Task task,
                        std::vector<double>& predicted, std::vector<double>& reference) {
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (task == synth::Task::detection) {
            if (inputs.pred_points[i].empty()) continue;
            predicted.push_back(lateral_centroid(inputs.pred_points[i]));
            reference.push_back(lateral_centroid(targets[i].landmarks));
        } else {
            try {
                const double spacing = targets[i].image.spacing.y_mm;
                const double pred = measure::cimt_from_mask(inputs.pred_masks[i], spacing);
                const double ref = measure::cimt_from_mask(targets[i].mask, spacing);
                predicted.push_back(pred);
                reference.push_back(ref);
            } catch (const MeasurementUnavailable&) {
                continue;  // empty prediction, no measurement
            }
        }
    }
}

void write_plots(const RunPaths& paths, const nlohmann::json& comparison,
                 const EvalInputs& aligned, const std::vector<synth::AnnotatedSample>& targets,
                 synth::Task task) {
    if (task == synth::Task::detection) {
        write_bar_chart_svg(paths.plots / "metrics.svg", "Detection on target data",
                            {"accuracy %", "recall %", "F1 %"}, {"source-only", "aligned"},
                            {{comparison.at("source_only").at("accuracy_pct").get<double>(),
                              comparison.at("source_only").at("recall_pct").get<double>(),
                              comparison.at("source_only").at("f1_pct").get<double>()},
                             {comparison.at("aligned").at("accuracy_pct").get<double>(),
                              comparison.at("aligned").at("recall_pct").get<double>(),
                              comparison.at("aligned").at("f1_pct").get<double>()}});
    } else {
        write_bar_chart_svg(paths.plots / "metrics.svg", "Segmentation on target data",
                            {"Dice %", "IoU %"}, {"source-only", "aligned"},
                            {{comparison.at("source_only").at("mean_dice_pct").get<double>(),
                              comparison.at("source_only").at("mean_iou_pct").get<double>()},
                             {comparison.at("aligned").at("mean_dice_pct").get<double>(),
                              comparison.at("aligned").at("mean_iou_pct").get<double>()}});
    }

    std::vector<double> predicted, reference;
    measurement_series(aligned, targets, task, predicted, reference);
    const char* quantity = task == synth::Task::detection ? "centroid x (px)" : "thickness (mm)";
    if (predicted.size() >= 3) {
        write_scatter_svg(paths.plots / "measurement_scatter.svg",
                          std::string("Automatic vs reference: ") + quantity, reference, predicted,
                          "reference", "automatic");
        write_bland_altman_svg(paths.plots / "measurement_bland_altman.svg",
                               std::string("Agreement: ") + quantity, predicted, reference);
    }
}

nlohmann::json agreement_json(const EvalInputs& aligned,
                              const std::vector<synth::AnnotatedSample>& targets,
                              synth::Task task) {
    std::vector<double> predicted, reference;
    measurement_series(aligned, targets, task, predicted, reference);
    nlohmann::json j;
    j["n"] = predicted.size();
    if (predicted.size() >= 3) {
        const metrics::AgreementReport rep = metrics::agreement_report(predicted, reference);
        j["r"] = rep.r;
        j["r2"] = rep.r2;
        j["p_value"] = rep.p_value;
        j["mean_abs_diff"] = rep.mean_abs_diff;
        j["bias"] = rep.bias;
        j["sd"] = rep.sd;
        j["loa_low"] = rep.loa_low;
        j["loa_high"] = rep.loa_high;
    }
    return j;
}

}  // namespace

nlohmann::json compare_source_only(const evidential::TaskCheckpoint& task,
                                   const std::vector<synth::AnnotatedSample>& targets) {
    if (targets.empty()) throw ConfigError("compare_source_only: empty target set");
    EvalInputs inputs;
    for (const auto& s : targets) {
        evidential::Prediction pred = evidential::predict(task, s.image);
        inputs.model_uncertainty.push_back(pred.model_uncertainty);
        inputs.fallback.push_back(false);
        if (task.task() == synth::Task::detection) {
            inputs.pred_points.push_back(landmarks_to_points(pred.landmarks));
        } else {
            inputs.pred_masks.push_back(pred.mask);
        }
    }
    return evaluate_predictions(inputs, targets, task.task());
}

namespace {

bool file_exists(const std::filesystem::path& p) { return std::filesystem::exists(p); }

EvalInputs load_alignment_outputs(const RunPaths& paths,
                                  const std::vector<synth::AnnotatedSample>& targets,
                                  synth::Task task) {
    EvalInputs aligned;
    for (const auto& s : targets) {
        const auto path = paths.alignments / (s.id + ".json");
        nlohmann::json j = load_json_file(path);
        aligned.fallback.push_back(j.at("fallback_used").get<bool>());
        const auto& fp = j.at("final_prediction");
        const auto& mu = fp.at("model_uncertainty");
        aligned.model_uncertainty.push_back(
            mu.is_string() ? std::numeric_limits<double>::infinity() : mu.get<double>());
        if (task == synth::Task::detection) {
            std::vector<Point> pts;
            for (const auto& lm : fp.at("landmarks")) {
                pts.push_back({lm.at("x").get<double>(), lm.at("y").get<double>()});
            }
            aligned.pred_points.push_back(std::move(pts));
        } else {
            const auto& m = fp.at("mask");
            aligned.pred_masks.push_back(
                rle_decode_mask(m.at("rle").get<std::vector<std::int64_t>>(),
                                m.at("width").get<int>(), m.at("height").get<int>()));
        }
    }
    return aligned;
}

}  // namespace

nlohmann::json run_pipeline(const ExperimentConfig& config, bool resume) {
    try {
        config.validate();
    } catch (const std::exception& e) {
        throw StageError("config", e.what());
    }
    const RunPaths paths = RunPaths::at(config.out_root);
    paths.create_all();

    // Manifest first: a run directory is reproducible from it.
    {
        nlohmann::json manifest;
        manifest["config"] = config.to_json();
        manifest["config_digest"] =
            digest_hex(fnv1a64(config.to_json().dump().data(), config.to_json().dump().size()));
        manifest["seed"] = config.seed;
        save_json_file(paths.root / "manifest.json", manifest);
    }

    Rng root(config.seed);

    // --- data ---------------------------------------------------------
    std::vector<synth::AnnotatedSample> train, val, eval_targets;
    try {
        synth::SceneSpec spec;
        spec.task = config.task;
        spec.image_size = config.image_size;
        spec.num_landmarks = config.num_landmarks;
        spec.geometry_jitter = config.geometry_jitter;
        spec.speckle_seed = root.fork(11).next_u64();

        const bool have_data = resume && file_exists(paths.data_train / "source") &&
                               file_exists(paths.data_val / "source") &&
                               file_exists(paths.data_eval / "target");
        if (have_data) {
            train = synth::read_dataset(paths.data_train, synth::Domain::source);
            val = synth::read_dataset(paths.data_val, synth::Domain::source);
            eval_targets = synth::read_dataset(paths.data_eval, synth::Domain::target);
        } else {
            train = synth::generate_dataset(spec, synth::StyleParams::identity(),
                                            config.source_train, root.fork(1).next_u64());
            val = synth::generate_dataset(spec, synth::StyleParams::identity(), config.source_val,
                                          root.fork(2).next_u64());
            eval_targets = synth::generate_dataset(spec, config.target_style, config.target_eval,
                                                   root.fork(3).next_u64(), synth::Domain::target);
            synth::write_dataset(paths.data_train, train);
            synth::write_dataset(paths.data_val, val);
            synth::write_dataset(paths.data_eval, eval_targets);
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("data", e.what());
    }

    // --- diffusion base -------------------------------------------------
    const auto base_path = paths.checkpoints / "diffusion_base.ckpt";
    diffusion::DiffusionCheckpoint base;
    try {
        if (resume && file_exists(base_path)) {
            base = diffusion::DiffusionCheckpoint::load(base_path);
        } else {
            diffusion::DiffusionHyper hyper = config.diffusion_hyper;
            hyper.epochs = config.base_epochs;
            std::vector<ImageGrid> images;
            for (const auto& s : train) images.push_back(s.image);
            base = diffusion::train_base(images, hyper, root.fork(4).next_u64());
            base.save(base_path);
        }
    } catch (const std::exception& e) {
        throw StageError("train-diffusion-base", e.what());
    }

    // --- diffusion control ----------------------------------------------
    const auto control_path = paths.checkpoints / "diffusion_control.ckpt";
    diffusion::DiffusionCheckpoint control;
    try {
        if (resume && file_exists(control_path)) {
            control = diffusion::DiffusionCheckpoint::load(control_path);
        } else {
            diffusion::DiffusionHyper hyper = config.diffusion_hyper;
            hyper.epochs = config.control_epochs;
            std::vector<std::pair<ImageGrid, ImageGrid>> pairs;
            for (const auto& s : train) {
                pairs.emplace_back(s.image,
                                   conditioning::optimal_condition_from_annotation(s).grid);
            }
            control = diffusion::train_control(pairs, base, hyper, root.fork(5).next_u64());
            control.save(control_path);
        }
    } catch (const std::exception& e) {
        throw StageError("train-diffusion-control", e.what());
    }

    // --- task model -------------------------------------------------------
    const auto task_path = paths.checkpoints / "task.ckpt";
    evidential::TaskCheckpoint task;
    try {
        if (resume && file_exists(task_path)) {
            task = evidential::TaskCheckpoint::load(task_path);
        } else {
            task = evidential::train_task_model(train, config.task, config.task_hyper,
                                                root.fork(6).next_u64());
            task.save(task_path);
        }
    } catch (const std::exception& e) {
        throw StageError("train-task", e.what());
    }

    // --- calibration -------------------------------------------------------
    alignment::AlignmentConfig align_cfg = config.align;
    try {
        const auto calibration_path = paths.reports / "calibration.json";
        if (resume && file_exists(calibration_path) && align_cfg.t_model <= 0.0) {
            align_cfg.t_model = load_json_file(calibration_path).at("t_model").get<double>();
        } else if (align_cfg.t_model <= 0.0) {
            align_cfg.t_model =
                alignment::calibrate_thresholds(task, val, config.calibration_quantile);
            save_json_file(calibration_path, {{"t_model", align_cfg.t_model},
                                              {"quantile", config.calibration_quantile},
                                              {"n_validation", val.size()}});
        }
    } catch (const std::exception& e) {
        throw StageError("calibrate", e.what());
    }

    // --- source-only baseline ---------------------------------------------
    nlohmann::json source_only;
    try {
        source_only = compare_source_only(task, eval_targets);
        save_json_file(paths.reports / "source_only.json", source_only);
    } catch (const std::exception& e) {
        throw StageError("source-only", e.what());
    }

    // --- alignment ----------------------------------------------------------
    try {
        Rng align_root = root.fork(7);
        for (std::size_t i = 0; i < eval_targets.size(); ++i) {
            const auto& sample = eval_targets[i];
            const auto out_path = paths.alignments / (sample.id + ".json");
            if (resume && file_exists(out_path)) continue;
            alignment::AlignmentConfig per_image = align_cfg;
            per_image.seed = align_root.fork(i).next_u64();
            alignment::AlignmentResult result =
                alignment::align_image(sample.image, control, task, config.producer, per_image);
            save_json_file(out_path, alignment_result_to_json(result));
            if (config.dump_intermediates && i < 4) {
                dump_intermediates(paths.alignments / "intermediates", sample.id, result);
            }
            std::cerr << "aligned " << (i + 1) << "/" << eval_targets.size() << "\r";
        }
        std::cerr << "\n";
    } catch (const std::exception& e) {
        throw StageError("align", e.what());
    }

    // --- evaluation ----------------------------------------------------------
    try {
        EvalInputs aligned = load_alignment_outputs(paths, eval_targets, config.task);
        nlohmann::json aligned_report = evaluate_predictions(aligned, eval_targets, config.task);

        nlohmann::json comparison;
        comparison["task"] = synth::to_string(config.task);
        comparison["t_model"] = align_cfg.t_model;
        comparison["t_pre"] = align_cfg.t_pre;
        comparison["source_only"] = source_only;
        comparison["aligned"] = aligned_report;
        comparison["agreement"] = agreement_json(aligned, eval_targets, config.task);
        save_json_file(paths.reports / "comparison.json", comparison);
        write_csv_comparison(paths.reports / "comparison.csv", comparison, config.task);
        write_plots(paths, comparison, aligned, eval_targets, config.task);
        return comparison;
    } catch (const std::exception& e) {
        throw StageError("evaluate", e.what());
    }
}

nlohmann::json regenerate_reports(const ExperimentConfig& config) {
    const RunPaths paths = RunPaths::at(config.out_root);
    try {
        auto eval_targets = synth::read_dataset(paths.data_eval, synth::Domain::target);
        EvalInputs aligned = load_alignment_outputs(paths, eval_targets, config.task);
        nlohmann::json aligned_report = evaluate_predictions(aligned, eval_targets, config.task);
        nlohmann::json comparison = load_json_file(paths.reports / "comparison.json");
        comparison["aligned"] = aligned_report;
        comparison["agreement"] = agreement_json(aligned, eval_targets, config.task);
        save_json_file(paths.reports / "comparison.json", comparison);
        write_csv_comparison(paths.reports / "comparison.csv", comparison, config.task);
        write_plots(paths, comparison, aligned, eval_targets, config.task);
        return comparison;
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("report", e.what());
    }
}

}  // namespace salign::pipeline
