// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/alignment/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "salign/core/errors.hpp"
#include "salign/core/rle.hpp"
#include "salign/core/rng.hpp"
#include "salign/nn/tensor.hpp"

namespace salign::alignment {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void AlignmentConfig::validate() const {
    if (m < 1 || n < 1) throw ConfigError("AlignmentConfig: m and n must be >= 1");
    if (!(t_model > 0.0) || !(t_pre > 0.0)) {
        throw ConfigError("AlignmentConfig: thresholds must be > 0");
    }
    if (ddim_steps < 1) throw ConfigError("AlignmentConfig: ddim_steps must be >= 1");
}

double prediction_uncertainty_detection(const std::vector<std::vector<Point>>& prediction_sets) {
    if (prediction_sets.empty()) {
        throw ArgumentError("prediction_uncertainty_detection: need n >= 1 predictions");
    }
    const std::size_t count = prediction_sets.front().size();
    for (const auto& set : prediction_sets) {
        if (set.size() != count) return kInf;  // inconsistent structure
    }
    // No detections anywhere: nothing to be consistent about, same
    // no-detection signal as the model-uncertainty reduction.
    if (count == 0) return kInf;
    if (prediction_sets.size() == 1) return 0.0;

    // Correspondence by vertical then horizontal order.
    std::vector<std::vector<Point>> sorted = prediction_sets;
    for (auto& set : sorted) {
        std::sort(set.begin(), set.end(), [](const Point& a, const Point& b) {
            if (a.y != b.y) return a.y < b.y;
            return a.x < b.x;
        });
    }

    const std::size_t n = sorted.size();
    std::vector<Point> mean(count);
    for (const auto& set : sorted) {
        for (std::size_t k = 0; k < count; ++k) {
            mean[k].x += set[k].x / static_cast<double>(n);
            mean[k].y += set[k].y / static_cast<double>(n);
        }
    }
    // Distance of one prediction to the mean prediction: mean over
    // corresponding landmarks of their pointwise distances. Keeps the
    // uncertainty in pixel units for any landmark count, so a pixel-valued
    // threshold compares like with like.
    double total = 0.0;
    for (const auto& set : sorted) {
        double dist = 0.0;
        for (std::size_t k = 0; k < count; ++k) {
            dist += distance(set[k], mean[k]) / static_cast<double>(count);
        }
        total += dist;
    }
    return total / static_cast<double>(n);
}

double prediction_uncertainty_segmentation(const std::vector<ImageGrid>& masks) {
    if (masks.empty()) {
        throw ArgumentError("prediction_uncertainty_segmentation: need n >= 1 masks");
    }
    for (const ImageGrid& mask : masks) {
        if (!mask.same_shape(masks.front())) {
            throw ArgumentError("prediction_uncertainty_segmentation: shape mismatch");
        }
    }
    long inter = 0, uni = 0;
    for (std::size_t i = 0; i < masks.front().pixels().size(); ++i) {
        bool all = true, any = false;
        for (const ImageGrid& mask : masks) {
            const bool on = mask.pixels()[i] >= 0.5f;
            all = all && on;
            any = any || on;
        }
        inter += all;
        uni += any;
    }
    if (uni == 0) return 1.0;
    return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

std::optional<int> select_condition(const std::vector<double>& u_model_vec,
                                    const std::vector<double>& u_pre_vec, double t_model,
                                    double t_pre) {
    if (u_model_vec.size() != u_pre_vec.size()) {
        throw ArgumentError("select_condition: vectors must have equal length");
    }
    std::optional<int> best;
    for (std::size_t i = 0; i < u_model_vec.size(); ++i) {
        if (!(u_model_vec[i] <= t_model) || !(u_pre_vec[i] <= t_pre)) continue;
        if (!best) {
            best = static_cast<int>(i);
            continue;
        }
        const auto b = static_cast<std::size_t>(*best);
        if (u_pre_vec[i] < u_pre_vec[b] ||
            (u_pre_vec[i] == u_pre_vec[b] && u_model_vec[i] < u_model_vec[b])) {
            best = static_cast<int>(i);
        }
    }
    return best;
}

int select_final_prediction(const std::vector<double>& u_model_row) {
    if (u_model_row.empty()) throw ArgumentError("select_final_prediction: empty row");
    int best = 0;
    for (std::size_t i = 1; i < u_model_row.size(); ++i) {
        if (u_model_row[i] < u_model_row[static_cast<std::size_t>(best)]) {
            best = static_cast<int>(i);
        }
    }
    return best;
}

AlignmentResult align_image(const ImageGrid& target, const diffusion::DiffusionCheckpoint& gen,
                            const evidential::TaskCheckpoint& task,
                            const conditioning::ProducerConfig& producer,
                            const AlignmentConfig& config) {
    config.validate();
    if (gen.stage() != diffusion::Stage::controlled) {
        throw ArgumentError("align_image: diffusion checkpoint must be stage controlled");
    }
    if (target.width() != gen.image_size() || target.height() != gen.image_size()) {
        throw ArgumentError("align_image: target size does not match the generator");
    }

    conditioning::ProducerConfig sweep = producer;
    sweep.m = config.m;

    AlignmentResult result;
    result.conditions = conditioning::condition_sweep(target, sweep, config.seed);
    const int m = config.m, n = config.n;
    result.aligned.assign(static_cast<std::size_t>(m), std::vector<ImageGrid>(static_cast<std::size_t>(n)));
    result.predictions.assign(static_cast<std::size_t>(m),
                              std::vector<evidential::Prediction>(static_cast<std::size_t>(n)));
    result.u_model.assign(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(n), 0.0));

    // The m x n grid is embarrassingly parallel: every sample owns a stream
    // derived from (seed, condition index, sample index) and writes only its
    // own slot, so results are independent of execution order.
    const Rng root(config.seed);
#pragma omp parallel for schedule(dynamic) num_threads(nn::thread_count())
    for (int flat = 0; flat < m * n; ++flat) {
        const int i = flat / n, j = flat % n;
        const std::uint64_t sample_seed =
            root.fork(0xa119, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j))
                .next_u64();
        ImageGrid aligned = diffusion::ddim_sample(
            gen, result.conditions[static_cast<std::size_t>(i)].grid, config.ddim_steps,
            sample_seed);
        evidential::Prediction pred = evidential::predict(task, aligned);
        result.u_model[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            pred.model_uncertainty;
        result.aligned[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            std::move(aligned);
        result.predictions[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            std::move(pred);
    }

    result.u_model_mean.resize(static_cast<std::size_t>(m));
    result.u_pre.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += result.u_model[idx][static_cast<std::size_t>(j)] / n;
        result.u_model_mean[idx] = mean;

        if (task.task() == synth::Task::detection) {
            std::vector<std::vector<Point>> sets;
            for (int j = 0; j < n; ++j) {
                std::vector<Point> points;
                for (const auto& lm : result.predictions[idx][static_cast<std::size_t>(j)].landmarks) {
                    points.push_back({lm.x, lm.y});
                }
                sets.push_back(std::move(points));
            }
            result.u_pre[idx] = prediction_uncertainty_detection(sets);
        } else {
            std::vector<ImageGrid> masks;
            for (int j = 0; j < n; ++j) {
                masks.push_back(result.predictions[idx][static_cast<std::size_t>(j)].mask);
            }
            result.u_pre[idx] = prediction_uncertainty_segmentation(masks);
        }
    }

    result.selected_condition =
        select_condition(result.u_model_mean, result.u_pre, config.t_model, config.t_pre);
    if (!result.selected_condition) {
        // Every condition was rejected; fall back to the most self-consistent
        // one rather than failing the pipeline.
        int best = 0;
        for (int i = 1; i < m; ++i) {
            if (result.u_pre[static_cast<std::size_t>(i)] <
                result.u_pre[static_cast<std::size_t>(best)]) {
                best = i;
            }
        }
        result.selected_condition = best;
        result.fallback_used = true;
    }

    const auto sel = static_cast<std::size_t>(*result.selected_condition);
    const int final_j = select_final_prediction(result.u_model[sel]);
    result.final_prediction = result.predictions[sel][static_cast<std::size_t>(final_j)];
    return result;
}

double calibrate_thresholds(const evidential::TaskCheckpoint& task,
                            const std::vector<synth::AnnotatedSample>& source_validation,
                            double quantile) {
    if (source_validation.empty()) {
        throw ConfigError("calibrate_thresholds: empty validation set");
    }
    if (!(quantile > 0.0) || quantile > 1.0) {
        throw ConfigError("calibrate_thresholds: quantile must lie in (0, 1]");
    }
    std::vector<double> uncertainties;
    uncertainties.reserve(source_validation.size());
    for (const auto& sample : source_validation) {
        uncertainties.push_back(evidential::predict(task, sample.image).model_uncertainty);
    }
    std::sort(uncertainties.begin(), uncertainties.end());
    const auto n = static_cast<double>(uncertainties.size());
    const auto rank = static_cast<std::size_t>(std::ceil(quantile * n));
    return uncertainties[std::min(uncertainties.size() - 1, rank == 0 ? 0 : rank - 1)];
}

namespace {

// JSON has no infinity; encode the rejection signal explicitly.
nlohmann::json json_num(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("infinity");
}

nlohmann::json json_vec(const std::vector<double>& v) {
    nlohmann::json out = nlohmann::json::array();
    for (double x : v) out.push_back(json_num(x));
    return out;
}

}  // namespace

nlohmann::json alignment_result_to_json(const AlignmentResult& result) {
    nlohmann::json j;
    nlohmann::json conds = nlohmann::json::array();
    for (const auto& c : result.conditions) conds.push_back(c.producer_params);
    j["conditions"] = conds;
    nlohmann::json u_model = nlohmann::json::array();
    for (const auto& row : result.u_model) u_model.push_back(json_vec(row));
    j["u_model"] = u_model;
    j["u_model_mean"] = json_vec(result.u_model_mean);
    j["u_pre"] = json_vec(result.u_pre);
    j["fallback_used"] = result.fallback_used;
    if (result.selected_condition) {
        j["selected_condition"] = *result.selected_condition;
    } else {
        j["selected_condition"] = nullptr;
    }
    if (result.final_prediction) {
        const auto& pred = *result.final_prediction;
        nlohmann::json p;
        p["model_uncertainty"] = json_num(pred.model_uncertainty);
        if (pred.task == synth::Task::detection) {
            nlohmann::json pts = nlohmann::json::array();
            for (const auto& lm : pred.landmarks) {
                pts.push_back({{"heatmap", lm.heatmap_index}, {"x", lm.x}, {"y", lm.y},
                               {"peak", lm.peak}});
            }
            p["landmarks"] = pts;
        } else {
            p["mask"] = {{"width", pred.mask.width()},
                         {"height", pred.mask.height()},
                         {"rle", rle_encode_mask(pred.mask)}};
        }
        j["final_prediction"] = p;
    }
    return j;
}

}  // namespace salign::alignment
