// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/evidential/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "salign/core/errors.hpp"
#include "salign/evidential/task_loss.hpp"
#include "salign/nn/adamw.hpp"
#include "salign/nn/serialize.hpp"

namespace salign::evidential {

using nn::Tensor;
using nn::Var;

nlohmann::json TaskNetConfig::to_json() const {
    return {{"task", synth::to_string(task)},
            {"image_size", image_size},
            {"num_landmarks", num_landmarks},
            {"channels", channels},
            {"hourglass_depth", hourglass_depth}};
}

TaskNetConfig TaskNetConfig::from_json(const nlohmann::json& j) {
    TaskNetConfig cfg;
    cfg.task = synth::task_from_string(j.at("task").get<std::string>());
    cfg.image_size = j.at("image_size").get<int>();
    cfg.num_landmarks = j.at("num_landmarks").get<int>();
    cfg.channels = j.at("channels").get<int>();
    cfg.hourglass_depth = j.at("hourglass_depth").get<int>();
    return cfg;
}

TaskHyper TaskHyper::desk(synth::Task task, int image_size, int epochs_) {
    TaskHyper h;
    h.epochs = epochs_;
    h.net.task = task;
    h.net.image_size = image_size;
    h.net.channels = task == synth::Task::detection ? 24 : 16;
    return h;
}

nlohmann::json TaskHyper::to_json() const {
    return {{"epochs", epochs},
            {"lr", lr},
            {"weight_decay", weight_decay},
            {"batch_size", batch_size},
            {"lambda_reg", lambda_reg},
            {"lambda_anneal", "linear 0 -> lambda_reg over epochs"},
            {"uncertainty_weight", uncertainty_weight},
            {"heatmap_sigma", heatmap_sigma},
            {"peak_threshold", peak_threshold},
            {"optimizer", "adamw"},
            {"net", net.to_json()}};
}

TaskHyper TaskHyper::from_json(const nlohmann::json& j) {
    TaskHyper h;
    h.epochs = j.at("epochs").get<int>();
    h.lr = j.at("lr").get<double>();
    h.weight_decay = j.at("weight_decay").get<double>();
    h.batch_size = j.at("batch_size").get<int>();
    h.lambda_reg = j.at("lambda_reg").get<double>();
    h.uncertainty_weight = j.at("uncertainty_weight").get<double>();
    h.heatmap_sigma = j.at("heatmap_sigma").get<double>();
    h.peak_threshold = j.at("peak_threshold").get<double>();
    h.net = TaskNetConfig::from_json(j.at("net"));
    return h;
}

Var TaskModel::Hourglass::operator()(const Var& x) const { return run(x, depth - 1); }

Var TaskModel::Hourglass::run(const Var& x, int level) const {
    const auto idx = static_cast<std::size_t>(level);
    Var skip = up[idx](x, nullptr);
    Var low = low_in[idx](nn::avg_pool2(x), nullptr);
    Var mid = level > 0 ? run(low, level - 1) : bottom(low, nullptr);
    Var out = low_out[idx](mid, nullptr);
    return nn::add(skip, nn::upsample_nearest2(out));
}

TaskModel::Hourglass TaskModel::make_hourglass(const std::string& name, Rng& rng) {
    Hourglass hg;
    hg.depth = config_.hourglass_depth;
    const int c = config_.channels;
    const int g = nn::norm_groups_for(c);
    for (int d = 0; d < hg.depth; ++d) {
        const std::string level = name + ".l" + std::to_string(d);
        hg.up.emplace_back(params_, level + ".up", c, c, 0, g, rng);
        hg.low_in.emplace_back(params_, level + ".in", c, c, 0, g, rng);
        hg.low_out.emplace_back(params_, level + ".out", c, c, 0, g, rng);
    }
    hg.bottom = nn::ResBlock(params_, name + ".bottom", c, c, 0, g, rng);
    return hg;
}

TaskModel::TaskModel(const TaskNetConfig& config, std::uint64_t init_seed) : config_(config) {
    const int down_factor = 1 << config.hourglass_depth;
    if (config.task == synth::Task::detection && config.image_size % down_factor != 0) {
        throw ConfigError("TaskModel: image_size must be divisible by 2^hourglass_depth");
    }
    if (config.task == synth::Task::segmentation && config.image_size % 4 != 0) {
        throw ConfigError("TaskModel: image_size must be divisible by 4");
    }
    Rng rng(init_seed);
    if (config.task == synth::Task::detection) {
        build_detection(rng);
    } else {
        build_segmentation(rng);
    }
}

void TaskModel::build_detection(Rng& rng) {
    const int c = config_.channels;
    const int k = config_.num_landmarks;
    const int g = nn::norm_groups_for(c);
    stem_ = nn::Conv2dLayer(params_, "net.stem", 1, c, 3, 1, 1, rng);
    stem_block_ = nn::ResBlock(params_, "net.stem_block", c, c, 0, g, rng);
    hg1_ = make_hourglass("net.hg1", rng);
    inter_head_ = nn::Conv2dLayer(params_, "net.inter_head", c, k, 1, 1, 0, rng);
    reinject_ = nn::Conv2dLayer(params_, "net.reinject", k, c, 1, 1, 0, rng);
    merge_ = nn::ResBlock(params_, "net.merge", c, c, 0, g, rng);
    hg2_ = make_hourglass("net.hg2", rng);
    head_norm_ = nn::GroupNormLayer(params_, "net.head_norm", c, g);
    nig_head_ = nn::Conv2dLayer(params_, "net.nig_head", c, 4 * k, 1, 1, 0, rng);
}

void TaskModel::build_segmentation(Rng& rng) {
    const int c = config_.channels;
    const int c2 = 2 * c;
    const int g = nn::norm_groups_for(c);
    const int g2 = nn::norm_groups_for(c2);
    stem_ = nn::Conv2dLayer(params_, "net.stem", 1, c, 3, 1, 1, rng);
    enc0_ = nn::ResBlock(params_, "net.enc0", c, c, 0, g, rng);
    down0_ = nn::Conv2dLayer(params_, "net.down0", c, c2, 3, 2, 1, rng);
    enc1_ = nn::ResBlock(params_, "net.enc1", c2, c2, 0, g2, rng);
    down1_ = nn::Conv2dLayer(params_, "net.down1", c2, c2, 3, 2, 1, rng);
    enc2_ = nn::ResBlock(params_, "net.enc2", c2, c2, 0, g2, rng);
    mid_ = nn::ResBlock(params_, "net.mid", c2, c2, 0, g2, rng);
    up1_ = nn::Conv2dLayer(params_, "net.up1", c2, c2, 3, 1, 1, rng);
    dec1_ = nn::ResBlock(params_, "net.dec1", c2 + c2, c2, 0, g2, rng);
    up0_ = nn::Conv2dLayer(params_, "net.up0", c2, c, 3, 1, 1, rng);
    dec0_ = nn::ResBlock(params_, "net.dec0", c + c, c, 0, g, rng);
    head_norm_ = nn::GroupNormLayer(params_, "net.head_norm", c, g);
    prob_head_ = nn::Conv2dLayer(params_, "net.prob_head", c, 1, 1, 1, 0, rng);
    nig_head_ = nn::Conv2dLayer(params_, "net.nig_head", c, 4, 1, 1, 0, rng);
}

namespace {

// Raw 4K-channel head -> (gamma, omega, alpha, beta) with omega, alpha > 1
// and beta > 0 for any raw values. The epsilon floors keep the invariants
// strict in float even when softplus underflows, so the uncertainty map
// stays finite.
void map_nig_head(const Var& raw, int k, TaskModel::Outputs& out) {
    out.gamma = nn::slice_ch(raw, 0, k);
    out.omega = nn::add_scalar(nn::softplus(nn::slice_ch(raw, k, 2 * k)), 1.0f + 1e-5f);
    out.alpha = nn::add_scalar(nn::softplus(nn::slice_ch(raw, 2 * k, 3 * k)), 1.0f + 1e-5f);
    out.beta = nn::add_scalar(nn::softplus(nn::slice_ch(raw, 3 * k, 4 * k)), 1e-6f);
}

}  // namespace

TaskModel::Outputs TaskModel::forward(const Var& x) const {
    if (!x || x->value.rank() != 4 || x->value.dim(1) != 1 ||
        x->value.dim(2) != config_.image_size || x->value.dim(3) != config_.image_size) {
        throw ArgumentError("TaskModel::forward: x must be (N,1,size,size)");
    }
    Outputs out;
    if (config_.task == synth::Task::detection) {
        Var f = stem_block_(stem_(x), nullptr);
        Var h1 = hg1_(f);
        out.inter_heat = inter_head_(h1);
        Var f2 = merge_(nn::add(h1, reinject_(out.inter_heat)), nullptr);
        Var h2 = hg2_(f2);
        Var feat = nn::silu(head_norm_(h2));
        map_nig_head(nig_head_(feat), config_.num_landmarks, out);
    } else {
        Var s0 = enc0_(stem_(x), nullptr);
        Var s1 = enc1_(down0_(s0), nullptr);
        Var s2 = enc2_(down1_(s1), nullptr);
        Var m = mid_(s2, nullptr);
        Var d1 = dec1_(nn::concat_ch(up1_(nn::upsample_nearest2(m)), s1), nullptr);
        Var d0 = dec0_(nn::concat_ch(up0_(nn::upsample_nearest2(d1)), s0), nullptr);
        Var feat = nn::silu(head_norm_(d0));
        out.prob = nn::sigmoid(prob_head_(feat));
        map_nig_head(nig_head_(feat), 1, out);
    }
    return out;
}

void TaskCheckpoint::save(const std::filesystem::path& path) const {
    nlohmann::json header;
    header["kind"] = "task";
    header["net"] = model->config().to_json();
    header["lambda_reg"] = lambda_reg;
    header["peak_threshold"] = peak_threshold;
    header["training_meta"] = training_meta;
    nn::save_container(path, header, model->params().named());
}

TaskCheckpoint TaskCheckpoint::load(const std::filesystem::path& path) {
    nn::LoadedContainer loaded = nn::load_container(path);
    if (loaded.header.value("kind", "") != "task") {
        throw FormatError("TaskCheckpoint: not a task checkpoint: " + path.string());
    }
    TaskCheckpoint ckpt;
    ckpt.model = std::make_shared<TaskModel>(TaskNetConfig::from_json(loaded.header.at("net")),
                                             /*init_seed=*/0);
    nn::assign_params(ckpt.model->params(), loaded.tensors);
    ckpt.lambda_reg = loaded.header.at("lambda_reg").get<double>();
    ckpt.peak_threshold = loaded.header.at("peak_threshold").get<double>();
    ckpt.training_meta = loaded.header.at("training_meta");
    return ckpt;
}

std::uint64_t TaskCheckpoint::digest() const {
    return nn::digest_params(model->params().named());
}

ImageGrid landmark_heatmap(const Point& landmark, int size, double sigma) {
    ImageGrid heat(size, size);
    const double denom = 2.0 * sigma * sigma;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double d2 = (x - landmark.x) * (x - landmark.x) +
                              (y - landmark.y) * (y - landmark.y);
            heat.at(x, y) = static_cast<float>(std::exp(-d2 / denom));
        }
    }
    return heat;
}

std::vector<LandmarkDetection> extract_landmarks(const std::vector<ImageGrid>& heatmaps,
                                                 double peak_threshold) {
    std::vector<LandmarkDetection> found;
    for (std::size_t k = 0; k < heatmaps.size(); ++k) {
        const ImageGrid& heat = heatmaps[k];
        if (heat.empty()) continue;
        int best_x = 0, best_y = 0;
        float best = heat.at(0, 0);
        for (int y = 0; y < heat.height(); ++y) {
            for (int x = 0; x < heat.width(); ++x) {
                if (heat.at(x, y) > best) {
                    best = heat.at(x, y);
                    best_x = x;
                    best_y = y;
                }
            }
        }
        if (!std::isfinite(best)) throw ArgumentError("extract_landmarks: non-finite heatmap");
        if (best >= peak_threshold) {
            found.push_back({static_cast<int>(k), static_cast<double>(best_x),
                             static_cast<double>(best_y), static_cast<double>(best)});
        }
    }
    return found;
}

namespace {

Var evidential_loss_op(const Var& gamma, const Var& omega, const Var& alpha, const Var& beta,
                       std::shared_ptr<Tensor> target, double lambda_reg) {
    const std::int64_t n = gamma->value.size();
    if (target->size() != n) throw ArgumentError("evidential_loss_op: target size mismatch");
    Tensor out(std::vector<int>{1});
    out[0] = static_cast<float>(evidential_loss_span(gamma->value.data(), omega->value.data(),
                                                     alpha->value.data(), beta->value.data(),
                                                     target->data(), n, lambda_reg));
    return nn::make_op(std::move(out), {gamma, omega, alpha, beta},
                       [gamma, omega, alpha, beta, target, lambda_reg, n](nn::Node& node) {
        gamma->ensure_grad();
        omega->ensure_grad();
        alpha->ensure_grad();
        beta->ensure_grad();
        evidential_loss_grad_span(gamma->value.data(), omega->value.data(), alpha->value.data(),
                                  beta->value.data(), target->data(), n, lambda_reg,
                                  node.grad[0], gamma->grad.data(), omega->grad.data(),
                                  alpha->grad.data(), beta->grad.data());
    });
}

// Mean over the batch of per-image segmentation task losses (CE + dice).
Var seg_task_loss_op(const Var& prob, std::shared_ptr<std::vector<ImageGrid>> masks) {
    const int n = prob->value.dim(0);
    const int h = prob->value.dim(2), w = prob->value.dim(3);
    if (static_cast<int>(masks->size()) != n) {
        throw ArgumentError("seg_task_loss_op: one mask per batch item required");
    }
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        ImageGrid grid(w, h);
        std::copy_n(prob->value.data() + i * hw, hw, grid.pixels().data());
        total += task_loss_segmentation(grid, (*masks)[static_cast<std::size_t>(i)]);
    }
    Tensor out(std::vector<int>{1});
    out[0] = static_cast<float>(total / n);
    return nn::make_op(std::move(out), {prob}, [prob, masks, n, h, w, hw](nn::Node& node) {
        if (!prob->requires_grad) return;
        prob->ensure_grad();
        const float upstream = node.grad[0] / static_cast<float>(n);
        for (int i = 0; i < n; ++i) {
            ImageGrid grid(w, h);
            std::copy_n(prob->value.data() + i * hw, hw, grid.pixels().data());
            const auto grad = task_loss_segmentation_grad(grid, (*masks)[static_cast<std::size_t>(i)]);
            float* dst = prob->grad.data() + i * hw;
            for (std::int64_t p = 0; p < hw; ++p) dst[p] += upstream * grad[static_cast<std::size_t>(p)];
        }
    });
}

Tensor image_batch(const std::vector<const ImageGrid*>& images) {
    const int n = static_cast<int>(images.size());
    const int h = images[0]->height(), w = images[0]->width();
    Tensor x(std::vector<int>{n, 1, h, w});
    for (int i = 0; i < n; ++i) {
        const auto& px = images[static_cast<std::size_t>(i)]->pixels();
        std::copy(px.begin(), px.end(), x.data() + static_cast<std::int64_t>(i) * h * w);
    }
    return x;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    return idx;
}

void validate_dataset(const std::vector<synth::AnnotatedSample>& dataset, synth::Task task,
                      const TaskNetConfig& net) {
    if (dataset.empty()) throw ConfigError("train_task_model: empty dataset");
    const synth::Domain domain = dataset.front().domain;
    for (const auto& s : dataset) {
        if (s.task != task) throw ConfigError("train_task_model: sample task mismatch");
        if (s.domain != domain) {
            throw ConfigError("train_task_model: mixed domains in training set");
        }
        if (s.image.width() != net.image_size || s.image.height() != net.image_size) {
            throw ConfigError("train_task_model: image size mismatch");
        }
        if (task == synth::Task::detection) {
            if (static_cast<int>(s.landmarks.size()) != net.num_landmarks) {
                throw ConfigError("train_task_model: sample " + s.id +
                                  " lacks the configured landmark count");
            }
        } else if (s.mask.empty() || !s.mask.same_shape(s.image)) {
            throw ConfigError("train_task_model: sample " + s.id + " lacks a mask annotation");
        }
    }
}

}  // namespace

TaskCheckpoint train_task_model(const std::vector<synth::AnnotatedSample>& dataset,
                                synth::Task task, const TaskHyper& hyper, std::uint64_t seed) {
    TaskNetConfig net = hyper.net;
    net.task = task;
    validate_dataset(dataset, task, net);

    TaskCheckpoint ckpt;
    ckpt.model = std::make_shared<TaskModel>(net, seed);
    ckpt.lambda_reg = hyper.lambda_reg;
    ckpt.peak_threshold = hyper.peak_threshold;

    const int size = net.image_size;
    const int k = net.nig_channels();
    const std::int64_t hw = static_cast<std::int64_t>(size) * size;

    // Per-sample targets are fixed; precompute once.
    std::vector<std::vector<float>> heat_targets;   // detection: K stacked grids
    if (task == synth::Task::detection) {
        for (const auto& s : dataset) {
            std::vector<float> target(static_cast<std::size_t>(k * hw));
            for (int c = 0; c < k; ++c) {
                ImageGrid heat = landmark_heatmap(s.landmarks[static_cast<std::size_t>(c)], size,
                                                  hyper.heatmap_sigma);
                std::copy(heat.pixels().begin(), heat.pixels().end(),
                          target.begin() + static_cast<std::int64_t>(c) * hw);
            }
            heat_targets.push_back(std::move(target));
        }
    }

    nn::AdamW opt(ckpt.model->params().all(),
                  {.lr = static_cast<float>(hyper.lr),
                   .weight_decay = static_cast<float>(hyper.weight_decay)});
    Rng rng = Rng(seed).fork(0x7a5);

    std::vector<double> task_curve, evidential_curve;
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        // Evidence penalty ramps linearly up to lambda_reg.
        const double lambda_epoch =
            hyper.lambda_reg * static_cast<double>(epoch + 1) / hyper.epochs;
        Rng erng = rng.fork(static_cast<std::uint64_t>(epoch));
        auto order = shuffled_indices(dataset.size(), erng);
        double task_loss_sum = 0.0, evid_loss_sum = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(hyper.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
            const int bn = static_cast<int>(end - start);
            std::vector<const ImageGrid*> images;
            for (std::size_t i = start; i < end; ++i) {
                images.push_back(&dataset[order[i]].image);
            }

            opt.zero_grad();
            auto out = ckpt.model->forward(nn::constant(image_batch(images)));

            Var task_loss, evid_loss;
            if (task == synth::Task::detection) {
                Tensor gt(std::vector<int>{bn, k, size, size});
                for (int i = 0; i < bn; ++i) {
                    const auto& target = heat_targets[order[start + static_cast<std::size_t>(i)]];
                    std::copy(target.begin(), target.end(),
                              gt.data() + static_cast<std::int64_t>(i) * k * hw);
                }
                task_loss = nn::add(nn::mse_loss(out.inter_heat, gt),
                                    nn::mse_loss(out.gamma, gt));
                evid_loss = evidential_loss_op(out.gamma, out.omega, out.alpha, out.beta,
                                               std::make_shared<Tensor>(std::move(gt)),
                                               lambda_epoch);
            } else {
                auto masks = std::make_shared<std::vector<ImageGrid>>();
                auto target = std::make_shared<Tensor>(std::vector<int>{bn, 1, size, size});
                for (int i = 0; i < bn; ++i) {
                    const ImageGrid& mask = dataset[order[start + static_cast<std::size_t>(i)]].mask;
                    masks->push_back(mask);
                    std::copy(mask.pixels().begin(), mask.pixels().end(),
                              target->data() + static_cast<std::int64_t>(i) * hw);
                }
                task_loss = seg_task_loss_op(out.prob, masks);
                evid_loss = evidential_loss_op(out.gamma, out.omega, out.alpha, out.beta, target,
                                               lambda_epoch);
            }

            Var total = nn::add(task_loss,
                                nn::mul_scalar(evid_loss,
                                               static_cast<float>(hyper.uncertainty_weight)));
            nn::backward(total);
            opt.step();
            task_loss_sum += task_loss->value[0];
            evid_loss_sum += evid_loss->value[0];
            ++batches;
        }
        task_curve.push_back(task_loss_sum / std::max(1, batches));
        evidential_curve.push_back(evid_loss_sum / std::max(1, batches));
    }

    ckpt.training_meta = {{"hyper", hyper.to_json()},
                          {"seed", seed},
                          {"task_loss_curve", task_curve},
                          {"evidential_loss_curve", evidential_curve}};
    return ckpt;
}

Prediction predict(const TaskCheckpoint& ckpt, const ImageGrid& image) {
    const TaskNetConfig& net = ckpt.model->config();
    if (image.width() != net.image_size || image.height() != net.image_size) {
        throw ArgumentError("predict: image size mismatch");
    }
    const int size = net.image_size;
    const int k = net.nig_channels();
    const std::int64_t hw = static_cast<std::int64_t>(size) * size;

    std::vector<const ImageGrid*> one{&image};
    auto out = ckpt.model->forward(nn::constant(image_batch(one)));

    Prediction pred;
    pred.task = net.task;
    pred.nig = NIGParams::zeros(k, size, size);
    std::copy_n(out.gamma->value.data(), k * hw, pred.nig.gamma.data());
    std::copy_n(out.omega->value.data(), k * hw, pred.nig.omega.data());
    std::copy_n(out.alpha->value.data(), k * hw, pred.nig.alpha.data());
    std::copy_n(out.beta->value.data(), k * hw, pred.nig.beta.data());
    pred.uncertainty = uncertainty_map(pred.nig);

    if (net.task == synth::Task::detection) {
        for (int c = 0; c < k; ++c) {
            ImageGrid heat(size, size);
            std::copy_n(pred.nig.gamma.data() + static_cast<std::int64_t>(c) * hw, hw,
                        heat.pixels().data());
            pred.heatmaps.push_back(std::move(heat));
        }
        pred.landmarks = extract_landmarks(pred.heatmaps, ckpt.peak_threshold);
        // The model's coordinate output is every channel's argmax; the peak
        // threshold only decodes which of them count as detections. Missing
        // structures therefore surface as high uncertainty at their
        // channel's (unsupported) argmax.
        const auto all_channels =
            extract_landmarks(pred.heatmaps, -std::numeric_limits<double>::infinity());
        pred.model_uncertainty = model_uncertainty_detection(pred.uncertainty, all_channels);
    } else {
        pred.probability = ImageGrid(size, size);
        std::copy_n(out.prob->value.data(), hw, pred.probability.pixels().data());
        pred.mask = ImageGrid(size, size);
        for (std::int64_t i = 0; i < hw; ++i) {
            pred.mask.pixels()[static_cast<std::size_t>(i)] =
                pred.nig.gamma[static_cast<std::size_t>(i)] >= 0.5f ? 1.0f : 0.0f;
        }
        pred.model_uncertainty = model_uncertainty_segmentation(pred.uncertainty, pred.mask);
    }
    return pred;
}

}  // namespace salign::evidential
