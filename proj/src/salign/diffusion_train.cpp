// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/diffusion/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "salign/core/errors.hpp"
#include "salign/core/rng.hpp"
#include "salign/nn/adamw.hpp"
#include "salign/nn/serialize.hpp"

namespace salign::diffusion {

using nn::Tensor;
using nn::Var;

DiffusionHyper DiffusionHyper::desk(int image_size, int epochs_) {
    DiffusionHyper h;
    h.epochs = epochs_;
    // Small batches and a short, steep schedule: the desk datasets are a few
    // hundred images, so optimizer steps per noise level are the scarce
    // resource.
    h.batch_size = 8;
    h.lr = 3e-4;
    h.timesteps = 400;
    h.beta_end = 0.05;
    h.ddim_steps = 10;
    h.net.image_size = image_size;
    h.net.c0 = 16;
    h.net.c1 = 24;
    h.net.c2 = 32;
    h.net.temb_dim = 64;
    h.net.cond_channels = 16;
    return h;
}

nlohmann::json DiffusionHyper::to_json() const {
    return {{"epochs", epochs},
            {"lr", lr},
            {"weight_decay", weight_decay},
            {"batch_size", batch_size},
            {"timesteps", timesteps},
            {"beta_start", beta_start},
            {"beta_end", beta_end},
            {"ddim_steps", ddim_steps},
            {"optimizer", "adamw"},
            {"net", net.to_json()}};
}

DiffusionHyper DiffusionHyper::from_json(const nlohmann::json& j) {
    DiffusionHyper h;
    h.epochs = j.at("epochs").get<int>();
    h.lr = j.at("lr").get<double>();
    h.weight_decay = j.value("weight_decay", 0.01);
    h.batch_size = j.at("batch_size").get<int>();
    h.timesteps = j.at("timesteps").get<int>();
    h.beta_start = j.at("beta_start").get<double>();
    h.beta_end = j.at("beta_end").get<double>();
    h.ddim_steps = j.at("ddim_steps").get<int>();
    h.net = UNetConfig::from_json(j.at("net"));
    return h;
}

void DiffusionCheckpoint::save(const std::filesystem::path& path) const {
    nlohmann::json header;
    header["kind"] = "diffusion";
    header["stage"] = to_string(model->stage());
    header["net"] = model->config().to_json();
    header["schedule"] = schedule.to_json();
    header["data_mean"] = data_mean;
    header["training_meta"] = training_meta;
    nn::save_container(path, header, model->params().named());
}

DiffusionCheckpoint DiffusionCheckpoint::load(const std::filesystem::path& path) {
    nn::LoadedContainer loaded = nn::load_container(path);
    if (loaded.header.value("kind", "") != "diffusion") {
        throw FormatError("DiffusionCheckpoint: not a diffusion checkpoint: " + path.string());
    }
    DiffusionCheckpoint ckpt;
    const Stage stage = stage_from_string(loaded.header.at("stage").get<std::string>());
    ckpt.model = std::make_shared<DiffusionModel>(
        UNetConfig::from_json(loaded.header.at("net")), stage, /*init_seed=*/0);
    nn::assign_params(ckpt.model->params(), loaded.tensors);
    if (stage == Stage::controlled) ckpt.model->freeze_base();
    ckpt.schedule = DiffusionSchedule::from_json(loaded.header.at("schedule"));
    ckpt.data_mean = loaded.header.at("data_mean").get<double>();
    ckpt.training_meta = loaded.header.at("training_meta");
    return ckpt;
}

std::uint64_t DiffusionCheckpoint::digest() const {
    return nn::digest_params(model->params().named());
}

std::uint64_t DiffusionCheckpoint::base_digest() const {
    return nn::digest_params(model->params().named(), "base.");
}

ImageGrid forward_noise(const ImageGrid& x0, int t, const ImageGrid& noise,
                        const DiffusionSchedule& schedule) {
    schedule.validate();
    if (t < 0 || t >= schedule.timesteps) {
        throw ArgumentError("forward_noise: t outside [0, timesteps)");
    }
    if (!x0.same_shape(noise)) throw ArgumentError("forward_noise: shape mismatch");
    const double ab = schedule.alpha_bars[static_cast<std::size_t>(t)];
    const float signal = static_cast<float>(std::sqrt(ab));
    const float sigma = static_cast<float>(std::sqrt(1.0 - ab));
    ImageGrid out(x0.width(), x0.height());
    out.spacing = x0.spacing;
    for (std::size_t i = 0; i < out.pixels().size(); ++i) {
        out.pixels()[i] = signal * x0.pixels()[i] + sigma * noise.pixels()[i];
    }
    return out;
}

namespace {

// Images enter the model centered on the dataset mean, range width 2.
Tensor batch_to_model_space(const std::vector<const ImageGrid*>& images, double data_mean) {
    const int n = static_cast<int>(images.size());
    const int h = images[0]->height(), w = images[0]->width();
    const float mean = static_cast<float>(data_mean);
    Tensor x(std::vector<int>{n, 1, h, w});
    for (int i = 0; i < n; ++i) {
        const auto& px = images[static_cast<std::size_t>(i)]->pixels();
        float* dst = x.data() + static_cast<std::int64_t>(i) * h * w;
        for (std::size_t k = 0; k < px.size(); ++k) dst[k] = 2.0f * (px[k] - mean);
    }
    return x;
}

double dataset_mean(const std::vector<const ImageGrid*>& images) {
    double sum = 0.0;
    std::int64_t count = 0;
    for (const ImageGrid* img : images) {
        for (float p : img->pixels()) sum += p;
        count += img->size();
    }
    return count > 0 ? sum / static_cast<double>(count) : 0.5;
}

Tensor condition_batch(const std::vector<const ImageGrid*>& conds) {
    const int n = static_cast<int>(conds.size());
    const int h = conds[0]->height(), w = conds[0]->width();
    Tensor c(std::vector<int>{n, 1, h, w});
    for (int i = 0; i < n; ++i) {
        const auto& px = conds[static_cast<std::size_t>(i)]->pixels();
        std::copy(px.begin(), px.end(), c.data() + static_cast<std::int64_t>(i) * h * w);
    }
    return c;
}

struct NoisyBatch {
    Tensor x_t;
    Tensor eps;
    std::vector<float> t_values;
};

NoisyBatch make_noisy_batch(const Tensor& x0, const DiffusionSchedule& schedule, Rng& rng) {
    const int n = x0.dim(0);
    const std::int64_t hw = static_cast<std::int64_t>(x0.dim(2)) * x0.dim(3);
    NoisyBatch batch;
    batch.x_t = Tensor(x0.shape());
    batch.eps = Tensor(x0.shape());
    batch.t_values.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int t = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(schedule.timesteps)));
        batch.t_values[static_cast<std::size_t>(i)] = static_cast<float>(t);
        const double ab = schedule.alpha_bars[static_cast<std::size_t>(t)];
        const float signal = static_cast<float>(std::sqrt(ab));
        const float sigma = static_cast<float>(std::sqrt(1.0 - ab));
        for (std::int64_t k = 0; k < hw; ++k) {
            const float e = static_cast<float>(rng.normal());
            batch.eps[i * hw + k] = e;
            batch.x_t[i * hw + k] = signal * x0[i * hw + k] + sigma * e;
        }
    }
    return batch;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    }
    return idx;
}

}  // namespace

DiffusionCheckpoint train_base(const std::vector<ImageGrid>& images, const DiffusionHyper& hyper,
                               std::uint64_t seed) {
    if (images.empty()) throw ConfigError("train_base: empty dataset");
    for (const ImageGrid& img : images) {
        if (img.width() != hyper.net.image_size || img.height() != hyper.net.image_size) {
            throw ConfigError("train_base: image size does not match configuration");
        }
    }
    DiffusionCheckpoint ckpt;
    ckpt.model = std::make_shared<DiffusionModel>(hyper.net, Stage::base, seed);
    ckpt.schedule = DiffusionSchedule::linear(hyper.timesteps, hyper.beta_start, hyper.beta_end);
    {
        std::vector<const ImageGrid*> all;
        for (const ImageGrid& img : images) all.push_back(&img);
        ckpt.data_mean = dataset_mean(all);
    }

    nn::AdamW opt(ckpt.model->trainable_params(),
                  {.lr = static_cast<float>(hyper.lr),
                   .weight_decay = static_cast<float>(hyper.weight_decay)});
    Rng rng = Rng(seed).fork(0xd1f);

    std::vector<double> loss_curve;
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        Rng erng = rng.fork(static_cast<std::uint64_t>(epoch));
        auto order = shuffled_indices(images.size(), erng);
        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
            std::vector<const ImageGrid*> items;
            for (std::size_t k = start; k < end; ++k) items.push_back(&images[order[k]]);
            Tensor x0 = batch_to_model_space(items, ckpt.data_mean);
            NoisyBatch noisy = make_noisy_batch(x0, ckpt.schedule, erng);

            opt.zero_grad();
            Var pred = ckpt.model->predict_noise(nn::constant(std::move(noisy.x_t)),
                                                 noisy.t_values, nullptr);
            Var loss = nn::mse_loss(pred, noisy.eps);
            nn::backward(loss);
            opt.step();
            epoch_loss += loss->value[0];
            ++batches;
        }
        loss_curve.push_back(epoch_loss / std::max(1, batches));
    }

    ckpt.training_meta = {{"hyper", hyper.to_json()},
                          {"seed", seed},
                          {"stage", "base"},
                          {"loss_curve", loss_curve}};
    return ckpt;
}

DiffusionCheckpoint train_control(const std::vector<std::pair<ImageGrid, ImageGrid>>& pairs,
                                  const DiffusionCheckpoint& base, const DiffusionHyper& hyper,
                                  std::uint64_t seed) {
    if (pairs.empty()) throw ConfigError("train_control: empty dataset");
    if (base.stage() != Stage::base) {
        throw ArgumentError("train_control: checkpoint must be stage base");
    }
    for (const auto& [image, cond] : pairs) {
        if (!image.same_shape(cond)) {
            throw ArgumentError("train_control: condition/image size mismatch");
        }
        if (image.width() != base.image_size()) {
            throw ConfigError("train_control: image size does not match base checkpoint");
        }
    }

    DiffusionCheckpoint ckpt;
    ckpt.model = std::make_shared<DiffusionModel>(DiffusionModel::make_controlled(*base.model));
    ckpt.schedule = base.schedule;
    ckpt.data_mean = base.data_mean;

    nn::AdamW opt(ckpt.model->trainable_params(),
                  {.lr = static_cast<float>(hyper.lr),
                   .weight_decay = static_cast<float>(hyper.weight_decay)});
    Rng rng = Rng(seed).fork(0xc07);

    std::vector<double> loss_curve;
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        Rng erng = rng.fork(static_cast<std::uint64_t>(epoch));
        auto order = shuffled_indices(pairs.size(), erng);
        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
            std::vector<const ImageGrid*> items, conds;
            for (std::size_t k = start; k < end; ++k) {
                items.push_back(&pairs[order[k]].first);
                conds.push_back(&pairs[order[k]].second);
            }
            Tensor x0 = batch_to_model_space(items, ckpt.data_mean);
            NoisyBatch noisy = make_noisy_batch(x0, ckpt.schedule, erng);

            opt.zero_grad();
            Var pred = ckpt.model->predict_noise(nn::constant(std::move(noisy.x_t)),
                                                 noisy.t_values,
                                                 nn::constant(condition_batch(conds)));
            Var loss = nn::mse_loss(pred, noisy.eps);
            nn::backward(loss);
            opt.step();
            epoch_loss += loss->value[0];
            ++batches;
        }
        loss_curve.push_back(epoch_loss / std::max(1, batches));
    }

    ckpt.training_meta = {{"hyper", hyper.to_json()},
                          {"seed", seed},
                          {"stage", "controlled"},
                          {"base_training_meta", base.training_meta},
                          {"loss_curve", loss_curve}};
    return ckpt;
}

ImageGrid ddim_sample(const DiffusionCheckpoint& ckpt,
                      const std::optional<ImageGrid>& condition, int steps, std::uint64_t seed) {
    if (steps < 1) throw ArgumentError("ddim_sample: steps must be >= 1");
    const bool controlled = ckpt.stage() == Stage::controlled;
    if (controlled && !condition) {
        throw ArgumentError("ddim_sample: controlled checkpoint requires a condition");
    }
    if (!controlled && condition) {
        throw ArgumentError("ddim_sample: base checkpoint takes no condition");
    }
    const int size = ckpt.image_size();
    if (condition && (condition->width() != size || condition->height() != size)) {
        throw ArgumentError("ddim_sample: condition size mismatch");
    }

    const DiffusionSchedule& schedule = ckpt.schedule;
    const int total = schedule.timesteps;
    if (steps > total) throw ArgumentError("ddim_sample: steps exceed schedule length");

    Rng rng = Rng(seed).fork(0xdd1);
    Tensor x(std::vector<int>{1, 1, size, size});
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.normal());

    Var cond_var = nullptr;
    if (condition) {
        Tensor c(std::vector<int>{1, 1, size, size});
        std::copy(condition->pixels().begin(), condition->pixels().end(), c.data());
        cond_var = nn::constant(std::move(c));
    }

    // Trailing spacing: the first step sits at the maximal-noise end of the
    // schedule, matching the pure-noise start.
    const double ratio = static_cast<double>(total) / steps;
    for (int i = steps; i >= 1; --i) {
        const int t = std::clamp(static_cast<int>(std::lround(i * ratio)) - 1, 0, total - 1);
        const int t_prev = static_cast<int>(std::lround((i - 1) * ratio)) - 1;
        const double ab_t = schedule.alpha_bars[static_cast<std::size_t>(t)];
        const double ab_prev =
            t_prev >= 0 ? schedule.alpha_bars[static_cast<std::size_t>(t_prev)] : 1.0;

        Var eps = ckpt.model->predict_noise(nn::constant(x), {static_cast<float>(t)}, cond_var);
        const float* e = eps->value.data();

        const double sqrt_ab = std::sqrt(ab_t);
        const double sqrt_1mab = std::sqrt(1.0 - ab_t);
        const double sqrt_abp = std::sqrt(ab_prev);
        const double sqrt_1mabp = std::sqrt(1.0 - ab_prev);
        const double lo = 2.0 * (0.0 - ckpt.data_mean);
        const double hi = 2.0 * (1.0 - ckpt.data_mean);
        for (std::int64_t k = 0; k < x.size(); ++k) {
            double x0_hat = (x[k] - sqrt_1mab * e[k]) / sqrt_ab;
            x0_hat = std::clamp(x0_hat, lo, hi);
            x[k] = static_cast<float>(sqrt_abp * x0_hat + sqrt_1mabp * e[k]);
        }
    }

    ImageGrid out(size, size);
    for (std::size_t i = 0; i < out.pixels().size(); ++i) {
        out.pixels()[i] =
            static_cast<float>(0.5 * x[static_cast<std::int64_t>(i)] + ckpt.data_mean);
    }
    out.clamp01();
    return out;
}

}  // namespace salign::diffusion
