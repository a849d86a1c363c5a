// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "salign/core/errors.hpp"
#include "salign/core/json_util.hpp"
#include "salign/core/png_io.hpp"
#include "salign/core/rle.hpp"
#include "salign/core/rng.hpp"

namespace salign::synth {

std::string to_string(Task task) {
    return task == Task::detection ? "detection" : "segmentation";
}

Task task_from_string(const std::string& s) {
    if (s == "detection") return Task::detection;
    if (s == "segmentation") return Task::segmentation;
    throw ConfigError("unknown task: " + s);
}

std::string to_string(Domain domain) { return domain == Domain::source ? "source" : "target"; }

Domain domain_from_string(const std::string& s) {
    if (s == "source") return Domain::source;
    if (s == "target") return Domain::target;
    throw ConfigError("unknown domain: " + s);
}

void SceneSpec::validate() const {
    if (image_size < 16) throw ConfigError("SceneSpec: image_size must be >= 16");
    if (task == Task::detection && num_landmarks < 1) {
        throw ConfigError("SceneSpec: num_landmarks must be >= 1");
    }
    if (geometry_jitter < 0.0 || geometry_jitter > 0.5) {
        throw ConfigError("SceneSpec: geometry_jitter must lie in [0, 0.5]");
    }
    if (task == Task::segmentation) {
        const int lo = resolved_band_min(), hi = resolved_band_max();
        if (lo < 1 || hi >= image_size - 1 || lo + 3 > hi) {
            throw ConfigError("SceneSpec: band rows must lie inside image bounds");
        }
    }
}

int SceneSpec::resolved_band_min() const {
    return band_row_min >= 0 ? band_row_min : (image_size * 2) / 5;
}

int SceneSpec::resolved_band_max() const {
    return band_row_max >= 0 ? band_row_max : (image_size * 3) / 5;
}

StyleParams StyleParams::target_default() {
    StyleParams s;
    s.gamma = 1.6;
    s.contrast_scale = 0.7;
    s.blur_sigma = 1.0;
    s.speckle_strength = 0.6;
    s.intensity_offset = 0.0;
    return s;
}

bool StyleParams::is_identity() const {
    return gamma == 1.0 && contrast_scale == 1.0 && blur_sigma == 0.0 &&
           speckle_strength == 0.0 && intensity_offset == 0.0;
}

void StyleParams::validate() const {
    if (!(gamma > 0.0)) throw ConfigError("StyleParams: gamma must be > 0");
    if (!(contrast_scale > 0.0)) throw ConfigError("StyleParams: contrast_scale must be > 0");
    if (blur_sigma < 0.0) throw ConfigError("StyleParams: blur_sigma must be >= 0");
    if (speckle_strength < 0.0 || speckle_strength > 1.0) {
        throw ConfigError("StyleParams: speckle_strength must lie in [0,1]");
    }
    if (intensity_offset < -0.5 || intensity_offset > 0.5) {
        throw ConfigError("StyleParams: intensity_offset must lie in [-0.5, 0.5]");
    }
}

namespace {

ImageGrid gaussian_blur(const ImageGrid& image, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * (k * k) / (sigma * sigma));
        total += kernel[static_cast<std::size_t>(k + radius)];
    }
    for (double& k : kernel) k /= total;

    const int w = image.width(), h = image.height();
    ImageGrid tmp(w, h);
    tmp.spacing = image.spacing;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const int xx = std::clamp(x + k, 0, w - 1);
                acc += kernel[static_cast<std::size_t>(k + radius)] * image.at(xx, y);
            }
            tmp.at(x, y) = static_cast<float>(acc);
        }
    }
    ImageGrid out(w, h);
    out.spacing = image.spacing;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const int yy = std::clamp(y + k, 0, h - 1);
                acc += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(x, yy);
            }
            out.at(x, y) = static_cast<float>(acc);
        }
    }
    return out;
}

void apply_multiplicative_speckle(ImageGrid& image, double strength, Rng& rng) {
    for (float& p : image.pixels()) {
        const double factor = std::max(0.0, 1.0 + strength * rng.normal());
        p = static_cast<float>(p * factor);
    }
}

std::string make_id(std::uint64_t seed, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04llx_%05d", static_cast<unsigned long long>(seed & 0xffff),
                  index);
    return std::string(buf);
}

}  // namespace

ImageGrid style_shift(const ImageGrid& image, const StyleParams& style, std::uint64_t seed) {
    style.validate();
    if (style.is_identity()) return image;

    ImageGrid out = image;
    if (style.blur_sigma > 0.0) out = gaussian_blur(out, style.blur_sigma);
    if (style.gamma != 1.0) {
        for (float& p : out.pixels()) {
            p = static_cast<float>(std::pow(std::max(0.0f, p), style.gamma));
        }
    }
    if (style.contrast_scale != 1.0) {
        for (float& p : out.pixels()) {
            p = static_cast<float>(0.5 + style.contrast_scale * (p - 0.5));
        }
    }
    if (style.intensity_offset != 0.0) {
        for (float& p : out.pixels()) p = static_cast<float>(p + style.intensity_offset);
    }
    if (style.speckle_strength > 0.0) {
        Rng rng(seed);
        apply_multiplicative_speckle(out, style.speckle_strength, rng);
    }
    out.clamp01();
    return out;
}

namespace {

// Blob scene: geometry from `geom`, truth written into `landmarks`.
ImageGrid render_detection_scene(const SceneSpec& spec, Rng geom, std::vector<Point>& landmarks) {
    const int size = spec.image_size;
    const double jitter = spec.geometry_jitter * size;
    const double margin = std::max(3.0, 0.08 * size);
    landmarks.clear();
    for (int k = 0; k < spec.num_landmarks; ++k) {
        const double base_y = (k + 0.5) / spec.num_landmarks * size;
        const double base_x = 0.5 * size;
        Point p;
        p.x = std::clamp(base_x + geom.uniform(-2.0 * jitter, 2.0 * jitter), margin,
                         size - 1 - margin);
        p.y = std::clamp(base_y + geom.uniform(-jitter, jitter), margin, size - 1 - margin);
        landmarks.push_back(p);
    }

    const double blob_sigma = std::clamp(size / 25.0, 1.5, 3.5);
    ImageGrid img(size, size, 0.10f);
    for (const Point& p : landmarks) {
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double d2 = (x - p.x) * (x - p.x) + (y - p.y) * (y - p.y);
                img.at(x, y) += static_cast<float>(
                    0.85 * std::exp(-0.5 * d2 / (blob_sigma * blob_sigma)));
            }
        }
    }
    return img;
}

// Two bright interface bands, truth mask = full complex between them.
ImageGrid render_segmentation_scene(const SceneSpec& spec, Rng geom, ImageGrid& mask) {
    const int size = spec.image_size;
    const int lo = spec.resolved_band_min(), hi = spec.resolved_band_max();
    const double amp = spec.geometry_jitter * size;
    const double phase1 = geom.uniform(0.0, 2.0 * M_PI);
    const double phase2 = geom.uniform(0.0, 2.0 * M_PI);
    const double waves = geom.uniform(1.0, 2.0);
    const int band_thickness = std::max(1, size / 32);

    ImageGrid img(size, size, 0.08f);
    mask = ImageGrid(size, size, 0.0f);
    for (int x = 0; x < size; ++x) {
        const double u = static_cast<double>(x) / size;
        int top = static_cast<int>(std::lround(lo + amp * std::sin(2.0 * M_PI * waves * u + phase1)));
        int bottom =
            static_cast<int>(std::lround(hi + amp * std::sin(2.0 * M_PI * waves * u + phase2)));
        top = std::clamp(top, 1, size - 5);
        bottom = std::clamp(bottom, top + 3, size - 2);
        for (int y = top; y <= bottom; ++y) {
            mask.at(x, y) = 1.0f;
            img.at(x, y) = 0.35f;
        }
        for (int t = 0; t < band_thickness; ++t) {
            if (top + t <= bottom) img.at(x, top + t) = 0.9f;
            if (bottom - t >= top) img.at(x, bottom - t) = 0.8f;
        }
    }
    return img;
}

}  // namespace

std::vector<AnnotatedSample> generate_dataset(const SceneSpec& spec, const StyleParams& style,
                                              int count, std::uint64_t seed, Domain domain) {
    spec.validate();
    style.validate();
    if (count < 1) throw ConfigError("generate_dataset: count must be >= 1");

    std::vector<AnnotatedSample> samples;
    samples.reserve(static_cast<std::size_t>(count));
    Rng root(seed);
    for (int i = 0; i < count; ++i) {
        AnnotatedSample sample;
        sample.task = spec.task;
        sample.domain = domain;
        sample.id = make_id(seed, i);

        Rng geom = root.fork(static_cast<std::uint64_t>(i), 0);
        ImageGrid scene;
        if (spec.task == Task::detection) {
            scene = render_detection_scene(spec, geom, sample.landmarks);
        } else {
            scene = render_segmentation_scene(spec, geom, sample.mask);
        }

        // Baseline speckle is part of the scene, not the style: identical for
        // every StyleParams so truth/style separation holds.
        Rng speckle = Rng(spec.speckle_seed).fork(static_cast<std::uint64_t>(i), 1);
        apply_multiplicative_speckle(scene, 0.12, speckle);
        scene.clamp01();

        const std::uint64_t style_seed = root.fork(static_cast<std::uint64_t>(i), 2).next_u64();
        sample.image = style_shift(scene, style, style_seed);
        samples.push_back(std::move(sample));
    }
    return samples;
}

void write_dataset(const std::filesystem::path& root, const std::vector<AnnotatedSample>& samples) {
    for (const AnnotatedSample& s : samples) {
        const auto dir = root / to_string(s.domain);
        std::filesystem::create_directories(dir);
        write_png_gray8(dir / (s.id + ".png"), s.image);

        nlohmann::json meta;
        meta["id"] = s.id;
        meta["domain"] = to_string(s.domain);
        meta["task"] = to_string(s.task);
        meta["spacing_mm"] = {{"x", s.image.spacing.x_mm}, {"y", s.image.spacing.y_mm}};
        if (s.task == Task::detection) {
            nlohmann::json pts = nlohmann::json::array();
            for (const Point& p : s.landmarks) pts.push_back({p.x, p.y});
            meta["landmarks"] = pts;
        } else {
            meta["mask"] = {{"width", s.mask.width()},
                            {"height", s.mask.height()},
                            {"rle", rle_encode_mask(s.mask)}};
        }
        save_json_file(dir / (s.id + ".json"), meta);
    }
}

std::vector<AnnotatedSample> read_dataset(const std::filesystem::path& root, Domain domain) {
    const auto dir = root / to_string(domain);
    if (!std::filesystem::is_directory(dir)) {
        throw ConfigError("read_dataset: missing directory " + dir.string());
    }
    std::vector<std::filesystem::path> sidecars;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".json") sidecars.push_back(entry.path());
    }
    std::sort(sidecars.begin(), sidecars.end());

    std::vector<AnnotatedSample> samples;
    for (const auto& sidecar : sidecars) {
        nlohmann::json meta = load_json_file(sidecar);
        AnnotatedSample s;
        s.id = meta.at("id").get<std::string>();
        s.domain = domain_from_string(meta.at("domain").get<std::string>());
        s.task = task_from_string(meta.at("task").get<std::string>());
        s.image = read_png_gray8(dir / (s.id + ".png"));
        s.image.spacing.x_mm = meta.at("spacing_mm").at("x").get<double>();
        s.image.spacing.y_mm = meta.at("spacing_mm").at("y").get<double>();
        if (s.task == Task::detection) {
            for (const auto& p : meta.at("landmarks")) {
                s.landmarks.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
            }
        } else {
            const auto& m = meta.at("mask");
            s.mask = rle_decode_mask(m.at("rle").get<std::vector<std::int64_t>>(),
                                     m.at("width").get<int>(), m.at("height").get<int>());
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace salign::synth
