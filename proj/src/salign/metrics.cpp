// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "salign/core/errors.hpp"

namespace salign::metrics {

DetectionReport detection_metrics(const std::vector<std::vector<Point>>& pred_sets,
                                  const std::vector<std::vector<Point>>& truth_sets,
                                  double radius_px) {
    if (pred_sets.size() != truth_sets.size()) {
        throw ArgumentError("detection_metrics: per-image lists must be parallel");
    }
    DetectionReport report;
    double error_sum = 0.0;
    for (std::size_t img = 0; img < pred_sets.size(); ++img) {
        const auto& preds = pred_sets[img];
        const auto& truths = truth_sets[img];
        report.predicted += static_cast<long>(preds.size());
        report.truth += static_cast<long>(truths.size());

        struct Candidate {
            double distance;
            int pred, truth;
        };
        std::vector<Candidate> candidates;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            for (std::size_t j = 0; j < truths.size(); ++j) {
                const double dist = distance(preds[i], truths[j]);
                if (dist <= radius_px) {
                    candidates.push_back({dist, static_cast<int>(i), static_cast<int>(j)});
                }
            }
        }
        std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            if (a.distance != b.distance) return a.distance < b.distance;
            if (a.pred != b.pred) return a.pred < b.pred;
            return a.truth < b.truth;
        });

        std::vector<bool> pred_used(preds.size(), false), truth_used(truths.size(), false);
        std::vector<MatchedPair> matches;
        for (const Candidate& c : candidates) {
            if (pred_used[static_cast<std::size_t>(c.pred)] ||
                truth_used[static_cast<std::size_t>(c.truth)]) {
                continue;
            }
            pred_used[static_cast<std::size_t>(c.pred)] = true;
            truth_used[static_cast<std::size_t>(c.truth)] = true;
            matches.push_back({c.pred, c.truth, c.distance});
            error_sum += c.distance;
        }
        report.matched += static_cast<long>(matches.size());
        report.matches_per_image.push_back(std::move(matches));
    }

    if (report.truth == 0) {
        throw ConfigError("detection_metrics: no ground-truth landmarks; recall undefined");
    }
    const double precision =
        report.predicted > 0 ? static_cast<double>(report.matched) / report.predicted : 0.0;
    const double recall = static_cast<double>(report.matched) / report.truth;
    report.accuracy_pct = 100.0 * precision;
    report.recall_pct = 100.0 * recall;
    report.f1_pct =
        (precision + recall) > 0.0 ? 100.0 * 2.0 * precision * recall / (precision + recall) : 0.0;
    if (report.matched > 0) report.mean_error_px = error_sum / report.matched;
    return report;
}

std::pair<double, double> dice_iou(const ImageGrid& pred_mask, const ImageGrid& truth_mask) {
    if (!pred_mask.same_shape(truth_mask)) {
        throw ArgumentError("dice_iou: shape mismatch");
    }
    long a = 0, b = 0, inter = 0;
    for (std::size_t i = 0; i < pred_mask.pixels().size(); ++i) {
        const bool pa = pred_mask.pixels()[i] >= 0.5f;
        const bool pb = truth_mask.pixels()[i] >= 0.5f;
        a += pa;
        b += pb;
        inter += (pa && pb);
    }
    if (a == 0 && b == 0) return {1.0, 1.0};
    const double dice = 2.0 * inter / static_cast<double>(a + b);
    const double uni = static_cast<double>(a + b - inter);
    const double iou = uni > 0.0 ? inter / uni : 1.0;
    return {dice, iou};
}

BlandAltman bland_altman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ArgumentError("bland_altman: length mismatch");
    if (a.size() < 2) throw ArgumentError("bland_altman: need at least 2 pairs");
    const auto n = static_cast<long>(a.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] - b[i];
    const double bias = sum / n;
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = (a[i] - b[i]) - bias;
        sq += d * d;
    }
    const double sd = std::sqrt(sq / (n - 1));
    return {bias, sd, bias - 1.96 * sd, bias + 1.96 * sd, n};
}

namespace {

// Continued fraction for the incomplete beta (Lentz).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14, kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw ArgumentError("incomplete_beta: x outside [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

Correlation correlation_r2(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ArgumentError("correlation_r2: length mismatch");
    if (a.size() < 3) throw ArgumentError("correlation_r2: need at least 3 pairs");
    const auto n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) {
        throw DomainError("correlation_r2: zero variance; correlation undefined");
    }
    Correlation result;
    result.r = sab / std::sqrt(saa * sbb);
    result.r = std::clamp(result.r, -1.0, 1.0);
    result.r2 = result.r * result.r;

    const double df = n - 2.0;
    if (std::abs(result.r) >= 1.0) {
        result.p_value = 0.0;
    } else {
        const double t2 = result.r * result.r * df / (1.0 - result.r * result.r);
        result.p_value = incomplete_beta(df / 2.0, 0.5, df / (df + t2));
    }
    return result;
}

AgreementReport agreement_report(std::span<const double> a, std::span<const double> b) {
    AgreementReport report;
    const BlandAltman ba = bland_altman(a, b);
    report.bias = ba.bias;
    report.sd = ba.sd;
    report.loa_low = ba.loa_low;
    report.loa_high = ba.loa_high;
    report.n = ba.n;
    double mad = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mad += std::abs(a[i] - b[i]);
    report.mean_abs_diff = mad / static_cast<double>(a.size());
    if (a.size() >= 3) {
        try {
            const Correlation corr = correlation_r2(a, b);
            report.r = corr.r;
            report.r2 = corr.r2;
            report.p_value = corr.p_value;
        } catch (const DomainError&) {
            report.r = 0.0;
            report.r2 = 0.0;
            report.p_value = 1.0;
        }
    }
    return report;
}

}  // namespace salign::metrics
