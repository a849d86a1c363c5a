// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/pipeline/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "salign/core/errors.hpp"
#include "salign/metrics/metrics.hpp"

namespace salign::pipeline {

namespace {

constexpr int kWidth = 640, kHeight = 420;
constexpr int kMarginLeft = 70, kMarginRight = 30, kMarginTop = 50, kMarginBottom = 60;
const char* kSeriesColors[] = {"#4878cf", "#d65f5f", "#6acc65", "#956cb4"};

struct Range {
    double lo = 0.0, hi = 1.0;
    double map(double v, double pix_lo, double pix_hi) const {
        if (hi == lo) return 0.5 * (pix_lo + pix_hi);
        return pix_lo + (v - lo) / (hi - lo) * (pix_hi - pix_lo);
    }
};

Range nice_range(std::span<const double> values, bool include_zero = false) {
    Range r;
    if (values.empty()) return r;
    r.lo = *std::min_element(values.begin(), values.end());
    r.hi = *std::max_element(values.begin(), values.end());
    if (include_zero) r.lo = std::min(r.lo, 0.0);
    const double pad = (r.hi - r.lo) * 0.08 + 1e-12;
    r.lo -= pad;
    r.hi += pad;
    return r;
}

void open_svg(std::ostringstream& svg, const std::string& title) {
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"26\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
}

void write_file(const std::filesystem::path& path, const std::ostringstream& svg) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("svg: cannot open " + path.string());
    out << svg.str() << "</svg>\n";
}

void axes(std::ostringstream& svg, const std::string& x_label, const std::string& y_label,
          const Range& xr, const Range& yr) {
    svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kHeight - kMarginBottom << "\" x2=\""
        << kWidth - kMarginRight << "\" y2=\"" << kHeight - kMarginBottom
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft
        << "\" y2=\"" << kHeight - kMarginBottom << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << (kMarginLeft + kWidth - kMarginRight) / 2 << "\" y=\""
        << kHeight - 18 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"12\">" << x_label << "</text>\n";
    svg << "<text x=\"20\" y=\"" << (kMarginTop + kHeight - kMarginBottom) / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
        << "transform=\"rotate(-90 20 " << (kMarginTop + kHeight - kMarginBottom) / 2 << ")\">"
        << y_label << "</text>\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g / %.3g", xr.lo, xr.hi);
    svg << "<text x=\"" << kWidth - kMarginRight << "\" y=\"" << kHeight - kMarginBottom + 16
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << buf
        << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.3g / %.3g", yr.lo, yr.hi);
    svg << "<text x=\"" << kMarginLeft + 4 << "\" y=\"" << kMarginTop + 10
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << buf << "</text>\n";
}

}  // namespace

void write_bar_chart_svg(const std::filesystem::path& path, const std::string& title,
                         const std::vector<std::string>& group_labels,
                         const std::vector<std::string>& series_names,
                         const std::vector<std::vector<double>>& values) {
    if (values.size() != series_names.size()) {
        throw ArgumentError("write_bar_chart_svg: one value row per series required");
    }
    std::vector<double> flat;
    for (const auto& row : values) {
        if (row.size() != group_labels.size()) {
            throw ArgumentError("write_bar_chart_svg: row length must match group count");
        }
        flat.insert(flat.end(), row.begin(), row.end());
    }
    const Range yr = nice_range(flat, /*include_zero=*/true);

    std::ostringstream svg;
    open_svg(svg, title);
    axes(svg, "", "", {0, 1}, yr);

    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double group_w = plot_w / group_labels.size();
    const double bar_w = group_w * 0.7 / values.size();
    for (std::size_t g = 0; g < group_labels.size(); ++g) {
        for (std::size_t s = 0; s < values.size(); ++s) {
            const double v = values[s][g];
            const double x = kMarginLeft + g * group_w + group_w * 0.15 + s * bar_w;
            const double y0 = yr.map(0.0, kHeight - kMarginBottom, kMarginTop);
            const double y1 = yr.map(v, kHeight - kMarginBottom, kMarginTop);
            svg << "<rect x=\"" << x << "\" y=\"" << std::min(y0, y1) << "\" width=\""
                << bar_w * 0.9 << "\" height=\"" << std::abs(y1 - y0) << "\" fill=\""
                << kSeriesColors[s % 4] << "\"/>\n";
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.1f", v);
            svg << "<text x=\"" << x + bar_w * 0.45 << "\" y=\"" << std::min(y0, y1) - 4
                << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
                << buf << "</text>\n";
        }
        svg << "<text x=\"" << kMarginLeft + g * group_w + group_w / 2 << "\" y=\""
            << kHeight - kMarginBottom + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
            << group_labels[g] << "</text>\n";
    }
    for (std::size_t s = 0; s < series_names.size(); ++s) {
        svg << "<rect x=\"" << kMarginLeft + 10 + 130 * static_cast<int>(s) << "\" y=\"34\" "
            << "width=\"12\" height=\"12\" fill=\"" << kSeriesColors[s % 4] << "\"/>\n"
            << "<text x=\"" << kMarginLeft + 26 + 130 * static_cast<int>(s)
            << "\" y=\"44\" font-family=\"sans-serif\" font-size=\"12\">" << series_names[s]
            << "</text>\n";
    }
    write_file(path, svg);
}

void write_scatter_svg(const std::filesystem::path& path, const std::string& title,
                       std::span<const double> x, std::span<const double> y,
                       const std::string& x_label, const std::string& y_label,
                       bool identity_line) {
    if (x.size() != y.size()) throw ArgumentError("write_scatter_svg: length mismatch");
    std::vector<double> all(x.begin(), x.end());
    all.insert(all.end(), y.begin(), y.end());
    Range r = nice_range(all);

    std::ostringstream svg;
    open_svg(svg, title);
    axes(svg, x_label, y_label, r, r);
    if (identity_line) {
        svg << "<line x1=\"" << r.map(r.lo, kMarginLeft, kWidth - kMarginRight) << "\" y1=\""
            << r.map(r.lo, kHeight - kMarginBottom, kMarginTop) << "\" x2=\""
            << r.map(r.hi, kMarginLeft, kWidth - kMarginRight) << "\" y2=\""
            << r.map(r.hi, kHeight - kMarginBottom, kMarginTop)
            << "\" stroke=\"#aaaaaa\" stroke-dasharray=\"5,4\"/>\n";
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        svg << "<circle cx=\"" << r.map(x[i], kMarginLeft, kWidth - kMarginRight) << "\" cy=\""
            << r.map(y[i], kHeight - kMarginBottom, kMarginTop)
            << "\" r=\"3.5\" fill=\"#4878cf\" fill-opacity=\"0.75\"/>\n";
    }
    write_file(path, svg);
}

void write_bland_altman_svg(const std::filesystem::path& path, const std::string& title,
                            std::span<const double> a, std::span<const double> b) {
    const metrics::BlandAltman ba = metrics::bland_altman(a, b);
    std::vector<double> means(a.size()), diffs(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        means[i] = 0.5 * (a[i] + b[i]);
        diffs[i] = a[i] - b[i];
    }
    Range xr = nice_range(means);
    std::vector<double> yvals = diffs;
    yvals.push_back(ba.loa_low);
    yvals.push_back(ba.loa_high);
    Range yr = nice_range(yvals);

    std::ostringstream svg;
    open_svg(svg, title);
    axes(svg, "mean of methods", "difference", xr, yr);
    auto hline = [&](double v, const char* color, const char* dash) {
        svg << "<line x1=\"" << kMarginLeft << "\" y1=\""
            << yr.map(v, kHeight - kMarginBottom, kMarginTop) << "\" x2=\""
            << kWidth - kMarginRight << "\" y2=\""
            << yr.map(v, kHeight - kMarginBottom, kMarginTop) << "\" stroke=\"" << color
            << "\" stroke-dasharray=\"" << dash << "\"/>\n";
    };
    hline(ba.bias, "#d65f5f", "0");
    hline(ba.loa_low, "#888888", "6,4");
    hline(ba.loa_high, "#888888", "6,4");
    for (std::size_t i = 0; i < means.size(); ++i) {
        svg << "<circle cx=\"" << xr.map(means[i], kMarginLeft, kWidth - kMarginRight)
            << "\" cy=\"" << yr.map(diffs[i], kHeight - kMarginBottom, kMarginTop)
            << "\" r=\"3.5\" fill=\"#4878cf\" fill-opacity=\"0.75\"/>\n";
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "bias %.3f, sd %.3f, loa [%.3f, %.3f]", ba.bias, ba.sd,
                  ba.loa_low, ba.loa_high);
    svg << "<text x=\"" << kWidth - kMarginRight << "\" y=\"" << kMarginTop - 6
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << buf
        << "</text>\n";
    write_file(path, svg);
}

}  // namespace salign::pipeline
