// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace salign::pipeline {

// Minimal static SVG plots for run reports.

void write_bar_chart_svg(const std::filesystem::path& path, const std::string& title,
                         const std::vector<std::string>& group_labels,
                         const std::vector<std::string>& series_names,
                         const std::vector<std::vector<double>>& values);

void write_scatter_svg(const std::filesystem::path& path, const std::string& title,
                       std::span<const double> x, std::span<const double> y,
                       const std::string& x_label, const std::string& y_label,
                       bool identity_line = true);

void write_bland_altman_svg(const std::filesystem::path& path, const std::string& title,
                            std::span<const double> a, std::span<const double> b);

}  // namespace salign::pipeline
