// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

#include "salign/metrics/metrics.hpp"
#include "salign/pipeline/config.hpp"

namespace salign::pipeline {

// Stage-tagged failure; partial outputs stay on disk.
class StageError : public std::runtime_error {
  public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error("[stage=" + stage + "] " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

  private:
    std::string stage_;
};

struct RunPaths {
    std::filesystem::path root;
    std::filesystem::path data_train, data_val, data_eval;
    std::filesystem::path checkpoints, alignments, reports, plots;

    static RunPaths at(const std::filesystem::path& root);
    void create_all() const;
};

// Direct prediction on raw target images, no alignment. Detection reports
// accuracy/recall/F1/ME; segmentation reports mean Dice/IoU. Also carries
// the per-image model uncertainties.
nlohmann::json compare_source_only(const evidential::TaskCheckpoint& task,
                                   const std::vector<synth::AnnotatedSample>& targets);

// Runs every stage (data -> train -> calibrate -> source-only -> align ->
// evaluate) and returns the comparison summary. With resume = true, stages
// whose outputs already exist are loaded instead of recomputed.
nlohmann::json run_pipeline(const ExperimentConfig& config, bool resume = false);

// Recomputes reports and plots from stored run artifacts.
nlohmann::json regenerate_reports(const ExperimentConfig& config);

}  // namespace salign::pipeline
