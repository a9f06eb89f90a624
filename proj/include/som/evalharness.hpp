// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint evaluation, prediction files, plot series, the ablation table
// and the few-shot generalization grid.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "som/chanstats.hpp"
#include "som/metrics.hpp"
#include "som/trainer.hpp"

namespace som {

struct EvaluateOutput {
  EvalResult result;
  MetricsReport baseline;
  Json report;
};

// Writes the JSON report to `report` and predictions next to it
// (<report stem>.predictions.csv) when a path is given.
EvaluateOutput evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset_dir,
                        const std::string& split, const std::optional<std::filesystem::path>& report,
                        int threads = 0);

std::filesystem::path predictions_path_for(const std::filesystem::path& report);
std::string format_predictions_csv(const std::vector<Prediction>& preds);
// index -> predicted paths
std::vector<std::pair<std::size_t, PathPrediction>> parse_predictions_csv(const std::string& text);

// Prediction as a multipath set, reusing the ground-truth validity mask.
MultipathSet predicted_set(const PathPrediction& p, const MultipathSet& truth);

// PDP traces, RMS delay spread CDFs, mean normalised |FCF| and capacity bars.
Json channel_plot_data(const std::vector<MultipathSet>& truth, const std::vector<MultipathSet>& predicted,
                       const CapacityConfig& capacity, std::size_t trace_count = 16);

struct AblationSamples {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

struct AblationResult {
  Variant variant = Variant::kFull;
  MetricsReport metrics;
  double final_train_loss = 0.0;
  std::size_t trainable_parameters = 0;  // at the end of training
  bool backbone_bit_identical = false;   // frozen base weights
  bool lora_bit_identical = false;       // adapter weights
};

// Samples must be prepared with a config that uses every modality.
AblationResult run_ablation(Variant variant, const AblationSamples& samples, ModelConfig model_cfg,
                            const TrainConfig& train_cfg,
                            const std::optional<std::filesystem::path>& out_dir = std::nullopt);
Json ablation_table_json(const std::vector<AblationResult>& rows);
std::string ablation_table_csv(const std::vector<AblationResult>& rows);

struct GeneralizationCase {
  std::string name;  // e.g. cross_vtd
  std::filesystem::path target;
};

struct FewShotPoint {
  double fraction = 0.0;
  std::size_t samples = 0;
  MetricsReport metrics;
};

struct GeneralizationResult {
  std::string name;
  MetricsReport zero_shot;
  std::vector<FewShotPoint> points;
};

const std::vector<double>& default_fraction_grid();

// Fine-tunes a fresh copy of the source checkpoint per fraction.
GeneralizationResult run_generalization(const std::filesystem::path& source_checkpoint,
                                        const GeneralizationCase& c, const std::vector<double>& fractions,
                                        const TrainConfig& cfg, int threads = 0);
Json generalization_report_json(const std::vector<GeneralizationResult>& results);

}  // namespace som
