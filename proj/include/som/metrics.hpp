// SPDX-License-Identifier: Apache-2.0
//
// Classification accuracy and normalised power/delay errors, plus batch
// inference helpers shared by training and evaluation.

#pragma once

#include <string>
#include <vector>

#include "som/config_io.hpp"
#include "som/model.hpp"

namespace som {

struct PathPrediction {
  std::vector<double> power;    // ratios
  std::vector<double> delay_s;  // absolute
};

struct CaseMetrics {
  std::string name;
  std::size_t snapshots = 0;
  double accuracy = 0.0;
  double nmae_power = 0.0;
  double nmse_power = 0.0;
  double nmae_delay = 0.0;
  double nmse_delay = 0.0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double nmae_power = 0.0;
  double nmse_power = 0.0;
  double nmae_delay = 0.0;
  double nmse_delay = 0.0;
  std::size_t snapshots = 0;        // T
  std::size_t skipped_power = 0;    // zero ground-truth denominator
  std::size_t skipped_delay = 0;
  std::vector<CaseMetrics> cases;   // LoS / NLoS breakdown
};

double classification_accuracy(const std::vector<int>& predicted, const std::vector<int>& labels);
int argmax_label(const std::array<double, 2>& los_prob);

// Per-snapshot normalised sums over valid paths, averaged over snapshots.
MetricsReport nmae_nmse(const std::vector<PathPrediction>& pred, const std::vector<MultipathSet>& truth);

// Accuracy + errors + LoS/NLoS breakdown.
MetricsReport compute_metrics(const std::vector<PathPrediction>& pred, const std::vector<int>& predicted_labels,
                              const std::vector<MultipathSet>& truth);

Json to_json(const MetricsReport& r);
std::string format_percent(double fraction);  // 0.9276 -> "92.76%"

struct Prediction {
  std::size_t index = 0;
  TaskOutputs outputs;
  PathPrediction paths;
  int label = 0;
};

struct EvalResult {
  MetricsReport metrics;
  double mean_loss = 0.0;
  std::vector<Prediction> predictions;
};

PathPrediction to_path_prediction(const TaskOutputs& out, double tau_max_s);
// Evaluation mode (no dropout) over prepared samples.
EvalResult evaluate_samples(Model& model, const std::vector<Sample>& samples);

// Per-index mean power/delay over the valid training entries and the majority class.
struct MeanBaseline {
  std::vector<double> power;
  std::vector<double> delay_s;
  int majority_label = 0;
};
MeanBaseline fit_baseline(const std::vector<MultipathSet>& train);
MetricsReport evaluate_baseline(const MeanBaseline& b, const std::vector<MultipathSet>& truth);

}  // namespace som
