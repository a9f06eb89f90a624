// SPDX-License-Identifier: Apache-2.0
//
// Warm-up + cosine schedule, AdamW, the staged training loop with late
// adapter activation, checkpointing and few-shot fine-tuning.

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "som/metrics.hpp"
#include "som/model.hpp"

namespace som {

struct TrainConfig {
  int batch_size = 24;
  int epochs = 100;
  int warmup_epochs = 3;
  int lora_activation_epoch = 10;  // adapters switch on at the start of this (0-based) epoch
  double lr_max = 1e-5;
  double lr_warmup_start = 1e-6;
  double lr_min = 5e-7;
  double cosine_period_epochs = 80;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;  // global norm, <= 0 disables
  std::uint64_t seed = 0;
  bool eval_train_each_epoch = false;

  void validate() const;
};

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

double lr_at(double epoch, const TrainConfig& cfg);

class AdamW {
 public:
  explicit AdamW(const TrainConfig& cfg) : cfg_(cfg) {}
  // Clips, then updates every trainable parameter; returns the pre-clip norm.
  double step(nn::ParameterStore& store, double lr);

 private:
  TrainConfig cfg_;
  std::map<std::string, long> steps_;
};

double global_grad_norm(const nn::ParameterStore& store);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;  // at the first step of the epoch
  double train_loss = 0.0;
  double eval_train_loss = -1.0;
  double val_loss = 0.0;
  MetricsReport val;
  std::size_t trainable = 0;
  bool lora_active = false;
};

Json to_json(const EpochLog& e);

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints + metrics.jsonl
  int lora_start_epoch = -1;                     // -1: from TrainConfig
  const std::vector<Sample>* mix = nullptr;      // interleaved 1:1 with the primary samples
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double initial_train_loss = 0.0;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

// Trains in place. `val` may be empty (no best checkpoint then).
TrainResult train_model(Model& model, const std::vector<Sample>& train, const std::vector<Sample>& val,
                        const TrainConfig& cfg, const TrainOptions& options = {});

// Mean training-mode-free loss over samples.
double mean_loss(Model& model, const std::vector<Sample>& samples);

struct TrainRun {
  TrainResult result;
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
};

// Loads splits, trains, writes best/ and final/ checkpoints, metrics.jsonl and
// resolved_config.json under out_dir.
TrainRun train(const std::filesystem::path& dataset_dir, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
               const std::filesystem::path& out_dir, int threads = 0);

std::size_t few_shot_count(double fraction, std::size_t train_size);
std::vector<std::size_t> few_shot_subset(const std::vector<std::size_t>& train, double fraction, std::uint64_t seed);

struct FineTuneResult {
  std::size_t samples_used = 0;
  std::size_t mix_samples_used = 0;
  EvalResult zero_shot;
  EvalResult result;
};

// Fine-tunes with adapters on from the first epoch, evaluates on the target test split.
FineTuneResult fine_tune_few_shot(Model& model, const Dataset& target, double fraction, const TrainConfig& cfg,
                                  const Dataset* mix = nullptr, int threads = 0,
                                  const std::vector<Sample>* target_test = nullptr);

}  // namespace som
