// SPDX-License-Identifier: Apache-2.0
//
// The full network: encoders -> fusion -> backbone -> heads, ablation
// variants, and checkpoint directories.

#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "som/backbone.hpp"
#include "som/config_io.hpp"
#include "som/dataset.hpp"
#include "som/encoders.hpp"
#include "som/fusion.hpp"
#include "som/heads.hpp"

namespace som {

enum class Variant {
  kFull,
  kCameraOnly,
  kLidarOnly,
  kRadarOnly,
  kNoPrompt,
  kNoBackbone,
  kFrozenBackbone,
  kNoPretrain,
};
std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
const std::vector<Variant>& all_variants();

struct ModelConfig {
  EncoderConfig encoders;
  EcaConfig eca;
  BackboneConfig backbone;
  HeadsConfig heads;
  LossConfig loss;
  Variant variant = Variant::kFull;
  std::string pretrained_backbone;  // checkpoint dir, empty = random init
  std::uint64_t init_seed = 1;

  void validate() const;
  FusionShape fusion_shape() const;
  bool uses_backbone() const { return variant != Variant::kNoBackbone; }
  bool uses_prompt() const { return uses_backbone() && variant != Variant::kNoPrompt; }
  bool uses_lora() const { return uses_backbone() && variant != Variant::kFrozenBackbone; }
  bool uses_modality(Modality m) const;
};

Json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const Json& j);

// Weight-independent inputs for one snapshot, cached across epochs.
struct Sample {
  std::size_t index = 0;
  std::array<ImageInput, 2> image;  // [tx, rx]
  std::array<LidarInput, 2> lidar;
  std::array<RadarInput, 2> radar;
  std::vector<int> tokens;
  Targets targets;
  MultipathSet paths;
};

Sample prepare_sample(const SnapshotRecord& record, const SnapshotFrames& frames, const ModelConfig& cfg);
std::vector<Sample> prepare_samples(const Dataset& dataset, const std::vector<std::size_t>& indices,
                                    const ModelConfig& cfg, int threads = 0);
// Raises CompatibilityError when the dataset cannot feed this model.
void check_compatible(const ModelConfig& cfg, const Dataset& dataset);

class Model {
 public:
  explicit Model(ModelConfig cfg, bool load_pretrained = true);

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }

  bool lora_active() const { return lora_active_; }
  // Turns the adapters on (ignored by variants without LoRA) and refreshes flags.
  void set_lora_active(bool active);
  // Trainable flags from the variant and adapter state.
  void apply_trainable();

  nn::Var fused_feature(nn::Graph& g, const Sample& s);
  HeadVars forward(nn::Graph& g, const Sample& s);
  TaskOutputs predict(const Sample& s);

  // Copies backbone.* arrays from another checkpoint directory.
  void load_backbone_from(const std::filesystem::path& checkpoint_dir);

 private:
  ModelConfig cfg_;
  nn::ParameterStore store_;
  bool lora_active_ = false;
};

// Parameters with these prefixes are the frozen base of the backbone.
bool is_backbone_base(const std::string& name);
bool is_lora(const std::string& name);

struct CheckpointState {
  int epoch = 0;
  std::uint64_t seed = 0;
  std::string rng_state;
  double best_val_loss = 0.0;
  Json extra = Json::object();
};

void save_checkpoint(const std::filesystem::path& dir, const Model& model, const CheckpointState& state);
Model load_checkpoint(const std::filesystem::path& dir, CheckpointState* state = nullptr);

}  // namespace som
