// SPDX-License-Identifier: Apache-2.0

#include "som/model.hpp"

#include <atomic>
#include <mutex>
#include <sstream>
#include <thread>

#include "som/layers.hpp"
#include "som/ndarray.hpp"

namespace som {

using namespace nn;
namespace fs = std::filesystem;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kCameraOnly: return "camera_only";
    case Variant::kLidarOnly: return "lidar_only";
    case Variant::kRadarOnly: return "radar_only";
    case Variant::kNoPrompt: return "no_prompt";
    case Variant::kNoBackbone: return "no_backbone";
    case Variant::kFrozenBackbone: return "frozen_backbone";
    case Variant::kNoPretrain: return "no_pretrain";
  }
  return "?";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {Variant::kFull,       Variant::kCameraOnly,     Variant::kLidarOnly,
                                         Variant::kRadarOnly,  Variant::kNoPrompt,       Variant::kNoBackbone,
                                         Variant::kFrozenBackbone, Variant::kNoPretrain};
  return v;
}

Variant parse_variant(const std::string& s) {
  for (Variant v : all_variants()) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown ablation variant: " + s);
}

bool ModelConfig::uses_modality(Modality m) const {
  switch (variant) {
    case Variant::kCameraOnly: return m == Modality::kImage;
    case Variant::kLidarOnly: return m == Modality::kLidar;
    case Variant::kRadarOnly: return m == Modality::kRadar;
    default: return true;
  }
}

FusionShape ModelConfig::fusion_shape() const {
  return FusionShape{encoders.image_dim, encoders.lidar_dim, encoders.radar_dim, backbone.d_model};
}

void ModelConfig::validate() const {
  encoders.validate();
  eca.validate();
  backbone.validate();
  heads.validate();
  loss.validate(heads.n_paths);
  if (eca.kernel_size(fusion_shape().view_width()) > fusion_shape().view_width())
    throw ConfigError("eca kernel wider than the per-view feature");
}

// --- json ----------------------------------------------------------------

namespace {

template <typename T>
void read_opt(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, _] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

}  // namespace

Json to_json(const ModelConfig& c) {
  Json j;
  const EncoderConfig& e = c.encoders;
  j["encoders"] = {{"image_width", e.image_width},
                   {"image_height", e.image_height},
                   {"image_patch_size", e.image_patch_size},
                   {"image_dim", e.image_dim},
                   {"image_heads", e.image_heads},
                   {"image_layers", e.image_layers},
                   {"depth_scale_m", e.depth_scale_m},
                   {"lidar_dim", e.lidar_dim},
                   {"lidar_width", e.lidar_width},
                   {"lidar_centroids", e.lidar_centroids},
                   {"lidar_group_size", e.lidar_group_size},
                   {"lidar_radius", e.lidar_radius},
                   {"coord_scale_m", e.coord_scale_m},
                   {"radar_dim", e.radar_dim},
                   {"radar_width", e.radar_width},
                   {"doppler_scale_mps", e.doppler_scale_mps}};
  j["eca"] = {{"gamma", c.eca.gamma}, {"b", c.eca.b}};
  j["eca"]["kernel_override"] = c.eca.kernel_override ? Json(*c.eca.kernel_override) : Json(nullptr);
  const BackboneConfig& b = c.backbone;
  j["backbone"] = {{"d_model", b.d_model},         {"n_layers", b.n_layers},   {"n_heads", b.n_heads},
                   {"ffn_width", b.ffn_width},     {"max_seq_len", b.max_seq_len}, {"lora_rank", b.lora_rank},
                   {"lora_alpha", b.lora_alpha}};
  j["heads"] = {{"width", c.heads.width},
                {"dropout", c.heads.dropout},
                {"n_paths", c.heads.n_paths},
                {"tau_max_ns", c.heads.tau_max_ns}};
  j["loss"] = {{"mu", c.loss.mu},
               {"cls_weight", c.loss.cls_weight},
               {"power_weight", c.loss.power_weight},
               {"delay_weight", c.loss.delay_weight}};
  j["variant"] = to_string(c.variant);
  j["pretrained_backbone"] = c.pretrained_backbone;
  j["init_seed"] = c.init_seed;
  return j;
}

ModelConfig model_config_from_json(const Json& j) {
  check_keys(j, {"encoders", "eca", "backbone", "heads", "loss", "variant", "pretrained_backbone", "init_seed"},
             "model config");
  ModelConfig c;
  try {
    if (j.contains("encoders")) {
      const Json& e = j.at("encoders");
      check_keys(e,
                 {"image_width", "image_height", "image_patch_size", "image_dim", "image_heads", "image_layers",
                  "depth_scale_m", "lidar_dim", "lidar_width", "lidar_centroids", "lidar_group_size",
                  "lidar_radius", "coord_scale_m", "radar_dim", "radar_width", "doppler_scale_mps"},
                 "encoders");
      EncoderConfig& o = c.encoders;
      read_opt(e, "image_width", o.image_width);
      read_opt(e, "image_height", o.image_height);
      read_opt(e, "image_patch_size", o.image_patch_size);
      read_opt(e, "image_dim", o.image_dim);
      read_opt(e, "image_heads", o.image_heads);
      read_opt(e, "image_layers", o.image_layers);
      read_opt(e, "depth_scale_m", o.depth_scale_m);
      read_opt(e, "lidar_dim", o.lidar_dim);
      read_opt(e, "lidar_width", o.lidar_width);
      read_opt(e, "lidar_centroids", o.lidar_centroids);
      read_opt(e, "lidar_group_size", o.lidar_group_size);
      read_opt(e, "lidar_radius", o.lidar_radius);
      read_opt(e, "coord_scale_m", o.coord_scale_m);
      read_opt(e, "radar_dim", o.radar_dim);
      read_opt(e, "radar_width", o.radar_width);
      read_opt(e, "doppler_scale_mps", o.doppler_scale_mps);
    }
    if (j.contains("eca")) {
      const Json& e = j.at("eca");
      check_keys(e, {"gamma", "b", "kernel_override"}, "eca");
      read_opt(e, "gamma", c.eca.gamma);
      read_opt(e, "b", c.eca.b);
      if (e.contains("kernel_override")) {
        if (e.at("kernel_override").is_null()) c.eca.kernel_override.reset();
        else c.eca.kernel_override = e.at("kernel_override").get<int>();
      }
    }
    if (j.contains("backbone")) {
      const Json& b = j.at("backbone");
      check_keys(b, {"d_model", "n_layers", "n_heads", "ffn_width", "max_seq_len", "lora_rank", "lora_alpha"},
                 "backbone");
      read_opt(b, "d_model", c.backbone.d_model);
      read_opt(b, "n_layers", c.backbone.n_layers);
      read_opt(b, "n_heads", c.backbone.n_heads);
      read_opt(b, "ffn_width", c.backbone.ffn_width);
      read_opt(b, "max_seq_len", c.backbone.max_seq_len);
      read_opt(b, "lora_rank", c.backbone.lora_rank);
      read_opt(b, "lora_alpha", c.backbone.lora_alpha);
    }
    if (j.contains("heads")) {
      const Json& h = j.at("heads");
      check_keys(h, {"width", "dropout", "n_paths", "tau_max_ns"}, "heads");
      read_opt(h, "width", c.heads.width);
      read_opt(h, "dropout", c.heads.dropout);
      read_opt(h, "n_paths", c.heads.n_paths);
      if (h.contains("tau_max_ns")) c.heads.tau_max_ns = h.at("tau_max_ns").get<double>();
    }
    c.loss.mu.assign(static_cast<std::size_t>(std::max(c.heads.n_paths, 0)), 1.0);
    if (!c.loss.mu.empty()) c.loss.mu[0] = 3.0;
    if (j.contains("loss")) {
      const Json& l = j.at("loss");
      check_keys(l, {"mu", "cls_weight", "power_weight", "delay_weight"}, "loss");
      read_opt(l, "mu", c.loss.mu);
      read_opt(l, "cls_weight", c.loss.cls_weight);
      read_opt(l, "power_weight", c.loss.power_weight);
      read_opt(l, "delay_weight", c.loss.delay_weight);
    }
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    read_opt(j, "pretrained_backbone", c.pretrained_backbone);
    read_opt(j, "init_seed", c.init_seed);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("model config: ") + ex.what());
  }
  c.validate();
  return c;
}

// --- samples -------------------------------------------------------------

Sample prepare_sample(const SnapshotRecord& record, const SnapshotFrames& frames, const ModelConfig& cfg) {
  Sample s;
  s.index = record.index;
  const SensorFrame* views[2] = {&frames.tx, &frames.rx};
  for (int v = 0; v < 2; ++v) {
    const SensorFrame& f = *views[v];
    if (cfg.uses_modality(Modality::kImage))
      s.image[v] = prepare_image(f.depth, f.albedo, f.height, f.width, cfg.encoders);
    if (cfg.uses_modality(Modality::kLidar)) s.lidar[v] = prepare_lidar(f.lidar, cfg.encoders);
    if (cfg.uses_modality(Modality::kRadar)) s.radar[v] = prepare_radar(f.radar, cfg.encoders);
  }
  s.tokens = tokenize_prompt(record.prompt);
  s.targets = make_targets(record.paths, cfg.heads);
  s.paths = record.paths;
  return s;
}

void check_compatible(const ModelConfig& cfg, const Dataset& dataset) {
  const ScenarioConfig& sc = dataset.manifest.scenario;
  if (sc.sensors.image_width != cfg.encoders.image_width || sc.sensors.image_height != cfg.encoders.image_height)
    throw CompatibilityError("dataset images are " + std::to_string(sc.sensors.image_width) + "x" +
                             std::to_string(sc.sensors.image_height) + ", model expects " +
                             std::to_string(cfg.encoders.image_width) + "x" +
                             std::to_string(cfg.encoders.image_height));
  if (sc.n_max != cfg.heads.n_paths)
    throw CompatibilityError("dataset path budget " + std::to_string(sc.n_max) + " != model n_paths " +
                             std::to_string(cfg.heads.n_paths));
}

std::vector<Sample> prepare_samples(const Dataset& dataset, const std::vector<std::size_t>& indices,
                                    const ModelConfig& cfg, int threads) {
  check_compatible(cfg, dataset);
  std::vector<Sample> out(indices.size());
  const int n_threads = std::max(1, std::min<int>(resolve_thread_count(threads), static_cast<int>(indices.size())));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= indices.size()) return;
      try {
        const SnapshotRecord& rec = dataset.record(indices[i]);
        out[i] = prepare_sample(rec, load_frames(dataset, indices[i]), cfg);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = indices.size();
        return;
      }
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

// --- model ---------------------------------------------------------------

bool is_lora(const std::string& name) {
  return name.ends_with(".lora_a") || name.ends_with(".lora_b");
}

bool is_backbone_base(const std::string& name) {
  return name.starts_with("backbone.") && !name.starts_with("backbone.embed.") && !is_lora(name);
}

Model::Model(ModelConfig cfg, bool load_pretrained) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(cfg_.init_seed);
  init_encoders(store_, cfg_.encoders, rng);
  init_fusion(store_, cfg_.fusion_shape(), cfg_.eca, rng);
  init_backbone(store_, cfg_.backbone, rng);
  init_heads(store_, cfg_.backbone.d_model, cfg_.heads, rng);
  store_.create_normal("null.image", 1, cfg_.encoders.image_dim, 0.02, rng);
  store_.create_normal("null.lidar", 1, cfg_.encoders.lidar_dim, 0.02, rng);
  store_.create_normal("null.radar", 1, cfg_.encoders.radar_dim, 0.02, rng);
  if (load_pretrained && !cfg_.pretrained_backbone.empty() && cfg_.variant != Variant::kNoPretrain)
    load_backbone_from(cfg_.pretrained_backbone);
  apply_trainable();
}

void Model::set_lora_active(bool active) {
  lora_active_ = active && cfg_.uses_lora();
  apply_trainable();
}

void Model::apply_trainable() {
  const bool backbone = cfg_.uses_backbone();
  for (auto& [name, p] : store_.all()) {
    bool t = true;
    if (is_lora(name)) t = lora_active_;
    else if (is_backbone_base(name)) t = false;
    else if (name == "backbone.embed.tokens") t = cfg_.uses_prompt();
    else if (name.starts_with("backbone.embed.")) t = backbone;
    else if (name.starts_with("enc.image.")) t = cfg_.uses_modality(Modality::kImage);
    else if (name.starts_with("enc.lidar.")) t = cfg_.uses_modality(Modality::kLidar);
    else if (name.starts_with("enc.radar.")) t = cfg_.uses_modality(Modality::kRadar);
    else if (name == "null.image") t = !cfg_.uses_modality(Modality::kImage);
    else if (name == "null.lidar") t = !cfg_.uses_modality(Modality::kLidar);
    else if (name == "null.radar") t = !cfg_.uses_modality(Modality::kRadar);
    p.trainable = t;
  }
}

Var Model::fused_feature(Graph& g, const Sample& s) {
  std::array<Var, 3> views[2];
  for (int v = 0; v < 2; ++v) {
    views[v][0] = cfg_.uses_modality(Modality::kImage) ? encode_image(g, store_, cfg_.encoders, s.image[v])
                                                        : g.param(store_.get("null.image"));
    views[v][1] = cfg_.uses_modality(Modality::kLidar) ? encode_lidar(g, store_, cfg_.encoders, s.lidar[v])
                                                        : g.param(store_.get("null.lidar"));
    views[v][2] = cfg_.uses_modality(Modality::kRadar) ? encode_radar(g, store_, cfg_.encoders, s.radar[v])
                                                        : g.param(store_.get("null.radar"));
  }
  return fuse_views(g, store_, cfg_.fusion_shape(), views[0], views[1]);
}

HeadVars Model::forward(Graph& g, const Sample& s) {
  Var fused = fused_feature(g, s);
  Var hidden = fused;
  if (cfg_.uses_backbone()) {
    std::optional<Var> prompt;
    if (cfg_.uses_prompt()) prompt = encode_prompt(g, store_, s.tokens);
    hidden = backbone_forward(g, store_, cfg_.backbone, prompt, fused, lora_active_);
  }
  return run_heads(g, store_, cfg_.heads, hidden);
}

TaskOutputs Model::predict(const Sample& s) {
  Graph g(false);
  return to_outputs(forward(g, s));
}

// --- checkpoints ---------------------------------------------------------

namespace {

void write_weights(const fs::path& dir, const ParameterStore& store) {
  fs::create_directories(dir);
  for (const auto& [name, p] : store.all()) {
    const std::uint32_t dims[] = {static_cast<std::uint32_t>(p.value.rows), static_cast<std::uint32_t>(p.value.cols)};
    write_ndar(dir / (name + ".arr"), dims, std::span<const double>(p.value.data));
  }
}

Tensor read_weight(const fs::path& file) {
  const NdArray a = read_ndar(file);
  if (a.dims.size() != 2) throw IoError("weight array is not 2-D: " + file.string());
  return Tensor::from(static_cast<int>(a.dims[0]), static_cast<int>(a.dims[1]), a.values);
}

}  // namespace

void Model::load_backbone_from(const fs::path& checkpoint_dir) {
  const fs::path wdir = checkpoint_dir / "weights";
  if (!fs::is_directory(wdir)) throw IoError("no weights directory in " + checkpoint_dir.string());
  int loaded = 0;
  for (auto& [name, p] : store_.all()) {
    if (!name.starts_with("backbone.")) continue;
    const fs::path file = wdir / (name + ".arr");
    if (!fs::exists(file)) throw CompatibilityError("pretrained backbone lacks " + name);
    Tensor t = read_weight(file);
    if (!t.same_shape(p.value)) throw CompatibilityError("pretrained backbone shape mismatch for " + name);
    p.value = std::move(t);
    ++loaded;
  }
  if (loaded == 0) throw CompatibilityError("no backbone weights found in " + checkpoint_dir.string());
}

void save_checkpoint(const fs::path& dir, const Model& model, const CheckpointState& state) {
  std::error_code ec;
  fs::remove_all(dir / "weights", ec);
  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(model.config()));
  write_weights(dir / "weights", model.params());
  Json s;
  s["epoch"] = state.epoch;
  s["seed"] = state.seed;
  s["rng_state"] = state.rng_state;
  s["best_val_loss"] = state.best_val_loss;
  s["lora_active"] = model.lora_active();
  s["extra"] = state.extra;
  write_json(dir / "state.json", s);
}

Model load_checkpoint(const fs::path& dir, CheckpointState* state) {
  if (!fs::exists(dir / "config.json")) throw IoError("not a checkpoint directory: " + dir.string());
  Model model(model_config_from_json(read_json(dir / "config.json")), false);
  for (auto& [name, p] : model.params().all()) {
    const fs::path file = dir / "weights" / (name + ".arr");
    if (!fs::exists(file)) throw CompatibilityError("checkpoint lacks weight " + name);
    Tensor t = read_weight(file);
    if (!t.same_shape(p.value)) throw CompatibilityError("checkpoint shape mismatch for " + name);
    p.value = std::move(t);
  }
  const Json s = read_json(dir / "state.json");
  model.set_lora_active(s.value("lora_active", false));
  if (state != nullptr) {
    state->epoch = s.value("epoch", 0);
    state->seed = s.value("seed", std::uint64_t{0});
    state->rng_state = s.value("rng_state", std::string());
    state->best_val_loss = s.value("best_val_loss", 0.0);
    state->extra = s.value("extra", Json::object());
  }
  return model;
}

}  // namespace som
