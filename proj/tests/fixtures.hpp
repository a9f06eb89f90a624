// SPDX-License-Identifier: Apache-2.0
//
// Tiny datasets and model configs shared by the slower tests.

#pragma once

#include <filesystem>

#include "som/model.hpp"
#include "som/scenegen.hpp"

namespace som::fixture {

inline std::filesystem::path temp_dir(const std::string& name) {
  std::filesystem::path p = std::filesystem::temp_directory_path() / ("som_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

inline ScenarioConfig tiny_scenario(int snapshots, std::uint64_t seed = 3) {
  ScenarioConfig c = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kLow, BandConfig::mmwave());
  c.road_length_m = 100.0;
  c.vehicle_count = ScenarioConfig::default_vehicle_count(c.vtd, c.road_length_m);
  c.snapshots = snapshots;
  c.seed = seed;
  c.sensors.image_width = 16;
  c.sensors.image_height = 8;
  c.sensors.lidar_azimuth_steps = 16;
  return c;
}

inline std::filesystem::path tiny_dataset(const std::string& name, int snapshots, std::uint64_t seed = 3) {
  const auto dir = temp_dir(name);
  GenerateOptions opt;
  opt.threads = 1;
  generate_dataset(tiny_scenario(snapshots, seed), dir, opt);
  return dir;
}

inline ModelConfig tiny_model(Variant v = Variant::kFull) {
  ModelConfig m;
  m.encoders.image_width = 16;
  m.encoders.image_height = 8;
  m.encoders.image_dim = 8;
  m.encoders.image_heads = 2;
  m.encoders.lidar_dim = 8;
  m.encoders.lidar_width = 8;
  m.encoders.lidar_centroids = {8, 4};
  m.encoders.lidar_group_size = {4, 4};
  m.encoders.radar_dim = 8;
  m.encoders.radar_width = 8;
  m.backbone.d_model = 16;
  m.backbone.n_heads = 2;
  m.backbone.ffn_width = 16;
  m.backbone.max_seq_len = 96;
  m.backbone.lora_rank = 2;
  m.backbone.lora_alpha = 4;
  m.heads.width = 16;
  m.variant = v;
  return m;
}

}  // namespace som::fixture
