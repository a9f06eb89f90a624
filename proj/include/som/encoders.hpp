// SPDX-License-Identifier: Apache-2.0
//
// Per-modality feature extractors: a small patch-attention image encoder,
// a two-level set-abstraction point encoder for LiDAR and a dual-stream
// radar encoder (RCS-weighted pooling + learned-query cross attention).
//
// Geometry that does not depend on weights (patching, sorting, farthest
// point sampling, grouping) is done once in prepare_* and can be cached.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "som/autodiff.hpp"

namespace som {

enum class Modality { kImage, kLidar, kRadar };
enum class View { kTx, kRx };
std::string to_string(Modality m);
std::string to_string(View v);

struct EncoderConfig {
  int image_width = 64;
  int image_height = 36;
  int image_patch_size = 4;
  int image_dim = 128;
  int image_heads = 2;
  int image_layers = 1;
  double depth_scale_m = 100.0;

  int lidar_dim = 128;
  int lidar_width = 64;                     // shared MLP width per level
  std::vector<int> lidar_centroids = {64, 16};  // per level
  std::vector<int> lidar_group_size = {16, 16};
  std::vector<double> lidar_radius = {0.25, 0.75};  // in normalised coordinates
  double coord_scale_m = 20.0;

  int radar_dim = 128;
  int radar_width = 64;
  double doppler_scale_mps = 10.0;

  int image_tokens() const;
  void validate() const;
};

struct ModalityFeature {
  std::vector<double> values;
  Modality modality = Modality::kImage;
  View view = View::kTx;
};

struct ImageInput {
  nn::Tensor patches;  // tokens x (2 * patch^2): depth then albedo
};

struct LidarLevel {
  nn::Tensor rel;            // grouped rows x 3, member minus centroid
  std::vector<int> gather;   // grouped row -> row of the previous level
  std::vector<int> offsets;  // group boundaries, size centroids + 1
};

struct LidarInput {
  bool empty = true;
  nn::Tensor point_features;  // M x 1 intensity of the deduplicated cloud
  std::vector<LidarLevel> levels;
  nn::Tensor final_xyz;  // last-level centroids x 3
};

struct RadarInput {
  bool empty = true;
  nn::Tensor features;  // K x 5 per-point inputs
  nn::Tensor weights;   // 1 x K, normalised rcs
};

ImageInput prepare_image(std::span<const float> depth, std::span<const float> albedo, int height, int width,
                         const EncoderConfig& cfg);
LidarInput prepare_lidar(std::span<const float> points, const EncoderConfig& cfg);
RadarInput prepare_radar(std::span<const float> points, const EncoderConfig& cfg);

// Canonical, deduplicated order used by the point encoders (rows of `stride`).
std::vector<std::vector<double>> canonical_points(std::span<const float> points, int stride, bool dedupe);
// Farthest point sampling from the max-norm point; ties go to the lower index.
std::vector<int> farthest_point_sample(const std::vector<Vec3>& pts, int count);

void init_encoders(nn::ParameterStore& store, const EncoderConfig& cfg, Rng& rng);

nn::Var encode_image(nn::Graph& g, nn::ParameterStore& store, const EncoderConfig& cfg, const ImageInput& in);
nn::Var encode_lidar(nn::Graph& g, nn::ParameterStore& store, const EncoderConfig& cfg, const LidarInput& in);
nn::Var encode_radar(nn::Graph& g, nn::ParameterStore& store, const EncoderConfig& cfg, const RadarInput& in);

// Evaluation-mode helpers on raw sensor arrays.
ModalityFeature encode_image(std::span<const float> depth, std::span<const float> albedo, int height, int width,
                             nn::ParameterStore& store, const EncoderConfig& cfg, View view = View::kTx);
ModalityFeature encode_lidar(std::span<const float> points, nn::ParameterStore& store, const EncoderConfig& cfg,
                             View view = View::kTx);
ModalityFeature encode_radar(std::span<const float> points, nn::ParameterStore& store, const EncoderConfig& cfg,
                             View view = View::kTx);

}  // namespace som
