// SPDX-License-Identifier: Apache-2.0
//
// Channel-attention fusion of the per-view modality features and the
// projection into the backbone width.

#pragma once

#include <array>
#include <optional>

#include "som/encoders.hpp"

namespace som {

struct EcaConfig {
  double gamma = 2.0;
  double b = 1.0;
  std::optional<int> kernel_override = 3;

  void validate() const;
  int kernel_size(int channels) const;
};

// Nearest odd integer to log2(C)/gamma + b/gamma; exact ties go up, floor 1.
int eca_kernel_size(int channels, double gamma, double b);

// x * sigmoid(conv1d(x, kernel)), zero padded, width preserved.
nn::Var eca_attend(nn::Var x, nn::Var kernel);
std::vector<double> eca_attend(const std::vector<double>& x, const std::vector<double>& kernel);
std::vector<double> eca_gates(const std::vector<double>& x, const std::vector<double>& kernel);

struct FusionShape {
  int image_dim = 128;
  int lidar_dim = 128;
  int radar_dim = 128;
  int d_model = 256;

  int view_width() const { return image_dim + lidar_dim + radar_dim; }
  int fused_width() const { return 2 * view_width(); }
};

// fusion.{tx,rx}.eca kernels, plus fusion.proj when the fused width differs from d_model.
void init_fusion(nn::ParameterStore& store, const FusionShape& shape, const EcaConfig& eca, Rng& rng);

// tx/rx: (image, lidar, radar) features, each 1 x width. Returns 1 x d_model.
nn::Var fuse_views(nn::Graph& g, nn::ParameterStore& store, const FusionShape& shape,
                   const std::array<nn::Var, 3>& tx, const std::array<nn::Var, 3>& rx);

std::vector<double> fuse_views(const std::array<ModalityFeature, 3>& tx, const std::array<ModalityFeature, 3>& rx,
                               nn::ParameterStore& store, const FusionShape& shape);

}  // namespace som
