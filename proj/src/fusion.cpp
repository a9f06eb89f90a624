// SPDX-License-Identifier: Apache-2.0

#include "som/fusion.hpp"

#include <cmath>

#include "som/layers.hpp"

namespace som {

using namespace nn;

void EcaConfig::validate() const {
  if (!(gamma > 0)) throw ConfigError("eca: gamma must be > 0");
  if (kernel_override && (*kernel_override < 1 || *kernel_override % 2 == 0))
    throw ConfigError("eca: kernel_override must be odd and >= 1");
}

int EcaConfig::kernel_size(int channels) const {
  validate();
  return kernel_override ? *kernel_override : eca_kernel_size(channels, gamma, b);
}

int eca_kernel_size(int channels, double gamma, double b) {
  if (channels < 1) throw DomainError("eca_kernel_size: channel count must be >= 1");
  if (!(gamma > 0)) throw DomainError("eca_kernel_size: gamma must be > 0");
  const double t = std::log2(static_cast<double>(channels)) / gamma + b / gamma;
  // odd integers are 2m+1; nearest m with halves rounding up
  const double m = std::floor((t - 1.0) / 2.0 + 0.5);
  return std::max(1, static_cast<int>(2 * m + 1));
}

Var eca_attend(Var x, Var kernel) {
  if (kernel.cols() > x.cols()) throw ShapeError("eca_attend: vector narrower than the kernel");
  return mul(x, sigmoid(conv1d_same(x, kernel)));
}

std::vector<double> eca_gates(const std::vector<double>& x, const std::vector<double>& kernel) {
  Graph g;
  if (kernel.size() % 2 == 0) throw ConfigError("eca: kernel size must be odd");
  Var xv = g.constant(Tensor::row(x));
  return sigmoid(conv1d_same(xv, g.constant(Tensor::row(kernel)))).value().data;
}

std::vector<double> eca_attend(const std::vector<double>& x, const std::vector<double>& kernel) {
  Graph g;
  if (kernel.size() % 2 == 0) throw ConfigError("eca: kernel size must be odd");
  return eca_attend(g.constant(Tensor::row(x)), g.constant(Tensor::row(kernel))).value().data;
}

void init_fusion(ParameterStore& store, const FusionShape& shape, const EcaConfig& eca, Rng& rng) {
  const int k = eca.kernel_size(shape.view_width());
  for (const char* v : {"tx", "rx"}) {
    nn::Parameter& p = store.create_normal(std::string("fusion.") + v + ".eca", 1, k, 0.1, rng);
    p.value.data[static_cast<std::size_t>(k / 2)] += 1.0;
  }
  if (shape.fused_width() != shape.d_model) nn::init_linear(store, "fusion.proj", shape.fused_width(), shape.d_model, rng);
}

Var fuse_views(Graph& g, ParameterStore& store, const FusionShape& shape, const std::array<Var, 3>& tx,
               const std::array<Var, 3>& rx) {
  const int widths[3] = {shape.image_dim, shape.lidar_dim, shape.radar_dim};
  for (int i = 0; i < 3; ++i) {
    if (tx[i].graph == nullptr || rx[i].graph == nullptr) throw ShapeError("fuse_views: missing modality feature");
    if (tx[i].rows() != 1 || tx[i].cols() != widths[i] || rx[i].rows() != 1 || rx[i].cols() != widths[i])
      throw ShapeError("fuse_views: modality " + std::to_string(i) + " has the wrong width");
  }
  Var t = eca_attend(concat_cols({tx[0], tx[1], tx[2]}), g.param(store.get("fusion.tx.eca")));
  Var r = eca_attend(concat_cols({rx[0], rx[1], rx[2]}), g.param(store.get("fusion.rx.eca")));
  Var fused = concat_cols({t, r});
  if (shape.fused_width() == shape.d_model) return fused;
  return nn::linear(g, store, "fusion.proj", fused);
}

std::vector<double> fuse_views(const std::array<ModalityFeature, 3>& tx, const std::array<ModalityFeature, 3>& rx,
                               ParameterStore& store, const FusionShape& shape) {
  const Modality order[3] = {Modality::kImage, Modality::kLidar, Modality::kRadar};
  Graph g;
  std::array<Var, 3> tv, rv;
  for (int i = 0; i < 3; ++i) {
    if (tx[i].modality != order[i] || rx[i].modality != order[i] || tx[i].view != View::kTx ||
        rx[i].view != View::kRx)
      throw ShapeError("fuse_views: features out of order");
    tv[i] = g.constant(Tensor::row(tx[i].values));
    rv[i] = g.constant(Tensor::row(rx[i].values));
  }
  return fuse_views(g, store, shape, tv, rv).value().data;
}

}  // namespace som
