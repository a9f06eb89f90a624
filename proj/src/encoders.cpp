// SPDX-License-Identifier: Apache-2.0

#include "som/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "som/layers.hpp"

namespace som {

using namespace nn;

std::string to_string(Modality m) {
  switch (m) {
    case Modality::kImage: return "image";
    case Modality::kLidar: return "lidar";
    case Modality::kRadar: return "radar";
  }
  return "?";
}

std::string to_string(View v) { return v == View::kTx ? "tx" : "rx"; }

int EncoderConfig::image_tokens() const {
  return (image_width / image_patch_size) * (image_height / image_patch_size);
}

void EncoderConfig::validate() const {
  if (image_patch_size < 1 || image_width % image_patch_size != 0 || image_height % image_patch_size != 0)
    throw ConfigError("encoders: image dims must be divisible by the patch size");
  if (image_dim <= 0 || lidar_dim <= 0 || radar_dim <= 0 || lidar_width <= 0 || radar_width <= 0)
    throw ConfigError("encoders: feature widths must be positive");
  if (image_heads < 1 || image_dim % image_heads != 0) throw ConfigError("encoders: image_dim % image_heads != 0");
  if (image_layers < 0) throw ConfigError("encoders: image_layers must be >= 0");
  if (lidar_centroids.empty() || lidar_centroids.size() != lidar_group_size.size() ||
      lidar_centroids.size() != lidar_radius.size())
    throw ConfigError("encoders: lidar level lists must be non-empty and equally long");
  for (std::size_t i = 0; i < lidar_centroids.size(); ++i) {
    if (lidar_centroids[i] < 1 || lidar_group_size[i] < 1 || !(lidar_radius[i] > 0))
      throw ConfigError("encoders: lidar level parameters must be positive");
  }
  if (!(depth_scale_m > 0) || !(coord_scale_m > 0) || !(doppler_scale_mps > 0))
    throw ConfigError("encoders: scales must be positive");
}

// --- preparation ---------------------------------------------------------

ImageInput prepare_image(std::span<const float> depth, std::span<const float> albedo, int height, int width,
                         const EncoderConfig& cfg) {
  const int p = cfg.image_patch_size;
  if (height != cfg.image_height || width != cfg.image_width)
    throw ShapeError("encode_image: grid " + std::to_string(width) + "x" + std::to_string(height) +
                     " does not match the configured " + std::to_string(cfg.image_width) + "x" +
                     std::to_string(cfg.image_height));
  if (p < 1 || height % p != 0 || width % p != 0) throw ShapeError("encode_image: grid not divisible by patch size");
  const std::size_t n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  if (depth.size() != n || albedo.size() != n) throw ShapeError("encode_image: grid buffer size mismatch");
  const int gx = width / p;
  const int gy = height / p;
  ImageInput in;
  in.patches = Tensor(gx * gy, 2 * p * p);
  for (int ty = 0; ty < gy; ++ty) {
    for (int tx = 0; tx < gx; ++tx) {
      double* row = in.patches.row_ptr(ty * gx + tx);
      for (int dy = 0; dy < p; ++dy) {
        for (int dx = 0; dx < p; ++dx) {
          const std::size_t src = static_cast<std::size_t>(ty * p + dy) * width + (tx * p + dx);
          row[dy * p + dx] = depth[src] / cfg.depth_scale_m;
          row[p * p + dy * p + dx] = albedo[src];
        }
      }
    }
  }
  return in;
}

std::vector<std::vector<double>> canonical_points(std::span<const float> points, int stride, bool dedupe) {
  if (stride < 1 || points.size() % static_cast<std::size_t>(stride) != 0)
    throw ShapeError("point array size is not a multiple of " + std::to_string(stride));
  std::vector<std::vector<double>> rows(points.size() / stride);
  for (std::size_t i = 0; i < rows.size(); ++i)
    rows[i].assign(points.begin() + i * stride, points.begin() + (i + 1) * stride);
  std::sort(rows.begin(), rows.end());
  if (dedupe) rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

std::vector<int> farthest_point_sample(const std::vector<Vec3>& pts, int count) {
  const int n = static_cast<int>(pts.size());
  count = std::min(count, n);
  std::vector<int> picked;
  if (count <= 0) return picked;
  int start = 0;
  for (int i = 1; i < n; ++i) {
    if (dot(pts[i], pts[i]) > dot(pts[start], pts[start])) start = i;
  }
  picked.push_back(start);
  std::vector<double> dmin(n, std::numeric_limits<double>::infinity());
  int last = start;
  while (static_cast<int>(picked.size()) < count) {
    int best = -1;
    for (int i = 0; i < n; ++i) {
      const Vec3 d = pts[i] - pts[last];
      dmin[i] = std::min(dmin[i], dot(d, d));
      if (best < 0 || dmin[i] > dmin[best]) best = i;
    }
    picked.push_back(best);
    last = best;
  }
  return picked;
}

LidarInput prepare_lidar(std::span<const float> points, const EncoderConfig& cfg) {
  const auto rows = canonical_points(points, 4, true);
  LidarInput in;
  if (rows.empty()) return in;
  in.empty = false;
  in.point_features = Tensor(static_cast<int>(rows.size()), 1);
  std::vector<Vec3> pos(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    pos[i] = Vec3{rows[i][0], rows[i][1], rows[i][2]} * (1.0 / cfg.coord_scale_m);
    in.point_features.data[i] = rows[i][3];
  }
  for (std::size_t l = 0; l < cfg.lidar_centroids.size(); ++l) {
    const std::vector<int> centres = farthest_point_sample(pos, cfg.lidar_centroids[l]);
    const double r2 = cfg.lidar_radius[l] * cfg.lidar_radius[l];
    const std::size_t k = static_cast<std::size_t>(cfg.lidar_group_size[l]);
    LidarLevel level;
    level.offsets.push_back(0);
    std::vector<double> rel;
    std::vector<std::pair<double, int>> cand;
    for (int c : centres) {
      cand.clear();
      for (int j = 0; j < static_cast<int>(pos.size()); ++j) {
        const Vec3 d = pos[j] - pos[c];
        const double d2 = dot(d, d);
        if (d2 <= r2) cand.emplace_back(d2, j);
      }
      const std::size_t take = std::min(k, cand.size());
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
      for (std::size_t m = 0; m < take; ++m) {
        const Vec3 d = pos[cand[m].second] - pos[c];
        rel.insert(rel.end(), {d.x, d.y, d.z});
        level.gather.push_back(cand[m].second);
      }
      level.offsets.push_back(static_cast<int>(level.gather.size()));
    }
    level.rel = Tensor::from(static_cast<int>(level.gather.size()), 3, std::move(rel));
    in.levels.push_back(std::move(level));
    std::vector<Vec3> next;
    for (int c : centres) next.push_back(pos[c]);
    pos = std::move(next);
  }
  in.final_xyz = Tensor(static_cast<int>(pos.size()), 3);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    double* row = in.final_xyz.row_ptr(static_cast<int>(i));
    row[0] = pos[i].x;
    row[1] = pos[i].y;
    row[2] = pos[i].z;
  }
  return in;
}

RadarInput prepare_radar(std::span<const float> points, const EncoderConfig& cfg) {
  const auto rows = canonical_points(points, 5, false);
  RadarInput in;
  if (rows.empty()) return in;
  in.empty = false;
  const int k = static_cast<int>(rows.size());
  in.features = Tensor(k, 5);
  in.weights = Tensor(1, k);
  double total = 0.0;
  for (const auto& r : rows) total += std::max(r[3], 0.0);
  for (int i = 0; i < k; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    double* f = in.features.row_ptr(i);
    f[0] = r[0] / cfg.coord_scale_m;
    f[1] = r[1] / cfg.coord_scale_m;
    f[2] = r[2] / cfg.coord_scale_m;
    f[3] = std::log1p(std::max(r[3], 0.0));
    f[4] = r[4] / cfg.doppler_scale_mps;
    in.weights.data[static_cast<std::size_t>(i)] = total > 0.0 ? std::max(r[3], 0.0) / total : 1.0 / k;
  }
  return in;
}

// --- weights -------------------------------------------------------------

void init_encoders(ParameterStore& store, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const int p = cfg.image_patch_size;
  nn::init_linear(store, "enc.image.patch", 2 * p * p, cfg.image_dim, rng);
  store.create_normal("enc.image.pos", cfg.image_tokens(), cfg.image_dim, 0.02, rng);
  for (int l = 0; l < cfg.image_layers; ++l)
    nn::init_encoder_block(store, "enc.image.block" + std::to_string(l), cfg.image_dim, 2 * cfg.image_dim, rng);
  nn::init_layer_norm(store, "enc.image.ln", cfg.image_dim);

  const int w = cfg.lidar_width;
  for (std::size_t l = 0; l < cfg.lidar_centroids.size(); ++l) {
    const std::string name = "enc.lidar.sa" + std::to_string(l);
    nn::init_linear(store, name + ".mlp1", 3 + (l == 0 ? 1 : w), w, rng);
    nn::init_linear(store, name + ".mlp2", w, w, rng);
  }
  nn::init_linear(store, "enc.lidar.global", 3 + w, w, rng);
  nn::init_linear(store, "enc.lidar.out", w, cfg.lidar_dim, rng);
  store.create_normal("enc.lidar.empty", 1, cfg.lidar_dim, 0.02, rng);

  const int rw = cfg.radar_width;
  nn::init_linear(store, "enc.radar.mlp1", 5, rw, rng);
  nn::init_linear(store, "enc.radar.mlp2", rw, rw, rng);
  store.create_normal("enc.radar.query", 1, rw, 1.0 / std::sqrt(static_cast<double>(rw)), rng);
  nn::init_attention(store, "enc.radar.xattn", rw, rng);
  nn::init_linear(store, "enc.radar.out", 2 * rw, cfg.radar_dim, rng);
  store.create_normal("enc.radar.empty", 1, cfg.radar_dim, 0.02, rng);
}

// --- forward -------------------------------------------------------------

Var encode_image(Graph& g, ParameterStore& store, const EncoderConfig& cfg, const ImageInput& in) {
  if (in.patches.rows != cfg.image_tokens() || in.patches.cols != 2 * cfg.image_patch_size * cfg.image_patch_size)
    throw ShapeError("encode_image: patch tensor does not match the configuration");
  Var x = nn::linear(g, store, "enc.image.patch", g.constant(in.patches));
  x = add(x, g.param(store.get("enc.image.pos")));
  for (int l = 0; l < cfg.image_layers; ++l)
    x = nn::encoder_block(g, store, "enc.image.block" + std::to_string(l), x, cfg.image_heads);
  return mean_rows(nn::layer_norm(g, store, "enc.image.ln", x));
}

Var encode_lidar(Graph& g, ParameterStore& store, const EncoderConfig& cfg, const LidarInput& in) {
  if (in.empty) return g.param(store.get("enc.lidar.empty"));
  if (in.levels.size() != cfg.lidar_centroids.size()) throw ShapeError("encode_lidar: level count mismatch");
  Var feat = g.constant(in.point_features);
  for (std::size_t l = 0; l < in.levels.size(); ++l) {
    const LidarLevel& level = in.levels[l];
    const std::string name = "enc.lidar.sa" + std::to_string(l);
    Var x = concat_cols({g.constant(level.rel), gather_rows(feat, level.gather)});
    x = relu(nn::linear(g, store, name + ".mlp1", x));
    x = relu(nn::linear(g, store, name + ".mlp2", x));
    feat = group_max(x, level.offsets);
  }
  Var x = relu(nn::linear(g, store, "enc.lidar.global", concat_cols({g.constant(in.final_xyz), feat})));
  return nn::linear(g, store, "enc.lidar.out", max_rows(x));
}

Var encode_radar(Graph& g, ParameterStore& store, const EncoderConfig& cfg, const RadarInput& in) {
  (void)cfg;
  if (in.empty) return g.param(store.get("enc.radar.empty"));
  Var h = relu(nn::linear(g, store, "enc.radar.mlp1", g.constant(in.features)));
  h = relu(nn::linear(g, store, "enc.radar.mlp2", h));
  Var pooled = matmul(g.constant(in.weights), h);
  Var attended = nn::attention(g, store, "enc.radar.xattn", g.param(store.get("enc.radar.query")), h, 1, false);
  return nn::linear(g, store, "enc.radar.out", concat_cols({pooled, attended}));
}

namespace {

ModalityFeature to_feature(Var v, Modality m, View view) {
  ModalityFeature f;
  f.values = v.value().data;
  f.modality = m;
  f.view = view;
  return f;
}

}  // namespace

ModalityFeature encode_image(std::span<const float> depth, std::span<const float> albedo, int height, int width,
                             ParameterStore& store, const EncoderConfig& cfg, View view) {
  Graph g;
  return to_feature(encode_image(g, store, cfg, prepare_image(depth, albedo, height, width, cfg)), Modality::kImage,
                    view);
}

ModalityFeature encode_lidar(std::span<const float> points, ParameterStore& store, const EncoderConfig& cfg,
                             View view) {
  Graph g;
  return to_feature(encode_lidar(g, store, cfg, prepare_lidar(points, cfg)), Modality::kLidar, view);
}

ModalityFeature encode_radar(std::span<const float> points, ParameterStore& store, const EncoderConfig& cfg,
                             View view) {
  Graph g;
  return to_feature(encode_radar(g, store, cfg, prepare_radar(points, cfg)), Modality::kRadar, view);
}

}  // namespace som
