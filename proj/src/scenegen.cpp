// SPDX-License-Identifier: Apache-2.0

#include "som/scenegen.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "som/config_io.hpp"
#include "som/ndarray.hpp"

namespace som {
namespace {

constexpr double kTxAntennaHeight = 1.5;
constexpr double kRxAntennaHeight = 6.0;
constexpr double kLaneOffset = 1.75;
constexpr double kBuildingOverhang = 20.0;  // rows extend past both road ends

struct VehicleShape {
  double length, width, height;
};
constexpr VehicleShape kCar{4.5, 1.8, 1.4};
constexpr VehicleShape kTruck{8.0, 2.5, 3.5};

double axis_value(const Vec3& v, int axis) { return axis == 0 ? v.x : (axis == 1 ? v.y : v.z); }

void set_axis(Vec3& v, int axis, double value) {
  if (axis == 0) v.x = value;
  else if (axis == 1) v.y = value;
  else v.z = value;
}

double wrap(double x, double length) { return x - length * std::floor(x / length); }

// Slab test restricted to the open box interior. Returns the parametric
// overlap [t0, t1] of the line a + t*(b-a) with the box; empty when t0 >= t1.
std::pair<double, double> slab(const Box& box, const Vec3& a, const Vec3& d) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double o = axis_value(a, axis);
    const double dir = axis_value(d, axis);
    const double lo = axis_value(box.min, axis);
    const double hi = axis_value(box.max, axis);
    if (dir == 0.0) {
      if (o <= lo || o >= hi) return {1.0, 0.0};
      continue;
    }
    double ta = (lo - o) / dir;
    double tb = (hi - o) / dir;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 >= t1) return {1.0, 0.0};
  }
  return {t0, t1};
}

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal;
  Material material = Material::kNone;
  int box = -1;
};

RayHit cast_ray(const Scene& scene, const Vec3& origin, const Vec3& dir, std::optional<int> exclude,
                bool include_ground) {
  RayHit hit;
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    if (exclude && static_cast<int>(i) == *exclude) continue;
    const Box& box = scene.boxes[i];
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    int entry_axis = -1;
    double entry_sign = 0.0;
    bool miss = false;
    for (int axis = 0; axis < 3 && !miss; ++axis) {
      const double o = axis_value(origin, axis);
      const double dv = axis_value(dir, axis);
      const double lo = axis_value(box.min, axis);
      const double hi = axis_value(box.max, axis);
      if (dv == 0.0) {
        if (o < lo || o > hi) miss = true;
        continue;
      }
      double ta = (lo - o) / dv;
      double tb = (hi - o) / dv;
      double sign = -1.0;
      if (ta > tb) {
        std::swap(ta, tb);
        sign = 1.0;
      }
      if (ta > t0) {
        t0 = ta;
        entry_axis = axis;
        entry_sign = sign;
      }
      t1 = std::min(t1, tb);
      if (t0 > t1) miss = true;
    }
    if (miss || entry_axis < 0 || t0 <= 1e-9 || t0 >= hit.t) continue;
    hit.t = t0;
    hit.normal = Vec3{};
    set_axis(hit.normal, entry_axis, entry_sign);
    hit.material = box.material;
    hit.box = static_cast<int>(i);
  }
  if (include_ground && dir.z < 0.0) {
    const double t = -origin.z / dir.z;
    if (t > 1e-9 && t < hit.t) {
      hit.t = t;
      hit.normal = {0.0, 0.0, 1.0};
      hit.material = Material::kGround;
      hit.box = -1;
    }
  }
  return hit;
}

Vec3 to_sensor_frame(const Pose& pose, const Vec3& p) {
  const Vec3 d = p - pose.position;
  const double c = std::cos(pose.yaw);
  const double s = std::sin(pose.yaw);
  return {c * d.x + s * d.y, -s * d.x + c * d.y, d.z};
}

double path_power(double tx_power_w, double wavelength, double length, double gamma, int bounces) {
  const double friis = wavelength / (4.0 * kPi * length);
  return tx_power_w * friis * friis * std::pow(gamma, 2.0 * bounces);
}

// Intersection of segment a->b with the facet plane, parameter in (0, 1).
std::optional<Vec3> cross_plane(const Facet& f, const Vec3& a, const Vec3& b) {
  const double da = axis_value(a, f.axis) - f.offset;
  const double db = axis_value(b, f.axis) - f.offset;
  if (da == db) return std::nullopt;
  const double t = da / (da - db);
  if (!(t > 0.0 && t < 1.0)) return std::nullopt;
  Vec3 p = a + (b - a) * t;
  set_axis(p, f.axis, f.offset);
  return p;
}

}  // namespace

std::string to_string(ScenarioKind kind) { return kind == ScenarioKind::kUrban ? "urban" : "suburban"; }
std::string to_string(TrafficDensity vtd) { return vtd == TrafficDensity::kLow ? "low" : "high"; }

ScenarioKind parse_scenario_kind(const std::string& s) {
  if (s == "urban") return ScenarioKind::kUrban;
  if (s == "suburban") return ScenarioKind::kSuburban;
  throw ConfigError("unknown scenario kind: " + s);
}

TrafficDensity parse_traffic_density(const std::string& s) {
  if (s == "low") return TrafficDensity::kLow;
  if (s == "high") return TrafficDensity::kHigh;
  throw ConfigError("unknown vtd: " + s);
}

void BandConfig::validate() const {
  if (!(carrier_frequency_hz > 0.0) || !(bandwidth_hz > 0.0))
    throw ConfigError("band: carrier frequency and bandwidth must be positive");
}

void SensorConfig::validate() const {
  if (image_width <= 0 || image_height <= 0) throw ConfigError("sensors: image size must be positive");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw ConfigError("sensors: fov must be in (0, 180)");
  if (!(max_range_m > 0.0)) throw ConfigError("sensors: max range must be positive");
  if (lidar_rings < 1 || lidar_azimuth_steps < 1) throw ConfigError("sensors: lidar sampling must be positive");
  if (!(lidar_max_elevation_deg >= lidar_min_elevation_deg))
    throw ConfigError("sensors: lidar elevation range inverted");
  if (radar_samples_per_face < 1) throw ConfigError("sensors: radar samples per face must be positive");
  if (!(radar_fov_deg > 0.0)) throw ConfigError("sensors: radar fov must be positive");
}

int ScenarioConfig::default_vehicle_count(TrafficDensity vtd, double road_length_m) {
  const double per_100m = vtd == TrafficDensity::kLow ? 4.0 : 16.0;
  return std::max(1, static_cast<int>(std::lround(per_100m * road_length_m / 100.0)));
}

ScenarioConfig ScenarioConfig::make(ScenarioKind kind, TrafficDensity vtd, BandConfig band) {
  ScenarioConfig c;
  c.kind = kind;
  c.vtd = vtd;
  c.band = band;
  if (kind == ScenarioKind::kSuburban) {
    c.buildings.width_m = {8.0, 14.0};
    c.buildings.depth_m = {8.0, 12.0};
    c.buildings.height_m = {4.0, 8.0};
    c.buildings.gap_m = {10.0, 30.0};
    c.buildings.setback_m = 10.0;
  }
  c.vehicle_count = default_vehicle_count(vtd, c.road_length_m);
  return c;
}

void ScenarioConfig::validate() const {
  band.validate();
  sensors.validate();
  if (!(road_length_m > 0.0)) throw ConfigError("scenario: road_length_m must be positive");
  if (vehicle_count < 1) throw ConfigError("scenario: vehicle_count must be >= 1 (the Tx vehicle)");
  if (!(snapshot_interval_s > 0.0)) throw ConfigError("scenario: snapshot_interval_s must be positive");
  if (snapshots < 1) throw ConfigError("scenario: snapshots must be >= 1");
  if (!(vehicle_speed_mps >= 0.0)) throw ConfigError("scenario: vehicle speed must be non-negative");
  if (n_max < 1) throw ConfigError("scenario: n_max must be >= 1");
  if (!(tx_power_w > 0.0)) throw ConfigError("scenario: tx_power_w must be positive");
  if (!(reflection_coefficient > 0.0 && reflection_coefficient <= 1.0))
    throw ConfigError("scenario: reflection coefficient must be in (0, 1]");
  if (!(bs_gap_m > 0.0)) throw ConfigError("scenario: bs_gap_m must be positive");
  const auto& b = buildings;
  if (b.rows_per_side < 0) throw ConfigError("scenario: building rows must be non-negative");
  for (const SizeRange& r : {b.width_m, b.depth_m, b.height_m, b.gap_m}) {
    if (!(r.lo > 0.0) || !(r.hi >= r.lo)) throw ConfigError("scenario: size ranges must be positive and ordered");
  }
  if (!(b.setback_m > kLaneOffset + 2.0)) throw ConfigError("scenario: building setback must clear the road");
  const int lane_a = (vehicle_count + 1) / 2;
  if (road_length_m / lane_a < kCar.length + 0.5) throw ConfigError("scenario: too many vehicles for the road");
}

double material_albedo(Material m) {
  switch (m) {
    case Material::kNone: return 0.0;
    case Material::kGround: return 0.25;
    case Material::kBuilding: return 0.5;
    case Material::kVehicle: return 0.75;
    case Material::kMast: return 1.0;
  }
  return 0.0;
}

bool Box::contains(const Vec3& p) const {
  return p.x > min.x && p.x < max.x && p.y > min.y && p.y < max.y && p.z > min.z && p.z < max.z;
}

void Scene::validate() const {
  for (const Box& b : boxes) {
    if (!(b.max.x > b.min.x && b.max.y > b.min.y && b.max.z > b.min.z))
      throw GeometryError("scene: degenerate box");
  }
  if (!(tx_pose.position.z > 0.0) || !(rx_pose.position.z > 0.0))
    throw GeometryError("scene: antennas must be above ground");
  for (const Box& b : boxes) {
    if (b.contains(tx_pose.position) || b.contains(rx_pose.position))
      throw GeometryError("scene: antenna inside a box");
  }
}

MultipathSet MultipathSet::empty(int n_max) {
  MultipathSet m;
  m.paths.assign(static_cast<std::size_t>(n_max), PathEntry{});
  return m;
}

Vec3 Facet::normal() const {
  Vec3 n;
  set_axis(n, axis, sign);
  return n;
}

Vec3 Facet::mirror(const Vec3& p) const {
  Vec3 m = p;
  set_axis(m, axis, 2.0 * offset - axis_value(p, axis));
  return m;
}

bool Facet::in_front(const Vec3& p) const { return sign * (axis_value(p, axis) - offset) > 1e-12; }

bool Facet::contains(const Vec3& p, double tol) const {
  if (!bounded) return true;
  for (int a = 0; a < 3; ++a) {
    if (a == axis) continue;
    const double v = axis_value(p, a);
    if (v < axis_value(lo, a) - tol || v > axis_value(hi, a) + tol) return false;
  }
  return true;
}

std::vector<Facet> scene_facets(const Scene& scene) {
  std::vector<Facet> facets;
  facets.reserve(1 + 6 * scene.boxes.size());
  if (scene.has_ground) facets.push_back(Facet{-1, 2, 0.0, 1.0, {}, {}, false});
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    const Box& b = scene.boxes[i];
    for (int face = 0; face < 6; ++face) {
      const int axis = face / 2;
      const bool upper = face % 2 == 1;
      Facet f;
      f.box = static_cast<int>(i);
      f.axis = axis;
      f.offset = axis_value(upper ? b.max : b.min, axis);
      f.sign = upper ? 1.0 : -1.0;
      f.lo = b.min;
      f.hi = b.max;
      f.bounded = true;
      facets.push_back(f);
    }
  }
  return facets;
}

bool segment_blocked(const Scene& scene, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  constexpr double kTol = 1e-9;
  for (const Box& box : scene.boxes) {
    const auto [t0, t1] = slab(box, a, d);
    if (t0 >= t1) continue;
    if (std::max(t0, 0.0) < std::min(t1, 1.0) - kTol) return true;
  }
  return false;
}

Scene build_scene(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Scene scene;
  const double length = config.road_length_m;
  const auto& rows = config.buildings;
  const double gap_lo = length / 2.0 - config.bs_gap_m / 2.0;
  const double gap_hi = length / 2.0 + config.bs_gap_m / 2.0;
  const double row_pitch = rows.depth_m.hi + 4.0;

  for (double side : {1.0, -1.0}) {
    for (int row = 0; row < rows.rows_per_side; ++row) {
      const double front = rows.setback_m + row * row_pitch;
      double x = -kBuildingOverhang + rng.uniform(0.0, rows.gap_m.hi);
      while (x < length + kBuildingOverhang) {
        const double w = rng.uniform(rows.width_m.lo, rows.width_m.hi);
        const double depth = rng.uniform(rows.depth_m.lo, rows.depth_m.hi);
        const double h = rng.uniform(rows.height_m.lo, rows.height_m.hi);
        const double gap = rng.uniform(rows.gap_m.lo, rows.gap_m.hi);
        const double y0 = side > 0 ? front : -front - depth;
        const double y1 = side > 0 ? front + depth : -front;
        std::vector<std::pair<double, double>> spans;
        if (side > 0) {
          if (x < gap_lo) spans.emplace_back(x, std::min(x + w, gap_lo));
          if (x + w > gap_hi) spans.emplace_back(std::max(x, gap_hi), x + w);
        } else {
          spans.emplace_back(x, x + w);
        }
        for (const auto& [s0, s1] : spans) {
          if (s1 - s0 < 1.0) continue;
          scene.boxes.push_back(Box{{s0, y0, 0.0}, {s1, y1, h}, {}, Material::kBuilding});
        }
        x += w + gap;
      }
    }
  }

  const double rx_y = rows.setback_m + 2.0;
  scene.rx_pose = Pose{{length / 2.0, rx_y, kRxAntennaHeight}, -kPi / 2.0, -10.0 * kPi / 180.0};
  scene.rx_mast = static_cast<int>(scene.boxes.size());
  scene.boxes.push_back(Box{{length / 2.0 - 0.2, rx_y + 0.3, 0.0},
                            {length / 2.0 + 0.2, rx_y + 0.7, kRxAntennaHeight - 0.6},
                            {},
                            Material::kMast});

  const int lane_a = (config.vehicle_count + 1) / 2;
  const int lane_b = config.vehicle_count / 2;
  for (int lane = 0; lane < 2; ++lane) {
    const int count = lane == 0 ? lane_a : lane_b;
    if (count == 0) continue;
    const double spacing = length / count;
    const bool trucks_fit = spacing >= kTruck.length + 0.5;
    const double jitter = std::max(0.0, (spacing - kTruck.length - 0.5) / 2.0);
    const double y = lane == 0 ? -kLaneOffset : kLaneOffset;
    const double vx = lane == 0 ? config.vehicle_speed_mps : -config.vehicle_speed_mps;
    for (int k = 0; k < count; ++k) {
      const bool is_tx = lane == 0 && k == 0;
      const bool truck = !is_tx && trucks_fit && rng.uniform() < 0.2;
      const VehicleShape shape = truck ? kTruck : kCar;
      const double xc = (k + 0.5) * spacing + (jitter > 0.0 ? rng.uniform(-jitter, jitter) : 0.0);
      if (is_tx) scene.tx_vehicle = static_cast<int>(scene.boxes.size());
      scene.boxes.push_back(Box{{xc - shape.length / 2.0, y - shape.width / 2.0, 0.0},
                                {xc + shape.length / 2.0, y + shape.width / 2.0, shape.height},
                                {vx, 0.0, 0.0},
                                Material::kVehicle});
    }
  }
  const Box& tx = scene.boxes[static_cast<std::size_t>(scene.tx_vehicle)];
  scene.tx_pose = Pose{{tx.center().x, tx.center().y, kTxAntennaHeight}, 0.0, 0.0};
  scene.wrap_length_m = length;
  scene.validate();
  return scene;
}

Scene advance_scene(const Scene& scene, double seconds) {
  Scene out = scene;
  for (std::size_t i = 0; i < out.boxes.size(); ++i) {
    Box& b = out.boxes[i];
    if (b.velocity == Vec3{}) continue;
    const Vec3 c0 = b.center();
    Vec3 c1 = c0 + b.velocity * seconds;
    if (scene.wrap_length_m > 0.0) c1.x = wrap(c1.x, scene.wrap_length_m);
    const Vec3 delta = c1 - c0;
    b.min = b.min + delta;
    b.max = b.max + delta;
    if (static_cast<int>(i) == out.tx_vehicle) out.tx_pose.position = out.tx_pose.position + delta;
  }
  return out;
}

std::vector<TracedPath> enumerate_paths(const Scene& scene, const BandConfig& band, double tx_power_w,
                                        const TraceOptions& options) {
  scene.validate();
  band.validate();
  const Vec3 tx = scene.tx_pose.position;
  const Vec3 rx = scene.rx_pose.position;
  const double lambda = band.wavelength_m();
  const double gamma = options.reflection_coefficient;
  std::vector<TracedPath> out;

  if (!segment_blocked(scene, tx, rx)) {
    const double len = norm(rx - tx);
    out.push_back(TracedPath{{tx, rx}, {}, len, path_power(tx_power_w, lambda, len, gamma, 0)});
  }
  if (options.max_order < 1) return out;

  const std::vector<Facet> facets = scene_facets(scene);
  std::vector<Vec3> images(facets.size());
  for (std::size_t i = 0; i < facets.size(); ++i) images[i] = facets[i].mirror(tx);

  for (std::size_t i = 0; i < facets.size(); ++i) {
    const Facet& f = facets[i];
    if (!f.in_front(tx) || !f.in_front(rx)) continue;
    const auto p = cross_plane(f, images[i], rx);
    if (!p || !f.contains(*p)) continue;
    if (segment_blocked(scene, tx, *p) || segment_blocked(scene, *p, rx)) continue;
    const double len = norm(rx - images[i]);
    out.push_back(TracedPath{{tx, *p, rx}, {static_cast<int>(i)}, len, path_power(tx_power_w, lambda, len, gamma, 1)});
  }
  if (options.max_order < 2) return out;

  for (std::size_t i = 0; i < facets.size(); ++i) {
    const Facet& f1 = facets[i];
    if (!f1.in_front(tx)) continue;
    for (std::size_t j = 0; j < facets.size(); ++j) {
      if (i == j) continue;
      const Facet& f2 = facets[j];
      if (!f2.in_front(rx)) continue;
      const Vec3 image2 = f2.mirror(images[i]);
      const auto p2 = cross_plane(f2, image2, rx);
      if (!p2 || !f2.contains(*p2) || !f1.in_front(*p2)) continue;
      const auto p1 = cross_plane(f1, images[i], *p2);
      if (!p1 || !f1.contains(*p1) || !f2.in_front(*p1)) continue;
      if (segment_blocked(scene, tx, *p1) || segment_blocked(scene, *p1, *p2) || segment_blocked(scene, *p2, rx))
        continue;
      const double len = norm(rx - image2);
      out.push_back(TracedPath{{tx, *p1, *p2, rx},
                               {static_cast<int>(i), static_cast<int>(j)},
                               len,
                               path_power(tx_power_w, lambda, len, gamma, 2)});
    }
  }
  return out;
}

MultipathSet to_multipath_set(std::vector<TracedPath> paths, int n_max, bool los_present) {
  if (n_max < 1) throw DomainError("n_max must be >= 1");
  std::stable_sort(paths.begin(), paths.end(), [](const TracedPath& a, const TracedPath& b) {
    if (a.power_w != b.power_w) return a.power_w > b.power_w;
    return a.length_m < b.length_m;
  });
  MultipathSet set = MultipathSet::empty(n_max);
  set.los_present = los_present;
  const std::size_t kept = std::min(paths.size(), static_cast<std::size_t>(n_max));
  double total = 0.0;
  for (std::size_t i = 0; i < kept; ++i) total += paths[i].power_w;
  set.total_power_w = total;
  set.n_paths = static_cast<int>(kept);
  for (std::size_t i = 0; i < kept; ++i) {
    set.paths[i] = PathEntry{paths[i].power_w / total, paths[i].length_m / kSpeedOfLight, true};
  }
  return set;
}

MultipathSet trace_multipath(const Scene& scene, const BandConfig& band, int n_max, double tx_power_w,
                             const TraceOptions& options) {
  if (n_max < 1) throw DomainError("n_max must be >= 1");
  auto paths = enumerate_paths(scene, band, tx_power_w, options);
  const bool los = std::any_of(paths.begin(), paths.end(), [](const TracedPath& p) { return p.bounces() == 0; });
  return to_multipath_set(std::move(paths), n_max, los);
}

SensorFrame render_sensors(const Scene& scene, const Pose& pose, const SensorConfig& config, std::uint64_t seed,
                           std::optional<int> ego_box) {
  config.validate();
  const Vec3 origin = pose.position;
  if (!(origin.z > 0.0)) throw GeometryError("sensor pose below ground");
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    if (ego_box && static_cast<int>(i) == *ego_box) continue;
    if (scene.boxes[i].contains(origin)) throw GeometryError("sensor pose inside geometry");
  }

  SensorFrame frame;
  frame.height = config.image_height;
  frame.width = config.image_width;
  const auto pixels = static_cast<std::size_t>(frame.height) * static_cast<std::size_t>(frame.width);
  frame.depth.assign(pixels, static_cast<float>(config.max_range_m));
  frame.albedo.assign(pixels, 0.0f);

  const double cy = std::cos(pose.yaw), sy = std::sin(pose.yaw);
  const double cp = std::cos(pose.pitch), sp = std::sin(pose.pitch);
  const Vec3 forward{cp * cy, cp * sy, sp};
  const Vec3 left{-sy, cy, 0.0};
  const Vec3 up = cross(forward, left);
  const Vec3 right = -left;
  const double half = std::tan(config.fov_deg * kPi / 360.0);
  const double aspect = static_cast<double>(frame.height) / frame.width;

  // The camera sees boxes only; the ground plane is background.
  for (int r = 0; r < frame.height; ++r) {
    const double v = (1.0 - 2.0 * (r + 0.5) / frame.height) * half * aspect;
    for (int c = 0; c < frame.width; ++c) {
      const double u = (2.0 * (c + 0.5) / frame.width - 1.0) * half;
      const Vec3 dir = forward + right * u + up * v;  // unit forward component: t is z-depth
      const RayHit hit = cast_ray(scene, origin, dir, ego_box, false);
      if (hit.box < 0 || hit.t > config.max_range_m) continue;
      const std::size_t at = static_cast<std::size_t>(r) * frame.width + c;
      frame.depth[at] = static_cast<float>(hit.t);
      frame.albedo[at] = static_cast<float>(material_albedo(hit.material));
    }
  }

  for (int ring = 0; ring < config.lidar_rings; ++ring) {
    const double elev_deg =
        config.lidar_rings == 1
            ? config.lidar_min_elevation_deg
            : config.lidar_min_elevation_deg +
                  (config.lidar_max_elevation_deg - config.lidar_min_elevation_deg) * ring / (config.lidar_rings - 1);
    const double elev = elev_deg * kPi / 180.0;
    for (int k = 0; k < config.lidar_azimuth_steps; ++k) {
      const double az = pose.yaw + 2.0 * kPi * k / config.lidar_azimuth_steps;
      const Vec3 dir{std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az), std::sin(elev)};
      const RayHit hit = cast_ray(scene, origin, dir, ego_box, scene.has_ground);
      if (hit.material == Material::kNone || hit.t > config.max_range_m) continue;
      const Vec3 local = to_sensor_frame(pose, origin + dir * hit.t);
      const double intensity = material_albedo(hit.material) * std::abs(dot(hit.normal, dir));
      frame.lidar.insert(frame.lidar.end(), {static_cast<float>(local.x), static_cast<float>(local.y),
                                             static_cast<float>(local.z), static_cast<float>(intensity)});
    }
  }

  Rng rng(seed);
  const Vec3 heading{cy, sy, 0.0};
  const double cos_half_fov = std::cos(config.radar_fov_deg * kPi / 360.0);
  const std::vector<Facet> facets = scene_facets(scene);
  for (const Facet& f : facets) {
    if (f.box < 0 || (ego_box && f.box == *ego_box)) continue;
    const Box& box = scene.boxes[static_cast<std::size_t>(f.box)];
    // draw the samples before the visibility test so the stream does not
    // depend on which faces happen to be visible
    std::vector<Vec3> samples;
    for (int s = 0; s < config.radar_samples_per_face; ++s) {
      Vec3 p;
      for (int a = 0; a < 3; ++a) {
        const double value = a == f.axis ? f.offset : rng.uniform(axis_value(f.lo, a), axis_value(f.hi, a));
        set_axis(p, a, value);
      }
      samples.push_back(p);
    }
    if (!f.in_front(origin)) continue;
    double area = 1.0;
    for (int a = 0; a < 3; ++a) {
      if (a != f.axis) area *= axis_value(f.hi, a) - axis_value(f.lo, a);
    }
    for (const Vec3& p : samples) {
      const Vec3 d = p - origin;
      const double dist = norm(d);
      if (dist > config.max_range_m || dist <= 0.0) continue;
      const Vec3 flat{d.x, d.y, 0.0};
      const double flat_norm = norm(flat);
      if (flat_norm > 0.0 && dot(flat, heading) / flat_norm < cos_half_fov) continue;
      if (segment_blocked(scene, origin, p)) continue;
      const Vec3 los = d * (1.0 / dist);
      const double rcs = area / config.radar_samples_per_face * std::abs(dot(f.normal(), los));
      const double doppler = dot(box.velocity, los);
      const Vec3 local = to_sensor_frame(pose, p);
      frame.radar.insert(frame.radar.end(),
                         {static_cast<float>(local.x), static_cast<float>(local.y), static_cast<float>(local.z),
                          static_cast<float>(rcs), static_cast<float>(doppler)});
    }
  }
  return frame;
}

void PropagationPrompt::validate() const {
  for (double v : {carrier_frequency_hz, bandwidth_hz, distance_m, azimuth_deg, elevation_deg}) {
    if (!std::isfinite(v)) throw DomainError("prompt: non-finite field");
  }
  if (!(carrier_frequency_hz > 0.0) || !(bandwidth_hz > 0.0) || !(distance_m > 0.0))
    throw DomainError("prompt: frequency, bandwidth and distance must be positive");
}

PropagationPrompt make_prompt(const Scene& scene, const BandConfig& band) {
  const Vec3 d = scene.rx_pose.position - scene.tx_pose.position;
  PropagationPrompt p;
  p.carrier_frequency_hz = band.carrier_frequency_hz;
  p.bandwidth_hz = band.bandwidth_hz;
  p.distance_m = norm(d);
  p.azimuth_deg = std::atan2(d.y, d.x) * 180.0 / kPi;
  p.elevation_deg = std::atan2(d.z, std::hypot(d.x, d.y)) * 180.0 / kPi;
  return p;
}

SplitSizes split_sizes(std::size_t snapshots) {
  SplitSizes s;
  s.train = snapshots * 3 / 5;
  s.val = snapshots / 5;
  s.test = snapshots - s.train - s.val;
  return s;
}

std::string snapshot_dir_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

std::string format_paths_csv(const MultipathSet& paths) {
  std::string out = "index,power_ratio,delay_ns,valid,los_present,total_power_w\n";
  char buf[256];
  for (std::size_t i = 0; i < paths.paths.size(); ++i) {
    const PathEntry& e = paths.paths[i];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%d,%d,%.17g\n", i, e.power_ratio, e.delay_s * 1e9,
                  e.valid ? 1 : 0, paths.los_present ? 1 : 0, paths.total_power_w);
    out += buf;
  }
  return out;
}

MultipathSet parse_paths_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("paths.csv: empty file");
  MultipathSet set;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw IoError("paths.csv: expected 6 columns, got " + std::to_string(cells.size()));
    try {
      PathEntry e;
      e.power_ratio = std::stod(cells[1]);
      e.delay_s = std::stod(cells[2]) * 1e-9;
      e.valid = std::stoi(cells[3]) != 0;
      set.los_present = std::stoi(cells[4]) != 0;
      set.total_power_w = std::stod(cells[5]);
      set.paths.push_back(e);
      if (e.valid) ++set.n_paths;
    } catch (const std::exception&) {
      throw IoError("paths.csv: malformed row: " + line);
    }
  }
  return set;
}

int resolve_thread_count(int requested) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("SOM_MULTIPATH_THREADS")) n = std::atoi(env);
  }
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, n);
}

DatasetManifest generate_dataset(const ScenarioConfig& config, const std::filesystem::path& out_dir,
                                 const GenerateOptions& options) {
  namespace fs = std::filesystem;
  config.validate();
  std::error_code ec;
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!options.force) throw IoError("output directory not empty (use --force): " + out_dir.string());
    if (!fs::exists(out_dir / "manifest.json"))
      throw IoError("refusing to overwrite a directory that is not a dataset: " + out_dir.string());
    fs::remove_all(out_dir / "snapshots", ec);
    fs::remove(out_dir / "manifest.json", ec);
    fs::remove(out_dir / "resolved_config.json", ec);
  }
  fs::create_directories(out_dir / "snapshots", ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  const Scene base = build_scene(config, config.seed);
  const auto total = static_cast<std::size_t>(config.snapshots);

  auto write_snapshot = [&](std::size_t t) {
    const Scene scene = advance_scene(base, static_cast<double>(t) * config.snapshot_interval_s);
    Rng stream = Rng::derive(config.seed, t);
    const std::uint64_t tx_seed = stream.next_u64();
    const std::uint64_t rx_seed = stream.next_u64();
    const SensorFrame tx = render_sensors(scene, scene.tx_pose, config.sensors, tx_seed, scene.tx_vehicle);
    const SensorFrame rx = render_sensors(scene, scene.rx_pose, config.sensors, rx_seed, scene.rx_mast);
    const MultipathSet paths = trace_multipath(scene, config.band, config.n_max, config.tx_power_w,
                                               TraceOptions{config.reflection_coefficient, 2});
    const fs::path dir = out_dir / "snapshots" / snapshot_dir_name(t);
    fs::create_directories(dir);
    for (const auto& [name, frame] : {std::pair<const char*, const SensorFrame*>{"tx", &tx}, {"rx", &rx}}) {
      const std::string prefix = name;
      const std::uint32_t h = static_cast<std::uint32_t>(frame->height);
      const std::uint32_t w = static_cast<std::uint32_t>(frame->width);
      const std::uint32_t image_dims[] = {h, w};
      write_ndar(dir / (prefix + "_depth.arr"), image_dims, std::span<const float>(frame->depth));
      write_ndar(dir / (prefix + "_albedo.arr"), image_dims, std::span<const float>(frame->albedo));
      const std::uint32_t lidar_dims[] = {static_cast<std::uint32_t>(frame->lidar_points()), 4};
      write_ndar(dir / (prefix + "_lidar.arr"), lidar_dims, std::span<const float>(frame->lidar));
      const std::uint32_t radar_dims[] = {static_cast<std::uint32_t>(frame->radar_points()), 5};
      write_ndar(dir / (prefix + "_radar.arr"), radar_dims, std::span<const float>(frame->radar));
    }
    write_file(dir / "paths.csv", format_paths_csv(paths));
    write_file(dir / "prompt.json", to_json(make_prompt(scene, config.band)).dump(2) + "\n");
  };

  const int threads = std::min<int>(resolve_thread_count(options.threads), static_cast<int>(total));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= total) return;
      try {
        write_snapshot(t);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = total;
        return;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  DatasetManifest manifest;
  manifest.scenario = config;
  manifest.snapshots = total;
  manifest.seed = config.seed;
  const SplitSizes sizes = split_sizes(total);
  for (std::size_t i = 0; i < total; ++i) {
    if (i < sizes.train) manifest.train.push_back(i);
    else if (i < sizes.train + sizes.val) manifest.val.push_back(i);
    else manifest.test.push_back(i);
  }
  write_json(out_dir / "manifest.json", to_json(manifest));
  Json resolved;
  resolved["command"] = "generate";
  resolved["scenario"] = to_json(config);
  write_json(out_dir / "resolved_config.json", resolved);
  return manifest;
}

}  // namespace som
