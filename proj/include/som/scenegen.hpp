// SPDX-License-Identifier: Apache-2.0
//
// Parametric V2I street scenes, an image-method multipath oracle, sensor
// stand-ins (depth/albedo camera, ring LiDAR, face-sampled radar) and the
// on-disk dataset writer.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "som/common.hpp"

namespace som {

enum class ScenarioKind { kUrban, kSuburban };
enum class TrafficDensity { kLow, kHigh };

std::string to_string(ScenarioKind kind);
std::string to_string(TrafficDensity vtd);
ScenarioKind parse_scenario_kind(const std::string& s);
TrafficDensity parse_traffic_density(const std::string& s);

struct BandConfig {
  double carrier_frequency_hz = 60e9;
  double bandwidth_hz = 2e9;

  static BandConfig mmwave() { return {60e9, 2e9}; }
  static BandConfig sub6() { return {5.9e9, 20e6}; }

  double wavelength_m() const { return kSpeedOfLight / carrier_frequency_hz; }
  void validate() const;
};

struct SizeRange {
  double lo = 1.0;
  double hi = 1.0;
};

struct BuildingRowConfig {
  int rows_per_side = 1;
  SizeRange width_m{8.0, 20.0};
  SizeRange depth_m{8.0, 15.0};
  SizeRange height_m{12.0, 30.0};
  SizeRange gap_m{2.0, 6.0};
  double setback_m = 8.0;  // distance from road axis to the first row's front
};

struct SensorConfig {
  int image_width = 64;
  int image_height = 36;
  double fov_deg = 90.0;
  double max_range_m = 100.0;
  int lidar_rings = 16;
  double lidar_min_elevation_deg = -15.0;
  double lidar_max_elevation_deg = 15.0;
  int lidar_azimuth_steps = 64;
  int radar_samples_per_face = 4;
  double radar_fov_deg = 120.0;

  void validate() const;
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::kUrban;
  TrafficDensity vtd = TrafficDensity::kLow;
  BandConfig band;
  double road_length_m = 200.0;
  BuildingRowConfig buildings;
  int vehicle_count = 8;
  double vehicle_speed_mps = 10.0;
  double snapshot_interval_s = 0.03333;
  int snapshots = 100;
  std::uint64_t seed = 1;
  double bs_gap_m = 16.0;  // side-street opening the BS mast stands in
  double reflection_coefficient = 0.6;
  double tx_power_w = 1.0;
  int n_max = 6;
  SensorConfig sensors;

  // Kind/VTD dependent defaults (building rows, 4 or 16 vehicles per 100 m).
  static ScenarioConfig make(ScenarioKind kind, TrafficDensity vtd, BandConfig band);
  static int default_vehicle_count(TrafficDensity vtd, double road_length_m);
  void validate() const;
};

enum class Material : int { kNone = 0, kGround = 1, kBuilding = 2, kVehicle = 3, kMast = 4 };

// Grey-level proxy for the RGB channel, in [0, 1].
double material_albedo(Material m);

struct Box {
  Vec3 min;
  Vec3 max;
  Vec3 velocity;
  Material material = Material::kBuilding;

  bool contains(const Vec3& p) const;  // strict interior
  Vec3 center() const { return (min + max) * 0.5; }
  bool operator==(const Box&) const = default;
};

struct Pose {
  Vec3 position;
  double yaw = 0.0;
  double pitch = 0.0;
  bool operator==(const Pose&) const = default;
};

struct Scene {
  std::vector<Box> boxes;
  Pose tx_pose;
  Pose rx_pose;
  int tx_vehicle = -1;  // box the Tx antenna is mounted on
  int rx_mast = -1;     // box under the BS antenna
  double wrap_length_m = 0.0;  // dynamic boxes wrap along x when > 0
  bool has_ground = true;      // z = 0 plane; false gives free space

  void validate() const;
  bool operator==(const Scene&) const = default;
};

struct PathEntry {
  double power_ratio = 0.0;
  double delay_s = 0.0;
  bool valid = false;
};

struct MultipathSet {
  int n_paths = 0;
  std::vector<PathEntry> paths;  // size n_max, descending power, padded
  bool los_present = false;
  double total_power_w = 0.0;

  int n_max() const { return static_cast<int>(paths.size()); }
  static MultipathSet empty(int n_max);
};

// One geometric path found by the oracle. facets[i] identifies the reflecting
// facet of bounce i (see facet_count()).
struct TracedPath {
  std::vector<Vec3> vertices;  // tx, reflection points..., rx
  std::vector<int> facets;
  double length_m = 0.0;
  double power_w = 0.0;
  int bounces() const { return static_cast<int>(facets.size()); }
};

struct TraceOptions {
  double reflection_coefficient = 0.6;
  int max_order = 2;
};

// Planar reflecting facet: face `face` (0..5 = -x,+x,-y,+y,-z,+z) of box `box`,
// or the ground plane when box == -1.
struct Facet {
  int box = -1;
  int axis = 2;         // plane normal axis
  double offset = 0.0;  // plane coordinate
  double sign = 1.0;    // outward normal direction along axis
  Vec3 lo;              // facet bounds (unbounded for ground)
  Vec3 hi;
  bool bounded = false;

  Vec3 normal() const;
  Vec3 mirror(const Vec3& p) const;
  bool in_front(const Vec3& p) const;
  bool contains(const Vec3& p, double tol = 1e-9) const;
};

std::vector<Facet> scene_facets(const Scene& scene);

// True when the open segment a->b passes through the interior of any box.
bool segment_blocked(const Scene& scene, const Vec3& a, const Vec3& b);

Scene build_scene(const ScenarioConfig& config, std::uint64_t seed);

// Scene after `seconds` of motion (dynamic boxes and the Tx pose move).
Scene advance_scene(const Scene& scene, double seconds);

std::vector<TracedPath> enumerate_paths(const Scene& scene, const BandConfig& band, double tx_power_w,
                                        const TraceOptions& options = {});
MultipathSet trace_multipath(const Scene& scene, const BandConfig& band, int n_max, double tx_power_w,
                             const TraceOptions& options = {});
// Keeps the n_max strongest paths and converts them to ratios over the kept set.
MultipathSet to_multipath_set(std::vector<TracedPath> paths, int n_max, bool los_present);

struct SensorFrame {
  int height = 0;
  int width = 0;
  std::vector<float> depth;   // height x width, metres, far plane = max range
  std::vector<float> albedo;  // height x width in [0, 1]
  std::vector<float> lidar;   // M x 4 (x, y, z, intensity), sensor frame
  std::vector<float> radar;   // K x 5 (x, y, z, rcs_proxy, doppler_mps), sensor frame

  std::size_t lidar_points() const { return lidar.size() / 4; }
  std::size_t radar_points() const { return radar.size() / 5; }
};

SensorFrame render_sensors(const Scene& scene, const Pose& pose, const SensorConfig& config, std::uint64_t seed,
                           std::optional<int> ego_box = std::nullopt);

struct PropagationPrompt {
  double carrier_frequency_hz = 0.0;
  double bandwidth_hz = 0.0;
  double distance_m = 0.0;
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;

  void validate() const;
};

PropagationPrompt make_prompt(const Scene& scene, const BandConfig& band);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

// Contiguous 3:1:1 blocks; floor for train and val, remainder to test.
SplitSizes split_sizes(std::size_t snapshots);

struct DatasetManifest {
  int format_version = 1;
  ScenarioConfig scenario;
  std::size_t snapshots = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct GenerateOptions {
  bool force = false;
  int threads = 0;  // 0 = SOM_MULTIPATH_THREADS or hardware concurrency
};

DatasetManifest generate_dataset(const ScenarioConfig& config, const std::filesystem::path& out_dir,
                                 const GenerateOptions& options = {});

std::string snapshot_dir_name(std::size_t index);

// paths.csv (index, power_ratio, delay_ns, valid, los_present, total_power_w)
std::string format_paths_csv(const MultipathSet& paths);
MultipathSet parse_paths_csv(const std::string& text);

int resolve_thread_count(int requested);

}  // namespace som
