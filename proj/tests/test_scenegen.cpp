// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "som/config_io.hpp"
#include "som/ndarray.hpp"
#include "som/scenegen.hpp"

using namespace som;
namespace fs = std::filesystem;

namespace {

Scene free_space(Vec3 tx, Vec3 rx) {
  Scene s;
  s.has_ground = false;
  s.tx_pose.position = tx;
  s.rx_pose.position = rx;
  return s;
}

int count_vehicles(const Scene& s) {
  int n = 0;
  for (const Box& b : s.boxes) n += b.material == Material::kVehicle ? 1 : 0;
  return n;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("som_test_" + name);
  fs::remove_all(p);
  return p;
}

ScenarioConfig small_config(int snapshots) {
  ScenarioConfig c = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kLow, BandConfig::mmwave());
  c.road_length_m = 100.0;
  c.vehicle_count = ScenarioConfig::default_vehicle_count(c.vtd, c.road_length_m);
  c.snapshots = snapshots;
  c.sensors.image_width = 16;
  c.sensors.image_height = 8;
  c.sensors.lidar_azimuth_steps = 16;
  return c;
}

std::string slurp(const fs::path& p) { return read_file(p); }

}  // namespace

TEST(BuildScene, DeterministicForSameSeed) {
  auto c = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kLow, BandConfig::mmwave());
  EXPECT_EQ(build_scene(c, 1), build_scene(c, 1));
  EXPECT_FALSE(build_scene(c, 1) == build_scene(c, 2));
}

TEST(BuildScene, HighTrafficHasAtLeastThreeTimesTheVehicles) {
  auto low = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kLow, BandConfig::mmwave());
  auto high = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kHigh, BandConfig::mmwave());
  const int n_low = count_vehicles(build_scene(low, 1));
  const int n_high = count_vehicles(build_scene(high, 1));
  EXPECT_GE(n_high, 3 * n_low);
}

TEST(BuildScene, UrbanIsDenserAndTallerThanSuburban) {
  auto urban = build_scene(ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kLow, BandConfig::mmwave()), 3);
  auto sub = build_scene(ScenarioConfig::make(ScenarioKind::kSuburban, TrafficDensity::kLow, BandConfig::mmwave()), 3);
  auto stats = [](const Scene& s) {
    int n = 0;
    double h = 0.0;
    for (const Box& b : s.boxes) {
      if (b.material != Material::kBuilding) continue;
      ++n;
      h = std::max(h, b.max.z);
    }
    return std::pair{n, h};
  };
  EXPECT_GT(stats(urban).first, stats(sub).first);
  EXPECT_GT(stats(urban).second, stats(sub).second);
}

TEST(BuildScene, AntennaPlacement) {
  auto c = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kLow, BandConfig::mmwave());
  Scene s = build_scene(c, 7);
  EXPECT_DOUBLE_EQ(s.tx_pose.position.z, 1.5);
  EXPECT_DOUBLE_EQ(s.rx_pose.position.z, 6.0);
  const Box& car = s.boxes.at(static_cast<std::size_t>(s.tx_vehicle));
  EXPECT_NEAR(s.tx_pose.position.x, car.center().x, 1e-12);
  EXPECT_LT(car.max.z, 1.5);
}

TEST(BuildScene, RejectsDegenerateConfig) {
  auto c = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kLow, BandConfig::mmwave());
  c.road_length_m = 0.0;
  EXPECT_THROW(build_scene(c, 1), ConfigError);
  c = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kLow, BandConfig::mmwave());
  c.snapshot_interval_s = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kLow, BandConfig::mmwave());
  c.vehicle_count = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kLow, BandConfig{0.0, 1.0});
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(AdvanceScene, VehiclesMoveAndWrap) {
  auto c = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kLow, BandConfig::mmwave());
  Scene s0 = build_scene(c, 1);
  Scene s1 = advance_scene(s0, 1.0);
  const auto i = static_cast<std::size_t>(s0.tx_vehicle);
  EXPECT_NEAR(s1.boxes[i].center().x - s0.boxes[i].center().x, c.vehicle_speed_mps, 1e-9);
  EXPECT_NEAR(s1.tx_pose.position.x - s0.tx_pose.position.x, c.vehicle_speed_mps, 1e-9);
  Scene lap = advance_scene(s0, c.road_length_m / c.vehicle_speed_mps);
  EXPECT_NEAR(lap.boxes[i].center().x, s0.boxes[i].center().x, 1e-9);
  // buildings are static
  EXPECT_EQ(lap.boxes.front(), s0.boxes.front());
}

TEST(TraceMultipath, FreeSpaceLosMatchesFriis) {
  const double d = 299.792458;
  Scene s = free_space({0, 0, 10}, {d, 0, 10});
  const BandConfig band = BandConfig::mmwave();
  MultipathSet m = trace_multipath(s, band, 6, 1.0);
  ASSERT_EQ(m.n_paths, 1);
  EXPECT_TRUE(m.los_present);
  EXPECT_NEAR(m.paths[0].delay_s, 1e-6, 1e-6 * 1e-9);
  const double lambda = kSpeedOfLight / band.carrier_frequency_hz;
  const double friis = std::pow(lambda / (4.0 * kPi * d), 2.0);
  EXPECT_NEAR(m.total_power_w, friis, friis * 1e-9);
  EXPECT_DOUBLE_EQ(m.paths[0].power_ratio, 1.0);
  for (int n = 1; n < 6; ++n) {
    EXPECT_FALSE(m.paths[static_cast<std::size_t>(n)].valid);
    EXPECT_EQ(m.paths[static_cast<std::size_t>(n)].power_ratio, 0.0);
    EXPECT_EQ(m.paths[static_cast<std::size_t>(n)].delay_s, 0.0);
  }
}

TEST(TraceMultipath, ImageMethodMirrorCase) {
  Scene s = free_space({0, 0, 2}, {10, 0, 2});
  s.boxes.push_back(Box{{-100, 5, -50}, {100, 6, 50}, {}, Material::kBuilding});
  auto paths = enumerate_paths(s, BandConfig::mmwave(), 1.0);
  ASSERT_EQ(paths.size(), 2u);
  const TracedPath& refl = paths[1].bounces() == 1 ? paths[1] : paths[0];
  ASSERT_EQ(refl.bounces(), 1);
  EXPECT_NEAR(refl.length_m, std::sqrt(200.0), 1e-9);
  EXPECT_NEAR(refl.length_m / kSpeedOfLight * 1e9, 47.17, 0.005);
  EXPECT_NEAR(refl.vertices[1].x, 5.0, 1e-9);
  EXPECT_NEAR(refl.vertices[1].y, 5.0, 1e-9);
}

TEST(TraceMultipath, OccludedSegmentIsNlos) {
  Scene s = free_space({0, 0, 2}, {20, 0, 2});
  s.has_ground = true;
  s.boxes.push_back(Box{{9, -1, 0}, {11, 1, 5}, {}, Material::kVehicle});
  s.boxes.push_back(Box{{-50, 6, 0}, {50, 8, 30}, {}, Material::kBuilding});
  MultipathSet m = trace_multipath(s, BandConfig::mmwave(), 6, 1.0);
  EXPECT_FALSE(m.los_present);
  EXPECT_GT(m.n_paths, 0);
}

TEST(TraceMultipath, EnclosedReceiverYieldsEmptySet) {
  Scene s = free_space({0, 0, 2}, {20, 0, 2});
  // hollow shell made of six slabs around the receiver
  const Vec3 c{20, 0, 2};
  const double r = 1.0, t = 0.2;
  s.boxes.push_back(Box{{c.x - r - t, c.y - r - t, c.z - r - t}, {c.x - r, c.y + r + t, c.z + r + t}, {}, Material::kBuilding});
  s.boxes.push_back(Box{{c.x + r, c.y - r - t, c.z - r - t}, {c.x + r + t, c.y + r + t, c.z + r + t}, {}, Material::kBuilding});
  s.boxes.push_back(Box{{c.x - r - t, c.y - r - t, c.z - r - t}, {c.x + r + t, c.y - r, c.z + r + t}, {}, Material::kBuilding});
  s.boxes.push_back(Box{{c.x - r - t, c.y + r, c.z - r - t}, {c.x + r + t, c.y + r + t, c.z + r + t}, {}, Material::kBuilding});
  s.boxes.push_back(Box{{c.x - r - t, c.y - r - t, c.z - r - t}, {c.x + r + t, c.y + r + t, c.z - r}, {}, Material::kBuilding});
  s.boxes.push_back(Box{{c.x - r - t, c.y - r - t, c.z + r}, {c.x + r + t, c.y + r + t, c.z + r + t}, {}, Material::kBuilding});
  MultipathSet m = trace_multipath(s, BandConfig::mmwave(), 6, 1.0);
  EXPECT_EQ(m.n_paths, 0);
  EXPECT_FALSE(m.los_present);
  EXPECT_EQ(m.paths.size(), 6u);
}

TEST(TraceMultipath, ReflectedPathsUnfoldToStraightLines) {
  auto c = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kHigh, BandConfig::mmwave());
  const Scene base = build_scene(c, 11);
  int checked = 0;
  for (int step = 0; step < 10; ++step) {
    const Scene s = advance_scene(base, 2.0 * step);
    const auto facets = scene_facets(s);
    for (const TracedPath& p : enumerate_paths(s, c.band, 1.0)) {
      Vec3 image = p.vertices.front();
      for (int b = 0; b < p.bounces(); ++b) {
        const Facet& f = facets[static_cast<std::size_t>(p.facets[static_cast<std::size_t>(b)])];
        image = f.mirror(image);
        // the reflection point lies on the segment from the image to the next vertex
        const Vec3 a = image;
        const Vec3 e = p.vertices[static_cast<std::size_t>(b) + 2];
        const Vec3 q = p.vertices[static_cast<std::size_t>(b) + 1];
        const Vec3 ae = e - a;
        const double t = dot(q - a, ae) / dot(ae, ae);
        const double residual = norm(a + ae * t - q);
        EXPECT_LT(residual, 1e-9);
        ++checked;
      }
      EXPECT_NEAR(norm(p.vertices.back() - image), p.length_m, 1e-9);
    }
  }
  EXPECT_GT(checked, 20);
}

TEST(TraceMultipath, MatchesBruteForceOnSmallScenes) {
  Rng rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 40; ++trial) {
    Scene s;
    s.tx_pose.position = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.5, 4)};
    s.rx_pose.position = {rng.uniform(20, 30), rng.uniform(-5, 5), rng.uniform(2, 8)};
    const int boxes = 1 + static_cast<int>(rng.below(3));
    for (int b = 0; b < boxes; ++b) {
      const Vec3 lo{rng.uniform(-10, 35), rng.uniform(-15, 15), 0.0};
      s.boxes.push_back(Box{lo, lo + Vec3{rng.uniform(1, 8), rng.uniform(1, 8), rng.uniform(1, 12)}, {}, Material::kBuilding});
    }
    bool inside = false;
    for (const Box& b : s.boxes) inside = inside || b.contains(s.tx_pose.position) || b.contains(s.rx_pose.position);
    if (inside) continue;
    auto mine = enumerate_paths(s, BandConfig::sub6(), 1.0);
    std::sort(mine.begin(), mine.end(), [](const TracedPath& a, const TracedPath& b) { return a.length_m < b.length_m; });
    const auto ref = oracle::brute_force_paths(s);
    ASSERT_EQ(mine.size(), ref.size()) << "trial " << trial;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_NEAR(mine[i].length_m, ref[i].length, 1e-9);
      EXPECT_EQ(mine[i].bounces(), ref[i].bounces);
    }
    ++compared;
  }
  EXPECT_GT(compared, 20);
}

TEST(TraceMultipath, PowerDecreasesWithLengthAtFixedOrder) {
  auto c = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kLow, BandConfig::mmwave());
  auto paths = enumerate_paths(build_scene(c, 5), c.band, 1.0);
  for (const auto& a : paths) {
    for (const auto& b : paths) {
      if (a.bounces() == b.bounces() && a.length_m < b.length_m) EXPECT_GT(a.power_w, b.power_w);
    }
  }
}

TEST(TraceMultipath, KeptSetInvariants) {
  auto c = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kHigh, BandConfig::mmwave());
  const Scene base = build_scene(c, 9);
  for (int t = 0; t < 20; ++t) {
    MultipathSet m = trace_multipath(advance_scene(base, t * 0.5), c.band, 6, 1.0);
    ASSERT_EQ(m.paths.size(), 6u);
    double sum = 0.0;
    for (std::size_t n = 0; n < m.paths.size(); ++n) {
      const auto& e = m.paths[n];
      if (n > 0) EXPECT_LE(e.power_ratio, m.paths[n - 1].power_ratio);
      if (e.valid) {
        EXPECT_GT(e.delay_s, 0.0);
        sum += e.power_ratio;
      } else {
        EXPECT_EQ(e.power_ratio, 0.0);
        EXPECT_EQ(e.delay_s, 0.0);
      }
    }
    if (m.n_paths > 0) EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(RenderSensors, EmptySceneIsFarPlaneAndGroundOnlyLidar) {
  Scene s;
  SensorConfig cfg;
  Pose pose{{0, 0, 1.5}, 0.0, 0.0};
  SensorFrame f = render_sensors(s, pose, cfg, 1);
  for (float d : f.depth) EXPECT_EQ(d, static_cast<float>(cfg.max_range_m));
  ASSERT_GT(f.lidar_points(), 0u);
  for (std::size_t i = 0; i < f.lidar_points(); ++i) EXPECT_NEAR(f.lidar[4 * i + 2], -1.5, 1e-5);
  EXPECT_EQ(f.radar_points(), 0u);
}

TEST(RenderSensors, BoxFaceTenMetresAhead) {
  Scene s;
  s.boxes.push_back(Box{{10, -20, 0}, {12, 20, 20}, {}, Material::kBuilding});
  SensorConfig cfg;
  SensorFrame f = render_sensors(s, Pose{{0, 0, 1.5}, 0.0, 0.0}, cfg, 1);
  const float min_depth = *std::min_element(f.depth.begin(), f.depth.end());
  EXPECT_NEAR(min_depth, 10.0, 1e-6);
  for (float d : f.depth) EXPECT_GT(d, 0.0f);
  for (float d : f.radar) EXPECT_TRUE(std::isfinite(d));
  // static scene: all doppler zero
  ASSERT_GT(f.radar_points(), 0u);
  for (std::size_t i = 0; i < f.radar_points(); ++i) EXPECT_EQ(f.radar[5 * i + 4], 0.0f);
}

TEST(RenderSensors, MovingBoxHasDoppler) {
  Scene s;
  s.boxes.push_back(Box{{10, -2, 0}, {14, 2, 2}, {5, 0, 0}, Material::kVehicle});
  SensorFrame f = render_sensors(s, Pose{{0, 0, 1.5}, 0.0, 0.0}, SensorConfig{}, 1);
  ASSERT_GT(f.radar_points(), 0u);
  for (std::size_t i = 0; i < f.radar_points(); ++i) EXPECT_GT(f.radar[5 * i + 4], 0.0f);
}

TEST(RenderSensors, PoseInsideGeometryFails) {
  Scene s;
  s.boxes.push_back(Box{{-1, -1, 0}, {1, 1, 3}, {}, Material::kBuilding});
  EXPECT_THROW(render_sensors(s, Pose{{0, 0, 1.5}, 0, 0}, SensorConfig{}, 1), GeometryError);
  // the ego box is ignored
  EXPECT_NO_THROW(render_sensors(s, Pose{{0, 0, 1.5}, 0, 0}, SensorConfig{}, 1, 0));
}

TEST(RenderSensors, Deterministic) {
  auto c = ScenarioConfig::make(ScenarioKind::kUrban, TrafficDensity::kLow, BandConfig::mmwave());
  Scene s = build_scene(c, 4);
  auto a = render_sensors(s, s.rx_pose, c.sensors, 99, s.rx_mast);
  auto b = render_sensors(s, s.rx_pose, c.sensors, 99, s.rx_mast);
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.lidar, b.lidar);
  EXPECT_EQ(a.radar, b.radar);
  for (float d : a.depth) {
    EXPECT_GT(d, 0.0f);
    EXPECT_LE(d, static_cast<float>(c.sensors.max_range_m));
  }
}

TEST(Dataset, SplitSizes) {
  auto s = split_sizes(100);
  EXPECT_EQ(s.train, 60u);
  EXPECT_EQ(s.val, 20u);
  EXPECT_EQ(s.test, 20u);
  s = split_sizes(5);
  EXPECT_EQ(s.train, 3u);
  EXPECT_EQ(s.val, 1u);
  EXPECT_EQ(s.test, 1u);
}

TEST(Dataset, ByteIdenticalAcrossRunsAndThreadCounts) {
  const auto c = small_config(7);
  const fs::path a = temp_dir("gen_a"), b = temp_dir("gen_b");
  auto m = generate_dataset(c, a, {false, 1});
  generate_dataset(c, b, {false, 3});
  EXPECT_EQ(m.train.size() + m.val.size() + m.test.size(), 7u);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
  }
  EXPECT_EQ(files.size(), 3u + 7u * 10u - 1u);  // manifest, resolved config, 10 files per snapshot
  for (const auto& f : files) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Dataset, RefusesOverwriteWithoutForce) {
  const auto c = small_config(2);
  const fs::path dir = temp_dir("overwrite");
  generate_dataset(c, dir);
  EXPECT_THROW(generate_dataset(c, dir), IoError);
  EXPECT_NO_THROW(generate_dataset(c, dir, {true, 1}));
  fs::remove_all(dir);
}

TEST(Dataset, SnapshotLayoutAndArrayHeader) {
  const auto c = small_config(2);
  const fs::path dir = temp_dir("layout");
  generate_dataset(c, dir);
  const fs::path snap = dir / "snapshots" / "000001";
  for (const char* f : {"tx_depth.arr", "rx_depth.arr", "tx_albedo.arr", "rx_albedo.arr", "tx_lidar.arr",
                        "rx_lidar.arr", "tx_radar.arr", "rx_radar.arr", "paths.csv", "prompt.json"}) {
    EXPECT_TRUE(fs::exists(snap / f)) << f;
  }
  const std::string bytes = slurp(snap / "tx_depth.arr");
  ASSERT_GE(bytes.size(), 15u);
  EXPECT_EQ(bytes.substr(0, 4), "NDAR");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 8u);  // height, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[11]), 16u);
  EXPECT_EQ(bytes.size(), 15u + 4u * 8u * 16u);
  const auto paths = parse_paths_csv(slurp(snap / "paths.csv"));
  EXPECT_EQ(paths.paths.size(), 6u);
  const auto prompt = prompt_from_json(read_json(snap / "prompt.json"));
  EXPECT_DOUBLE_EQ(prompt.carrier_frequency_hz, 60e9);
  const auto manifest = manifest_from_json(read_json(dir / "manifest.json"));
  EXPECT_EQ(manifest.snapshots, 2u);
  fs::remove_all(dir);
}

TEST(PathsCsv, RoundTripsValues) {
  MultipathSet m = MultipathSet::empty(6);
  m.n_paths = 2;
  m.los_present = true;
  m.total_power_w = 3.5e-9;
  m.paths[0] = {0.75, 123.456e-9, true};
  m.paths[1] = {0.25, 200e-9, true};
  const auto back = parse_paths_csv(format_paths_csv(m));
  EXPECT_EQ(back.n_paths, 2);
  EXPECT_TRUE(back.los_present);
  EXPECT_DOUBLE_EQ(back.total_power_w, 3.5e-9);
  EXPECT_DOUBLE_EQ(back.paths[0].power_ratio, 0.75);
  EXPECT_NEAR(back.paths[0].delay_s, 123.456e-9, 1e-21);
  EXPECT_FALSE(back.paths[3].valid);
}

TEST(NdArray, RejectsCorruptInput) {
  const std::uint32_t dims[] = {2, 2};
  const float v[] = {1, 2, 3, 4};
  std::string bytes = encode_ndar(dims, v);
  EXPECT_EQ(decode_ndar(bytes).values[3], 4.0);
  EXPECT_THROW(decode_ndar(bytes.substr(0, bytes.size() - 1)), IoError);
  bytes[0] = 'X';
  EXPECT_THROW(decode_ndar(bytes), IoError);
}
