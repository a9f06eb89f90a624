// SPDX-License-Identifier: Apache-2.0

#include "som/config_io.hpp"

#include <fstream>

#include "som/ndarray.hpp"

namespace som {
namespace {

Json range_json(const SizeRange& r) { return Json::array({r.lo, r.hi}); }

SizeRange range_from(const Json& j, SizeRange fallback) {
  if (!j.is_array() || j.size() != 2) return fallback;
  return {j[0].get<double>(), j[1].get<double>()};
}

template <typename T>
void take(const Json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace

Json to_json(const BandConfig& band) {
  return Json{{"carrier_frequency_hz", band.carrier_frequency_hz}, {"bandwidth_hz", band.bandwidth_hz}};
}

Json to_json(const SensorConfig& s) {
  return Json{{"image_width", s.image_width},
              {"image_height", s.image_height},
              {"fov_deg", s.fov_deg},
              {"max_range_m", s.max_range_m},
              {"lidar_rings", s.lidar_rings},
              {"lidar_min_elevation_deg", s.lidar_min_elevation_deg},
              {"lidar_max_elevation_deg", s.lidar_max_elevation_deg},
              {"lidar_azimuth_steps", s.lidar_azimuth_steps},
              {"radar_samples_per_face", s.radar_samples_per_face},
              {"radar_fov_deg", s.radar_fov_deg}};
}

Json to_json(const ScenarioConfig& c) {
  const auto& b = c.buildings;
  return Json{{"scenario_kind", to_string(c.kind)},
              {"vtd", to_string(c.vtd)},
              {"band", to_json(c.band)},
              {"road_length_m", c.road_length_m},
              {"building_rows",
               {{"rows_per_side", b.rows_per_side},
                {"width_m", range_json(b.width_m)},
                {"depth_m", range_json(b.depth_m)},
                {"height_m", range_json(b.height_m)},
                {"gap_m", range_json(b.gap_m)},
                {"setback_m", b.setback_m}}},
              {"vehicle_count", c.vehicle_count},
              {"vehicle_speed_mps", c.vehicle_speed_mps},
              {"snapshot_interval_s", c.snapshot_interval_s},
              {"snapshots", c.snapshots},
              {"seed", c.seed},
              {"bs_gap_m", c.bs_gap_m},
              {"reflection_coefficient", c.reflection_coefficient},
              {"tx_power_w", c.tx_power_w},
              {"n_max", c.n_max},
              {"sensors", to_json(c.sensors)}};
}

Json to_json(const PropagationPrompt& p) {
  return Json{{"carrier_frequency_hz", p.carrier_frequency_hz},
              {"bandwidth_hz", p.bandwidth_hz},
              {"distance_m", p.distance_m},
              {"azimuth_deg", p.azimuth_deg},
              {"elevation_deg", p.elevation_deg}};
}

Json to_json(const DatasetManifest& m) {
  return Json{{"format_version", m.format_version},
              {"seed", m.seed},
              {"snapshots", m.snapshots},
              {"scenario", to_json(m.scenario)},
              {"splits", {{"ratio", Json::array({3, 1, 1})}, {"train", m.train}, {"val", m.val}, {"test", m.test}}}};
}

BandConfig band_from_json(const Json& j) {
  BandConfig b;
  take(j, "carrier_frequency_hz", b.carrier_frequency_hz);
  take(j, "bandwidth_hz", b.bandwidth_hz);
  return b;
}

SensorConfig sensors_from_json(const Json& j) {
  SensorConfig s;
  take(j, "image_width", s.image_width);
  take(j, "image_height", s.image_height);
  take(j, "fov_deg", s.fov_deg);
  take(j, "max_range_m", s.max_range_m);
  take(j, "lidar_rings", s.lidar_rings);
  take(j, "lidar_min_elevation_deg", s.lidar_min_elevation_deg);
  take(j, "lidar_max_elevation_deg", s.lidar_max_elevation_deg);
  take(j, "lidar_azimuth_steps", s.lidar_azimuth_steps);
  take(j, "radar_samples_per_face", s.radar_samples_per_face);
  take(j, "radar_fov_deg", s.radar_fov_deg);
  return s;
}

ScenarioConfig scenario_from_json(const Json& j) {
  const auto kind = parse_scenario_kind(j.value("scenario_kind", std::string("urban")));
  const auto vtd = parse_traffic_density(j.value("vtd", std::string("low")));
  BandConfig band = BandConfig::mmwave();
  if (j.contains("band")) {
    const Json& jb = j.at("band");
    if (jb.is_string()) {
      const auto name = jb.get<std::string>();
      if (name == "mmwave") band = BandConfig::mmwave();
      else if (name == "sub6") band = BandConfig::sub6();
      else throw ConfigError("unknown band preset: " + name);
    } else {
      band = band_from_json(jb);
    }
  }
  ScenarioConfig c = ScenarioConfig::make(kind, vtd, band);
  take(j, "road_length_m", c.road_length_m);
  if (!j.contains("vehicle_count")) c.vehicle_count = ScenarioConfig::default_vehicle_count(vtd, c.road_length_m);
  take(j, "vehicle_count", c.vehicle_count);
  if (j.contains("building_rows")) {
    const Json& jr = j.at("building_rows");
    auto& b = c.buildings;
    take(jr, "rows_per_side", b.rows_per_side);
    if (jr.contains("width_m")) b.width_m = range_from(jr.at("width_m"), b.width_m);
    if (jr.contains("depth_m")) b.depth_m = range_from(jr.at("depth_m"), b.depth_m);
    if (jr.contains("height_m")) b.height_m = range_from(jr.at("height_m"), b.height_m);
    if (jr.contains("gap_m")) b.gap_m = range_from(jr.at("gap_m"), b.gap_m);
    take(jr, "setback_m", b.setback_m);
  }
  take(j, "vehicle_speed_mps", c.vehicle_speed_mps);
  take(j, "snapshot_interval_s", c.snapshot_interval_s);
  take(j, "snapshots", c.snapshots);
  take(j, "seed", c.seed);
  take(j, "bs_gap_m", c.bs_gap_m);
  take(j, "reflection_coefficient", c.reflection_coefficient);
  take(j, "tx_power_w", c.tx_power_w);
  take(j, "n_max", c.n_max);
  if (j.contains("sensors")) c.sensors = sensors_from_json(j.at("sensors"));
  return c;
}

PropagationPrompt prompt_from_json(const Json& j) {
  PropagationPrompt p;
  p.carrier_frequency_hz = j.at("carrier_frequency_hz").get<double>();
  p.bandwidth_hz = j.at("bandwidth_hz").get<double>();
  p.distance_m = j.at("distance_m").get<double>();
  p.azimuth_deg = j.at("azimuth_deg").get<double>();
  p.elevation_deg = j.at("elevation_deg").get<double>();
  return p;
}

DatasetManifest manifest_from_json(const Json& j) {
  DatasetManifest m;
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != 1) throw CompatibilityError("unsupported dataset format version");
  m.seed = j.at("seed").get<std::uint64_t>();
  m.snapshots = j.at("snapshots").get<std::size_t>();
  m.scenario = scenario_from_json(j.at("scenario"));
  const Json& s = j.at("splits");
  m.train = s.at("train").get<std::vector<std::size_t>>();
  m.val = s.at("val").get<std::vector<std::size_t>>();
  m.test = s.at("test").get<std::vector<std::size_t>>();
  return m;
}

Json read_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

}  // namespace som
