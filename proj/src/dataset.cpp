// SPDX-License-Identifier: Apache-2.0

#include "som/dataset.hpp"

#include "som/config_io.hpp"
#include "som/ndarray.hpp"

namespace som {

namespace fs = std::filesystem;

std::vector<std::size_t> Dataset::split(const std::string& name) const {
  if (name == "train") return manifest.train;
  if (name == "val") return manifest.val;
  if (name == "test") return manifest.test;
  if (name == "all") {
    std::vector<std::size_t> all(records.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  throw ConfigError("unknown split: " + name);
}

const SnapshotRecord& Dataset::record(std::size_t index) const {
  if (index >= records.size()) throw ConfigError("snapshot index out of range: " + std::to_string(index));
  return records[index];
}

Dataset load_dataset(const fs::path& root) {
  if (!fs::exists(root / "manifest.json")) throw IoError("not a dataset directory (no manifest.json): " + root.string());
  Dataset ds;
  ds.root = root;
  ds.manifest = manifest_from_json(read_json(root / "manifest.json"));
  ds.records.resize(ds.manifest.snapshots);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const fs::path dir = root / "snapshots" / snapshot_dir_name(i);
    SnapshotRecord& r = ds.records[i];
    r.index = i;
    r.prompt = prompt_from_json(read_json(dir / "prompt.json"));
    r.paths = parse_paths_csv(read_file(dir / "paths.csv"));
  }
  return ds;
}

namespace {

std::vector<float> to_floats(const NdArray& a) { return std::vector<float>(a.values.begin(), a.values.end()); }

SensorFrame read_frame(const fs::path& dir, const std::string& prefix) {
  SensorFrame f;
  const NdArray depth = read_ndar(dir / (prefix + "_depth.arr"));
  const NdArray albedo = read_ndar(dir / (prefix + "_albedo.arr"));
  const NdArray lidar = read_ndar(dir / (prefix + "_lidar.arr"));
  const NdArray radar = read_ndar(dir / (prefix + "_radar.arr"));
  if (depth.dims.size() != 2 || albedo.dims != depth.dims) throw IoError("bad image arrays in " + dir.string());
  if (lidar.dims.size() != 2 || lidar.dims[1] != 4 || radar.dims.size() != 2 || radar.dims[1] != 5)
    throw IoError("bad point arrays in " + dir.string());
  f.height = static_cast<int>(depth.dims[0]);
  f.width = static_cast<int>(depth.dims[1]);
  f.depth = to_floats(depth);
  f.albedo = to_floats(albedo);
  f.lidar = to_floats(lidar);
  f.radar = to_floats(radar);
  return f;
}

}  // namespace

SnapshotFrames load_frames(const Dataset& dataset, std::size_t index) {
  dataset.record(index);
  const fs::path dir = dataset.root / "snapshots" / snapshot_dir_name(index);
  return SnapshotFrames{read_frame(dir, "tx"), read_frame(dir, "rx")};
}

}  // namespace som
