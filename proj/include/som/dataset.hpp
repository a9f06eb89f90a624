// SPDX-License-Identifier: Apache-2.0
//
// Reading a generated dataset directory back in.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "som/scenegen.hpp"

namespace som {

struct SnapshotRecord {
  std::size_t index = 0;
  PropagationPrompt prompt;
  MultipathSet paths;
};

struct SnapshotFrames {
  SensorFrame tx;
  SensorFrame rx;
};

struct Dataset {
  std::filesystem::path root;
  DatasetManifest manifest;
  std::vector<SnapshotRecord> records;  // indexed by snapshot number

  // "train", "val", "test" or "all"
  std::vector<std::size_t> split(const std::string& name) const;
  const SnapshotRecord& record(std::size_t index) const;
};

// Loads the manifest, prompts and paths; sensor frames stay on disk.
Dataset load_dataset(const std::filesystem::path& root);
SnapshotFrames load_frames(const Dataset& dataset, std::size_t index);

}  // namespace som
