// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "som/scenegen.hpp"

namespace som {

using Json = nlohmann::ordered_json;

Json to_json(const BandConfig& band);
Json to_json(const SensorConfig& sensors);
Json to_json(const ScenarioConfig& config);
Json to_json(const PropagationPrompt& prompt);
Json to_json(const DatasetManifest& manifest);

BandConfig band_from_json(const Json& j);
SensorConfig sensors_from_json(const Json& j);
// Missing keys fall back to ScenarioConfig::make() defaults for the given kind/vtd.
ScenarioConfig scenario_from_json(const Json& j);
PropagationPrompt prompt_from_json(const Json& j);
DatasetManifest manifest_from_json(const Json& j);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

}  // namespace som
