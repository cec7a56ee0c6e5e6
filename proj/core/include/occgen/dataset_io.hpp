#pragma once

#include <filesystem>
#include <json.hpp>
#include <vector>

#include "occgen/scene.hpp"

namespace occgen {

struct Dataset {
  SceneConfig config;
  std::vector<Scene> scenes;
};

nlohmann::json scene_config_to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const nlohmann::json& j);

// On-disk layout: dir/manifest.json plus one scene_%05d.bin per scene.
// Each bin concatenates the manifest's tensor list as raw little-endian
// float32 in row-major order. Byte offsets in the manifest are
// authoritative; a mismatched file length is a FormatError.
void write_dataset(const std::vector<Scene>& scenes, const SceneConfig& cfg,
                   const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

inline constexpr int kDatasetVersion = 1;

}  // namespace occgen
