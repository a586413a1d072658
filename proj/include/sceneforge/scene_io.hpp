#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sceneforge/pipeline.hpp"

namespace sceneforge {

inline constexpr int kSceneVersion = 1;

struct SceneDocument {
    SceneSpec scene;
    /// Empty when the document has no "stages" entry.
    std::vector<StageConfig> stages;
};

/// Parses a scene document. Relative mask paths are resolved against `base_dir`.
SceneDocument parse_scene(const std::string& json_text, const std::filesystem::path& base_dir = {});
SceneDocument load_scene(const std::filesystem::path& path);
std::string scene_to_json(const SceneDocument& doc);

/// Two ×2 stages with default parameters.
std::vector<StageConfig> default_stages(int count = 2);

}  // namespace sceneforge
