#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "sceneforge/core_types.hpp"

namespace sceneforge {

/// One named intermediate result. Names are relative paths inside the bundle directory.
struct Artifact {
    std::string name;
    std::variant<ImageBuffer, std::string> content;
};

struct ManifestEntry {
    std::string path;
    std::string sha256;
    std::uintmax_t bytes = 0;

    bool operator==(const ManifestEntry&) const = default;
};

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Writes every artifact under `dir` plus `manifest.json` (sorted by path) and returns the entries.
std::vector<ManifestEntry> write_bundle(const std::filesystem::path& dir, const std::vector<Artifact>& artifacts);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest_path);

}  // namespace sceneforge
