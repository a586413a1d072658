#pragma once

#include <filesystem>

#include "sceneforge/core_types.hpp"

namespace sceneforge {

/// Reads 8/16-bit gray, gray+alpha, RGB, RGBA or palette PNGs; alpha is dropped, 16-bit is truncated.
ImageBuffer read_png(const std::filesystem::path& path);

/// Writes without timestamps or text chunks so identical images produce identical files.
void write_png(const std::filesystem::path& path, const ImageBuffer& img, int compression_level = 4);

}  // namespace sceneforge
