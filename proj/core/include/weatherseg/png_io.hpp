#pragma once

#include <filesystem>

#include "weatherseg/image.hpp"

namespace weatherseg::png {

// 8-bit RGB / 8-bit grayscale PNG. Writers use fixed compression settings
// and emit no time chunk, so equal rasters give equal files.
void write_rgb(const std::filesystem::path& path, const Image& image);
void write_gray(const std::filesystem::path& path, const LabelMap& labels);

// Throw DataError (without a sample id) on unreadable or malformed files.
Image read_rgb(const std::filesystem::path& path);
LabelMap read_gray(const std::filesystem::path& path);

}  // namespace weatherseg::png
