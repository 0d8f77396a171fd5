#pragma once

#include <filesystem>

#include "dermpipe/image.hpp"

namespace dermpipe {

// PNG/JPEG (8- or 16-bit) into [0,1] RGB. Throws Io on failure.
RgbImage load_image(const std::filesystem::path& path);
// Reads only what is needed to learn the dimensions.
ImageDims probe_image_dims(const std::filesystem::path& path);
// Lossless 8-bit PNG, written atomically.
void save_png(const RgbImage& img, const std::filesystem::path& path);

}  // namespace dermpipe
