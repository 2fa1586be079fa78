#pragma once

#include "vid2wsi/image.hpp"

#include <filesystem>

namespace vid2wsi {

/// Reads a PNG or JPEG; 8-bit gray stays gray, everything else becomes RGB.
Image read_image(const std::filesystem::path& path);

/// Writes by extension (.png lossless, .jpg/.jpeg at `jpeg_quality`).
void write_image(const std::filesystem::path& path, const Image& img, int jpeg_quality = 90);

}  // namespace vid2wsi
