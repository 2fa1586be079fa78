#pragma once

#include "vid2wsi/image.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace vid2wsi::testing {

/// Lightly smoothed uniform noise in [30, 220]: rich in corners and block texture.
Image noise_texture(int width, int height, std::uint64_t seed, int channels = 1);

Image checkerboard(int width, int height, int cell, std::uint8_t lo = 0, std::uint8_t hi = 255);

/// out(x, y) = img(x - dx, y - dy); uncovered pixels get `fill`.
Image shifted(const Image& img, int dx, int dy, std::uint8_t fill = 0);

/// Deletes itself on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& prefix = "vid2wsi");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace vid2wsi::testing
