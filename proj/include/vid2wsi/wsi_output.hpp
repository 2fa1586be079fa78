#pragma once

#include "vid2wsi/image.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vid2wsi {

enum class TileFormat { Png, Jpeg };

std::string_view to_string(TileFormat f);
TileFormat tile_format_from_string(std::string_view name);

struct PyramidParams {
    int tile_size = 256;
    int overlap = 0;
    TileFormat format = TileFormat::Png;
    int jpeg_quality = 90;
    std::string name = "mosaic";  // tiles live under <name>_files/
    int threads = 1;
    /// Stored in pyramid.json under "config" when not null.
    nlohmann::json config;

    void validate() const;
};

struct PyramidLevel {
    int level = 0;
    int dzi_level = 0;  ///< Deep-zoom level number, which names the tile directory.
    int width = 0;
    int height = 0;
    int cols = 0;
    int rows = 0;
};

/// Deep-zoom-style pyramid: level 0 is the smallest, the last level is the base
/// image. Level L is ceil(base / 2^(levels - 1 - L)) on each side.
struct TilePyramid {
    std::filesystem::path root;
    std::string name;
    int base_width = 0;
    int base_height = 0;
    int tile_size = 256;
    int overlap = 0;
    TileFormat format = TileFormat::Png;
    std::vector<PyramidLevel> levels;

    int level_count() const { return static_cast<int>(levels.size()); }
    std::filesystem::path tile_path(int level, int col, int row) const;
};

/// floor(log2(max(w, h))) + 1.
int pyramid_level_count(int width, int height);

/// Level geometry without touching the disk.
std::vector<PyramidLevel> pyramid_levels(int width, int height, int tile_size);

/// Writes tiles (successive 2x box reductions, row-major per level), <name>.dzi and
/// finally pyramid.json, the commit point. Throws Error(IoError).
TilePyramid build_pyramid(const Image& img, const std::filesystem::path& dir, const PyramidParams& params = {});

/// Reads pyramid.json. Throws Error(CorruptPyramid) when missing or malformed.
TilePyramid open_pyramid(const std::filesystem::path& dir);

/// Stitches the tiles of `level` back together (overlap trimmed).
/// Throws Error(CorruptPyramid) naming a missing or wrongly sized tile.
Image reassemble(const TilePyramid& pyramid, int level);
Image reassemble(const std::filesystem::path& dir, int level);

struct PyramidCheck {
    bool ok = false;
    std::vector<std::string> problems;
};

/// Checks tile presence and sizes on every level and, for PNG pyramids, that each
/// level is the exact box reduction of the one below; with `original` also that the
/// base level reproduces it byte for byte.
PyramidCheck verify_pyramid(const std::filesystem::path& dir, const Image* original = nullptr);

nlohmann::json to_json(const TilePyramid& p);

}  // namespace vid2wsi
