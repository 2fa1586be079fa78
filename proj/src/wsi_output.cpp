#include "vid2wsi/wsi_output.hpp"

#include "vid2wsi/errors.hpp"
#include "vid2wsi/image_io.hpp"
#include "vid2wsi/parallel.hpp"

#include <algorithm>
#include <bit>
#include <fstream>

namespace vid2wsi {

namespace {

constexpr const char* kDescriptor = "pyramid.json";

int ceil_div(int a, int b) { return (a + b - 1) / b; }

std::string extension(TileFormat f) { return f == TileFormat::Png ? "png" : "jpeg"; }

/// Pixel span of tile `i` along an axis of length `len`, overlap included.
std::pair<int, int> tile_span(int i, int tile, int overlap, int len) {
    const int start = std::max(0, i * tile - overlap);
    const int end = std::min(len, (i + 1) * tile + overlap);
    return {start, end};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
}

}  // namespace

std::string_view to_string(TileFormat f) { return f == TileFormat::Png ? "png" : "jpeg"; }

TileFormat tile_format_from_string(std::string_view name) {
    if (name == "png") return TileFormat::Png;
    if (name == "jpeg" || name == "jpg") return TileFormat::Jpeg;
    throw Error(ErrorKind::InvalidArgument, "unknown tile format '" + std::string(name) + "'");
}

void PyramidParams::validate() const {
    if (tile_size < 1) throw Error(ErrorKind::ConfigError, "tile_size must be positive");
    if (overlap < 0 || overlap >= tile_size) throw Error(ErrorKind::ConfigError, "overlap must be in [0, tile_size)");
    if (jpeg_quality < 1 || jpeg_quality > 100) throw Error(ErrorKind::ConfigError, "jpeg_quality must be in [1, 100]");
    if (name.empty() || name.find('/') != std::string::npos)
        throw Error(ErrorKind::ConfigError, "pyramid name must be a plain file name");
    if (threads < 1) throw Error(ErrorKind::ConfigError, "threads must be >= 1");
}

int pyramid_level_count(int width, int height) {
    const int m = std::max(width, height);
    if (m < 1) throw Error(ErrorKind::EmptyInput, "pyramid of an empty image");
    return std::bit_width(static_cast<unsigned>(m));
}

std::vector<PyramidLevel> pyramid_levels(int width, int height, int tile_size) {
    const int n = pyramid_level_count(width, height);
    // Deep-zoom viewers put the full image at level ceil(log2(max)); we count floor(log2(max)) + 1 levels.
    const int top = std::bit_width(static_cast<unsigned>(std::max(width, height) - 1));
    std::vector<PyramidLevel> out;
    for (int l = 0; l < n; ++l) {
        const int f = 1 << (n - 1 - l);
        PyramidLevel lv;
        lv.level = l;
        lv.dzi_level = top - (n - 1 - l);
        lv.width = ceil_div(width, f);
        lv.height = ceil_div(height, f);
        lv.cols = ceil_div(lv.width, tile_size);
        lv.rows = ceil_div(lv.height, tile_size);
        out.push_back(lv);
    }
    return out;
}

std::filesystem::path TilePyramid::tile_path(int level, int col, int row) const {
    return root / (name + "_files") / std::to_string(levels.at(level).dzi_level) /
           (std::to_string(col) + "_" + std::to_string(row) + "." + extension(format));
}

nlohmann::json to_json(const TilePyramid& p) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& l : p.levels)
        levels.push_back({{"level", l.level},
                          {"dzi_level", l.dzi_level},
                          {"width", l.width}, {"height", l.height}, {"cols", l.cols}, {"rows", l.rows}});
    return {{"format", "vid2wsi-pyramid"},
            {"version", 1},
            {"name", p.name},
            {"width", p.base_width},
            {"height", p.base_height},
            {"tile_size", p.tile_size},
            {"overlap", p.overlap},
            {"tile_format", to_string(p.format)},
            {"level_count", p.level_count()},
            {"tile_path", p.name + "_files/{dzi_level}/{col}_{row}." + extension(p.format)},
            {"levels", levels}};
}

TilePyramid build_pyramid(const Image& img, const std::filesystem::path& dir, const PyramidParams& params) {
    params.validate();
    if (img.empty()) throw Error(ErrorKind::EmptyInput, "pyramid of an empty image");

    TilePyramid p;
    p.root = dir;
    p.name = params.name;
    p.base_width = img.width();
    p.base_height = img.height();
    p.tile_size = params.tile_size;
    p.overlap = params.overlap;
    p.format = params.format;
    p.levels = pyramid_levels(img.width(), img.height(), params.tile_size);

    std::error_code ec;
    std::filesystem::remove(dir / kDescriptor, ec);  // an interrupted rebuild must not look complete
    Image level = img;
    for (int l = p.level_count() - 1; l >= 0; --l) {
        if (l < p.level_count() - 1) level = downsample2x(level);
        const PyramidLevel& lv = p.levels[l];
        if (level.width() != lv.width || level.height() != lv.height)
            throw Error(ErrorKind::InvalidArgument, "level geometry mismatch");
        std::filesystem::create_directories(p.tile_path(l, 0, 0).parent_path(), ec);
        if (ec) throw Error(ErrorKind::IoError, "cannot create tile directory: " + ec.message());
        const std::size_t n = static_cast<std::size_t>(lv.cols) * lv.rows;
        parallel_for(n, params.threads, [&](std::size_t i) {
            const int col = static_cast<int>(i % lv.cols), row = static_cast<int>(i / lv.cols);
            const auto [x0, x1] = tile_span(col, p.tile_size, p.overlap, lv.width);
            const auto [y0, y1] = tile_span(row, p.tile_size, p.overlap, lv.height);
            write_image(p.tile_path(l, col, row), crop(level, {x0, y0, x1 - x0, y1 - y0}), params.jpeg_quality);
        });
    }

    write_text(dir / (p.name + ".dzi"),
               "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
               "<Image xmlns=\"http://schemas.microsoft.com/deepzoom/2008\" TileSize=\"" +
                   std::to_string(p.tile_size) + "\" Overlap=\"" + std::to_string(p.overlap) + "\" Format=\"" +
                   extension(p.format) + "\">\n  <Size Width=\"" + std::to_string(p.base_width) + "\" Height=\"" +
                   std::to_string(p.base_height) + "\"/>\n</Image>\n");
    nlohmann::json desc = to_json(p);
    if (!params.config.is_null()) desc["config"] = params.config;
    write_text(dir / kDescriptor, desc.dump(2) + "\n");
    return p;
}

TilePyramid open_pyramid(const std::filesystem::path& dir) {
    std::ifstream in(dir / kDescriptor);
    if (!in) throw Error(ErrorKind::CorruptPyramid, "missing " + (dir / kDescriptor).string());
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.at("format") != "vid2wsi-pyramid") throw Error(ErrorKind::CorruptPyramid, "not a pyramid descriptor");
        TilePyramid p;
        p.root = dir;
        p.name = j.at("name").get<std::string>();
        p.base_width = j.at("width").get<int>();
        p.base_height = j.at("height").get<int>();
        p.tile_size = j.at("tile_size").get<int>();
        p.overlap = j.at("overlap").get<int>();
        p.format = tile_format_from_string(j.at("tile_format").get<std::string>());
        if (p.tile_size < 1 || p.base_width < 1 || p.base_height < 1)
            throw Error(ErrorKind::CorruptPyramid, "non-positive geometry in descriptor");
        p.levels = pyramid_levels(p.base_width, p.base_height, p.tile_size);
        if (j.at("level_count").get<int>() != p.level_count())
            throw Error(ErrorKind::CorruptPyramid, "level count disagrees with the base size");
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::CorruptPyramid, std::string("bad descriptor: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::CorruptPyramid) throw;
        throw Error(ErrorKind::CorruptPyramid, e.what());
    }
}

Image reassemble(const TilePyramid& p, int level) {
    if (level < 0 || level >= p.level_count())
        throw Error(ErrorKind::InvalidArgument, "level " + std::to_string(level) + " out of range");
    const PyramidLevel& lv = p.levels[level];
    Image out;
    for (int row = 0; row < lv.rows; ++row)
        for (int col = 0; col < lv.cols; ++col) {
            const auto path = p.tile_path(level, col, row);
            if (!std::filesystem::exists(path)) throw Error(ErrorKind::CorruptPyramid, "missing tile " + path.string());
            Image tile;
            try {
                tile = read_image(path);
            } catch (const Error& e) {
                throw Error(ErrorKind::CorruptPyramid, "unreadable tile " + path.string() + ": " + e.what());
            }
            const auto [x0, x1] = tile_span(col, p.tile_size, p.overlap, lv.width);
            const auto [y0, y1] = tile_span(row, p.tile_size, p.overlap, lv.height);
            if (tile.width() != x1 - x0 || tile.height() != y1 - y0)
                throw Error(ErrorKind::CorruptPyramid, "tile " + path.string() + " is " + std::to_string(tile.width()) +
                                                           "x" + std::to_string(tile.height()) + ", expected " +
                                                           std::to_string(x1 - x0) + "x" + std::to_string(y1 - y0));
            if (out.empty()) out = Image(lv.width, lv.height, tile.channels());
            if (tile.channels() != out.channels())
                throw Error(ErrorKind::CorruptPyramid, "tile " + path.string() + " has a different channel count");
            // Keep only the core: overlap belongs to the neighbour.
            const int cx = col * p.tile_size - x0, cy = row * p.tile_size - y0;
            const int cw = std::min(p.tile_size, lv.width - col * p.tile_size);
            const int ch = std::min(p.tile_size, lv.height - row * p.tile_size);
            paste(out, crop(tile, {cx, cy, cw, ch}), col * p.tile_size, row * p.tile_size);
        }
    return out;
}

Image reassemble(const std::filesystem::path& dir, int level) { return reassemble(open_pyramid(dir), level); }

PyramidCheck verify_pyramid(const std::filesystem::path& dir, const Image* original) {
    PyramidCheck check;
    TilePyramid p;
    try {
        p = open_pyramid(dir);
    } catch (const Error& e) {
        check.problems.push_back(e.what());
        return check;
    }
    for (const auto& lv : p.levels) {
        std::size_t found = 0;
        const auto level_dir = p.tile_path(lv.level, 0, 0).parent_path();
        if (std::filesystem::is_directory(level_dir))
            for (const auto& e : std::filesystem::directory_iterator(level_dir)) found += e.is_regular_file();
        if (found != static_cast<std::size_t>(lv.cols) * lv.rows)
            check.problems.push_back("level " + std::to_string(lv.level) + " holds " + std::to_string(found) +
                                     " tiles, expected " + std::to_string(lv.cols * lv.rows));
    }
    Image below;
    for (int l = p.level_count() - 1; l >= 0; --l) {
        Image cur;
        try {
            cur = reassemble(p, l);
        } catch (const Error& e) {
            check.problems.push_back(e.what());
            below = {};
            continue;
        }
        if (p.format == TileFormat::Png) {
            if (l == p.level_count() - 1 && original && !(cur == *original))
                check.problems.push_back("base level differs from the original image");
            if (!below.empty() && !(cur == downsample2x(below)))
                check.problems.push_back("level " + std::to_string(l) + " is not the 2x reduction of level " +
                                         std::to_string(l + 1));
        }
        below = std::move(cur);
    }
    check.ok = check.problems.empty();
    return check;
}

}  // namespace vid2wsi
