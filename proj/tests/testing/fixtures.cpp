#include "testing/fixtures.hpp"

#include <atomic>
#include <chrono>
#include <unistd.h>

namespace vid2wsi::testing {

Image noise_texture(int width, int height, std::uint64_t seed, int channels) {
    std::mt19937_64 rng(seed);
    Image raw(width, height, channels);
    for (auto& v : raw.data()) v = static_cast<std::uint8_t>(30 + rng() % 191);
    return gaussian_blur(raw, 0.7);
}

Image checkerboard(int width, int height, int cell, std::uint8_t lo, std::uint8_t hi) {
    Image img(width, height, 1);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) img.at(x, y) = ((x / cell + y / cell) % 2) ? hi : lo;
    return img;
}

Image shifted(const Image& img, int dx, int dy, std::uint8_t fill) {
    Image out(img.width(), img.height(), img.channels(), fill);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const int sx = x - dx, sy = y - dy;
            if (sx < 0 || sy < 0 || sx >= img.width() || sy >= img.height()) continue;
            for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = img.at(sx, sy, c);
        }
    return out;
}

TempDir::TempDir(const std::string& prefix) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (prefix + "_" + std::to_string(::getpid()) + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

}  // namespace vid2wsi::testing
