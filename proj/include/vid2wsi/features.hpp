#pragma once

#include "vid2wsi/image.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <span>
#include <vector>

namespace vid2wsi {

struct Keypoint {
    double x = 0;
    double y = 0;
    double response = 0;
    double orientation = 0;  // radians, from the intensity centroid
};

/// 256-bit oriented binary descriptor.
struct Descriptor {
    std::array<std::uint64_t, 4> bits{};
    friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

inline int hamming(const Descriptor& a, const Descriptor& b) {
    int d = 0;
    for (int i = 0; i < 4; ++i) d += std::popcount(a.bits[i] ^ b.bits[i]);
    return d;
}

struct FeatureParams {
    int max_keypoints = 1000;
    int fast_threshold = 20;  // segment-test contrast, grey levels
    int cell_size = 64;       // bucketing grid
    int per_cell_cap = 0;     // 0: 2 * max_keypoints / cells, at least 4
};

/// Keypoints and their descriptors, index-aligned.
struct FeatureSet {
    std::vector<Keypoint> keypoints;
    std::vector<Descriptor> descriptors;

    std::size_t size() const { return keypoints.size(); }
};

/// Pixels between a keypoint and the image border; the descriptor patch needs it.
inline constexpr int kFeatureMargin = 18;

/// FAST-9 segment test on the 16-pixel Bresenham circle with 3x3 non-maximum
/// suppression, per-cell retention cap, then the strongest `max_keypoints`.
/// Throws Error(ImageTooSmall) when the smaller side is below 32 px.
/// When `valid` is given (one byte per pixel), keypoints whose descriptor patch
/// touches an invalid pixel are discarded.
std::vector<Keypoint> detect(const Image& img, int max_keypoints, const FeatureParams& params = {},
                             const std::vector<std::uint8_t>* valid = nullptr);

/// Steered BRIEF descriptors on a 5x5 box-smoothed copy of the image.
std::vector<Descriptor> describe(const Image& img, std::span<const Keypoint> keypoints);

FeatureSet extract_features(const Image& img, const FeatureParams& params = {},
                            const std::vector<std::uint8_t>* valid = nullptr);

}  // namespace vid2wsi
