#pragma once

#include "rounding.hpp"
#include "vid2wsi/image.hpp"

#include <algorithm>
#include <cmath>

namespace vid2wsi::detail {

// A source position is usable when it lies inside the footprint of the image's
// pixels, i.e. [-0.5, w - 0.5) on each axis.
inline bool inside_footprint(double x, double y, int w, int h) {
    return x >= -0.5 && y >= -0.5 && x < w - 0.5 && y < h - 0.5;
}

inline int nearest_index(double v, int len) {
    return std::clamp(static_cast<int>(std::floor(v + 0.5)), 0, len - 1);
}

// Bilinear sample of all channels with edge replication; writes `channels` doubles.
inline void sample_bilinear(const Image& img, double x, double y, double* out) {
    const int w = img.width();
    const int h = img.height();
    const int c = img.channels();
    x = std::clamp(x, 0.0, w - 1.0);
    y = std::clamp(y, 0.0, h - 1.0);
    const int x0 = static_cast<int>(x);
    const int y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const auto d = img.data();
    const std::size_t r0 = static_cast<std::size_t>(y0) * w;
    const std::size_t r1 = static_cast<std::size_t>(y1) * w;
    for (int ch = 0; ch < c; ++ch) {
        const double p00 = d[(r0 + x0) * c + ch];
        const double p10 = d[(r0 + x1) * c + ch];
        const double p01 = d[(r1 + x0) * c + ch];
        const double p11 = d[(r1 + x1) * c + ch];
        const double top = p00 + (p10 - p00) * fx;
        const double bot = p01 + (p11 - p01) * fx;
        out[ch] = top + (bot - top) * fy;
    }
}

inline void sample_nearest(const Image& img, double x, double y, double* out) {
    const int xi = nearest_index(x, img.width());
    const int yi = nearest_index(y, img.height());
    for (int ch = 0; ch < img.channels(); ++ch) out[ch] = img.at(xi, yi, ch);
}

inline std::uint8_t to_u8(double v) {
    return saturate_u8(v);
}

}  // namespace vid2wsi::detail
