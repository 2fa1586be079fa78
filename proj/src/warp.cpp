#include "vid2wsi/warp.hpp"

#include "sampling.hpp"
#include "vid2wsi/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace vid2wsi {

WarpResult warp(const Image& src, const Transform2D& t, const Rect& out_bounds, Interpolation interp) {
    if (out_bounds.empty()) throw Error(ErrorKind::InvalidArgument, "warp output bounds are empty");
    const Transform2D inv = t.inverse();
    const int c = src.channels();

    WarpResult res{Image(out_bounds.width, out_bounds.height, c, kBackground),
                   std::vector<std::uint8_t>(static_cast<std::size_t>(out_bounds.area()), 0), out_bounds};
    std::array<double, 3> px{};
    for (int y = 0; y < out_bounds.height; ++y) {
        auto row = res.image.row(y);
        for (int x = 0; x < out_bounds.width; ++x) {
            const Point2 s = inv.apply(out_bounds.x + x, out_bounds.y + y);
            if (!detail::inside_footprint(s.x, s.y, src.width(), src.height())) continue;
            if (interp == Interpolation::Nearest)
                detail::sample_nearest(src, s.x, s.y, px.data());
            else
                detail::sample_bilinear(src, s.x, s.y, px.data());
            for (int ch = 0; ch < c; ++ch) row[static_cast<std::size_t>(x) * c + ch] = detail::to_u8(px[ch]);
            res.valid[static_cast<std::size_t>(y) * out_bounds.width + x] = 1;
        }
    }
    return res;
}

Rect warped_bounds(const Transform2D& t, int width, int height) {
    double min_x = std::numeric_limits<double>::infinity();
    double min_y = min_x;
    double max_x = -min_x;
    double max_y = -min_x;
    for (const Point2 corner : {Point2{-0.5, -0.5}, Point2{width - 0.5, -0.5}, Point2{-0.5, height - 0.5},
                                Point2{width - 0.5, height - 0.5}}) {
        const Point2 p = t.apply(corner);
        min_x = std::min(min_x, p.x);
        min_y = std::min(min_y, p.y);
        max_x = std::max(max_x, p.x);
        max_y = std::max(max_y, p.y);
    }
    const int x0 = static_cast<int>(std::ceil(min_x - 1e-9));
    const int y0 = static_cast<int>(std::ceil(min_y - 1e-9));
    const int x1 = static_cast<int>(std::floor(max_x - 1e-9)) + 1;
    const int y1 = static_cast<int>(std::floor(max_y - 1e-9)) + 1;
    return {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

}  // namespace vid2wsi
