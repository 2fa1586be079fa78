#pragma once

#include "vid2wsi/image.hpp"
#include "vid2wsi/transform.hpp"

#include <cstdint>
#include <vector>

namespace vid2wsi {

enum class Interpolation { Nearest, Bilinear };

struct WarpResult {
    Image image;                      // background-filled where invalid
    std::vector<std::uint8_t> valid;  // 1 where the sample fell inside the source
    Rect bounds;                      // canvas rectangle covered by `image`

    bool is_valid(int x, int y) const { return valid[static_cast<std::size_t>(y) * image.width() + x] != 0; }
};

/// Resamples `src` onto `out_bounds` of the canvas: output pixel p takes the value of
/// `src` at t^-1(p). Samples whose pixel footprint lies outside `src` are background.
/// Throws Error(SingularTransform) for non-invertible `t`.
WarpResult warp(const Image& src, const Transform2D& t, const Rect& out_bounds,
                Interpolation interp = Interpolation::Bilinear);

/// Smallest canvas rectangle containing every pixel centre that `warp` could mark valid.
Rect warped_bounds(const Transform2D& t, int width, int height);

}  // namespace vid2wsi
