#pragma once

#include "vid2wsi/image.hpp"

namespace vid2wsi {

/// Sharpness: variance of the 4-neighbour Laplacian over interior pixels.
struct FocusScore {
    double value = 0;
    friend auto operator<=>(const FocusScore&, const FocusScore&) = default;
};

/// RGB input is converted to luma first. Throws Error(ImageTooSmall) below 3x3.
FocusScore focus_score(const Image& img);

}  // namespace vid2wsi
