#pragma once

#include "vid2wsi/image.hpp"
#include "vid2wsi/transform.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace vid2wsi {

enum class BlendMode { Feather, None };

std::string_view to_string(BlendMode mode);
BlendMode blend_mode_from_string(std::string_view name);

/// One image and where it lands on the canvas.
struct Placement {
    const Image* image = nullptr;
    Transform2D transform;  // image pixel -> canvas
};

struct RenderOptions {
    BlendMode blend = BlendMode::Feather;
    bool gain_compensation = true;
    double gain_min = 0.7;
    double gain_max = 1.4;
    int threads = 1;
};

struct Rendered {
    Image image;                      // background where nothing landed
    std::vector<std::uint8_t> valid;  // 1 where at least one image contributed
    Rect bounds;                      // canvas rectangle covered by `image`
    std::vector<double> gains;        // per placement, 1 when compensation is off
};

/// Composites placements in order. Feather weights each sample by its distance to the
/// source image border; None lets later images overwrite earlier ones. With gain
/// compensation each image after the first is scaled by the median luma ratio
/// (composite / image) over its overlap with what is already drawn, clamped to
/// [gain_min, gain_max]. Bilinear sampling, float accumulation. Output does not
/// depend on `threads`.
/// `bounds` defaults to the union of the placements' warped bounds.
Rendered render(std::span<const Placement> placements, const RenderOptions& options,
                std::optional<Rect> bounds = std::nullopt);

}  // namespace vid2wsi
