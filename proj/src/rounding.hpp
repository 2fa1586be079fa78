#pragma once

#include <cstdint>

namespace vid2wsi::detail {

// Same result as std::lround for values in int range, without the libm call.
inline int iround(double v) { return v >= 0 ? static_cast<int>(v + 0.5) : -static_cast<int>(-v + 0.5); }

// Round and saturate to a byte; NaN maps to 0.
inline std::uint8_t saturate_u8(double v) {
    if (!(v > 0)) return 0;
    if (v >= 255) return 255;
    return static_cast<std::uint8_t>(v + 0.5);
}

}  // namespace vid2wsi::detail
