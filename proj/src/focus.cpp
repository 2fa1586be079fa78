#include "vid2wsi/focus.hpp"

#include "vid2wsi/errors.hpp"

#include <cstdint>

namespace vid2wsi {

FocusScore focus_score(const Image& img) {
    if (img.width() < 3 || img.height() < 3)
        throw Error(ErrorKind::ImageTooSmall, "focus score needs at least 3x3 pixels");
    const Image gray = to_gray(img);
    const int w = gray.width();
    const int h = gray.height();

    // Integer accumulation keeps the result independent of summation order.
    std::int64_t sum = 0;
    std::int64_t sum_sq = 0;
    for (int y = 1; y < h - 1; ++y) {
        const auto up = gray.row(y - 1);
        const auto mid = gray.row(y);
        const auto down = gray.row(y + 1);
        for (int x = 1; x < w - 1; ++x) {
            const std::int64_t r = up[x] + down[x] + mid[x - 1] + mid[x + 1] - 4 * mid[x];
            sum += r;
            sum_sq += r * r;
        }
    }
    const std::int64_t n = static_cast<std::int64_t>(w - 2) * (h - 2);
    const __int128 numer = static_cast<__int128>(n) * sum_sq - static_cast<__int128>(sum) * sum;
    return {static_cast<double>(numer) / (static_cast<double>(n) * static_cast<double>(n))};
}

}  // namespace vid2wsi
