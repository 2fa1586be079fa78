#include "rounding.hpp"
#include "vid2wsi/features.hpp"

#include "vid2wsi/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace vid2wsi {

namespace {

// Bresenham circle of radius 3, clockwise from 12 o'clock.
constexpr int kCircle[16][2] = {{0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0},  {3, 1},  {2, 2},  {1, 3},
                                {0, 3},  {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}};
constexpr int kArc = 9;
constexpr int kPatchRadius = 15;
constexpr int kSampleRadius = 13;

// Returns the SAD corner score, or 0 when the segment test fails.
int fast_score(const std::uint8_t* p, int threshold, const std::ptrdiff_t* offsets) {
    const int c = p[0];
    const int hi = c + threshold;
    const int lo = c - threshold;

    // Any arc of 9 contiguous pixels covers at least two of the four compass points.
    int bright_q = 0, dark_q = 0;
    for (int k = 0; k < 16; k += 4) {
        const int v = p[offsets[k]];
        bright_q += v > hi;
        dark_q += v < lo;
    }
    if (bright_q < 2 && dark_q < 2) return 0;

    // Bit k of each mask is circle pixel k; a 9-long run (with wrap-around) is found
    // by folding the doubled mask onto itself.
    std::uint32_t bright_m = 0, dark_m = 0;
    for (int k = 0; k < 16; ++k) {
        const int v = p[offsets[k]];
        bright_m |= static_cast<std::uint32_t>(v > hi) << k;
        dark_m |= static_cast<std::uint32_t>(v < lo) << k;
    }
    auto has_arc = [](std::uint32_t m) {
        m |= m << 16;
        std::uint32_t r = m & (m >> 1);
        r &= r >> 2;
        r &= r >> 4;
        static_assert(kArc == 9);
        return (r & (m >> 8) & 0xFFFFu) != 0;
    };
    if (!has_arc(bright_m) && !has_arc(dark_m)) return 0;

    int bright = 0, dark = 0;
    for (int k = 0; k < 16; ++k) {
        const int v = p[offsets[k]];
        if (v > hi) bright += v - hi;
        if (v < lo) dark += lo - v;
    }
    return std::max(bright, dark);
}

struct PairPattern {
    std::array<std::array<float, 4>, 256> pts{};
};

// Fixed pseudo-random sampling pattern shared by every descriptor.
const PairPattern& pattern() {
    static const PairPattern pat = [] {
        PairPattern p;
        std::mt19937 rng(0x5eed1234u);
        // Box-Muller over the raw engine output keeps the pattern identical across
        // standard library implementations.
        auto gauss = [&rng] {
            const double u1 = (rng() + 1.0) / 4294967297.0;
            const double u2 = (rng() + 1.0) / 4294967297.0;
            return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        };
        const double sigma = (2 * kPatchRadius + 1) / 5.0;
        for (auto& pt : p.pts) {
            for (int k = 0; k < 4; k += 2) {
                double x, y;
                do {
                    x = gauss() * sigma;
                    y = gauss() * sigma;
                } while (x * x + y * y > kSampleRadius * kSampleRadius);
                pt[k] = static_cast<float>(x);
                pt[k + 1] = static_cast<float>(y);
            }
        }
        return p;
    }();
    return pat;
}

constexpr int kAngleBins = 360;

// The pattern rotated to each of kAngleBins steering angles, as integer offsets.
struct SteeredPatterns {
    std::vector<std::array<std::int8_t, 4>> pts;  // bin * 256 + pair
};

const SteeredPatterns& steered_patterns() {
    static const SteeredPatterns table = [] {
        SteeredPatterns t;
        t.pts.resize(static_cast<std::size_t>(kAngleBins) * 256);
        const auto& pat = pattern();
        for (int bin = 0; bin < kAngleBins; ++bin) {
            const double a = 2.0 * M_PI * bin / kAngleBins;
            const double c = std::cos(a), s = std::sin(a);
            for (int b = 0; b < 256; ++b) {
                const auto& p = pat.pts[b];
                auto& q = t.pts[static_cast<std::size_t>(bin) * 256 + b];
                for (int k = 0; k < 4; k += 2) {
                    q[k] = static_cast<std::int8_t>(detail::iround(c * p[k] - s * p[k + 1]));
                    q[k + 1] = static_cast<std::int8_t>(detail::iround(s * p[k] + c * p[k + 1]));
                }
            }
        }
        return t;
    }();
    return table;
}

Image box_smooth5(const Image& gray) {
    const int w = gray.width();
    const int h = gray.height();
    std::vector<std::int32_t> integral(static_cast<std::size_t>(w + 1) * (h + 1), 0);
    for (int y = 0; y < h; ++y) {
        std::int32_t row = 0;
        const auto r = gray.row(y);
        for (int x = 0; x < w; ++x) {
            row += r[x];
            integral[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] =
                integral[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
        }
    }
    Image out(w, h, 1);
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - 2), y1 = std::min(h, y + 3);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - 2), x1 = std::min(w, x + 3);
            const std::int32_t s = integral[static_cast<std::size_t>(y1) * (w + 1) + x1] -
                                   integral[static_cast<std::size_t>(y0) * (w + 1) + x1] -
                                   integral[static_cast<std::size_t>(y1) * (w + 1) + x0] +
                                   integral[static_cast<std::size_t>(y0) * (w + 1) + x0];
            const int n = (y1 - y0) * (x1 - x0);
            out.at(x, y) = static_cast<std::uint8_t>(n == 25 ? (s + 12) / 25 : (s + n / 2) / n);
        }
    }
    return out;
}

double centroid_orientation(const Image& gray, int cx, int cy) {
    double m01 = 0, m10 = 0;
    for (int dy = -kPatchRadius; dy <= kPatchRadius; ++dy) {
        const int span = static_cast<int>(std::sqrt(kPatchRadius * kPatchRadius - dy * dy));
        const auto r = gray.row(cy + dy);
        for (int dx = -span; dx <= span; ++dx) {
            const double v = r[cx + dx];
            m10 += dx * v;
            m01 += dy * v;
        }
    }
    return std::atan2(m01, m10);
}

std::vector<std::int32_t> invalid_integral(const std::vector<std::uint8_t>& valid, int w, int h) {
    std::vector<std::int32_t> integral(static_cast<std::size_t>(w + 1) * (h + 1), 0);
    for (int y = 0; y < h; ++y) {
        std::int32_t row = 0;
        for (int x = 0; x < w; ++x) {
            row += valid[static_cast<std::size_t>(y) * w + x] ? 0 : 1;
            integral[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] =
                integral[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
        }
    }
    return integral;
}

}  // namespace

std::vector<Keypoint> detect(const Image& img, int max_keypoints, const FeatureParams& params,
                             const std::vector<std::uint8_t>* valid) {
    if (std::min(img.width(), img.height()) < 32)
        throw Error(ErrorKind::ImageTooSmall, "feature detection needs at least 32x32 pixels, got " +
                                                  std::to_string(img.width()) + "x" + std::to_string(img.height()));
    if (max_keypoints <= 0) return {};
    const Image gray = to_gray(img);
    const int w = gray.width();
    const int h = gray.height();
    if (valid && valid->size() != static_cast<std::size_t>(w) * h)
        throw Error(ErrorKind::DimensionMismatch, "validity mask does not match image");

    std::ptrdiff_t offsets[16];
    for (int k = 0; k < 16; ++k) offsets[k] = kCircle[k][1] * static_cast<std::ptrdiff_t>(w) + kCircle[k][0];

    const int m = kFeatureMargin;
    std::vector<std::int32_t> score(static_cast<std::size_t>(w) * h, 0);
    for (int y = m - 1; y < h - m + 1; ++y) {
        const std::uint8_t* row = gray.row(y).data();
        for (int x = m - 1; x < w - m + 1; ++x)
            score[static_cast<std::size_t>(y) * w + x] = fast_score(row + x, params.fast_threshold, offsets);
    }

    std::vector<std::int32_t> bad;
    if (valid) bad = invalid_integral(*valid, w, h);
    auto patch_valid = [&](int x, int y) {
        if (!valid) return true;
        const int r = kFeatureMargin - 1;
        const int x0 = x - r, x1 = x + r + 1, y0 = y - r, y1 = y + r + 1;
        return bad[static_cast<std::size_t>(y1) * (w + 1) + x1] - bad[static_cast<std::size_t>(y0) * (w + 1) + x1] -
                   bad[static_cast<std::size_t>(y1) * (w + 1) + x0] + bad[static_cast<std::size_t>(y0) * (w + 1) + x0] ==
               0;
    };

    // Non-maximum suppression keeps plateaus (>=) so symmetric blobs report every extremal pixel.
    std::vector<Keypoint> candidates;
    for (int y = m; y < h - m; ++y) {
        for (int x = m; x < w - m; ++x) {
            const std::int32_t s = score[static_cast<std::size_t>(y) * w + x];
            if (s == 0) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (score[static_cast<std::size_t>(y + dy) * w + x + dx] > s) {
                        is_max = false;
                        break;
                    }
            if (is_max && patch_valid(x, y)) candidates.push_back({double(x), double(y), double(s), 0.0});
        }
    }

    auto stronger = [](const Keypoint& a, const Keypoint& b) {
        if (a.response != b.response) return a.response > b.response;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    };

    // Per-cell cap so dense texture cannot starve sparse regions.
    const int cell = std::max(8, params.cell_size);
    const int cols = (w + cell - 1) / cell;
    const int rows = (h + cell - 1) / cell;
    const int cap = params.per_cell_cap > 0 ? params.per_cell_cap
                                            : std::max(4, (2 * max_keypoints + cols * rows - 1) / (cols * rows));
    std::vector<std::vector<Keypoint>> buckets(static_cast<std::size_t>(cols) * rows);
    for (const auto& kp : candidates)
        buckets[static_cast<std::size_t>(kp.y) / cell * cols + static_cast<std::size_t>(kp.x) / cell].push_back(kp);
    std::vector<Keypoint> kept;
    for (auto& b : buckets) {
        std::sort(b.begin(), b.end(), stronger);
        if (static_cast<int>(b.size()) > cap) b.resize(cap);
        kept.insert(kept.end(), b.begin(), b.end());
    }
    std::sort(kept.begin(), kept.end(), stronger);
    if (static_cast<int>(kept.size()) > max_keypoints) kept.resize(max_keypoints);
    for (auto& kp : kept) kp.orientation = centroid_orientation(gray, static_cast<int>(kp.x), static_cast<int>(kp.y));
    return kept;
}

std::vector<Descriptor> describe(const Image& img, std::span<const Keypoint> keypoints) {
    const Image smooth = box_smooth5(to_gray(img));
    const auto& steer = steered_patterns();
    const std::ptrdiff_t stride = smooth.width();
    std::vector<Descriptor> out(keypoints.size());
    for (std::size_t i = 0; i < keypoints.size(); ++i) {
        const auto& kp = keypoints[i];
        const int cx = detail::iround(kp.x);
        const int cy = detail::iround(kp.y);
        if (cx < kPatchRadius || cy < kPatchRadius || cx >= smooth.width() - kPatchRadius ||
            cy >= smooth.height() - kPatchRadius)
            throw Error(ErrorKind::InvalidArgument, "keypoint too close to the border for a descriptor");
        // Steering is quantised to 1 degree.
        int bin = detail::iround(kp.orientation * (kAngleBins / (2.0 * M_PI))) % kAngleBins;
        if (bin < 0) bin += kAngleBins;
        const auto* q = &steer.pts[static_cast<std::size_t>(bin) * 256];
        const std::uint8_t* centre = smooth.data().data() + static_cast<std::size_t>(cy) * stride + cx;
        Descriptor d;
        for (int b = 0; b < 256; ++b) {
            const std::uint8_t v0 = centre[q[b][1] * stride + q[b][0]];
            const std::uint8_t v1 = centre[q[b][3] * stride + q[b][2]];
            d.bits[b / 64] |= static_cast<std::uint64_t>(v0 < v1) << (b % 64);
        }
        out[i] = d;
    }
    return out;
}

FeatureSet extract_features(const Image& img, const FeatureParams& params, const std::vector<std::uint8_t>* valid) {
    FeatureSet fs;
    fs.keypoints = detect(img, params.max_keypoints, params, valid);
    fs.descriptors = describe(img, fs.keypoints);
    return fs;
}

}  // namespace vid2wsi
