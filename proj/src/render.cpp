#include "vid2wsi/render.hpp"

#include "sampling.hpp"
#include "vid2wsi/errors.hpp"
#include "vid2wsi/parallel.hpp"
#include "vid2wsi/warp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace vid2wsi {

std::string_view to_string(BlendMode mode) { return mode == BlendMode::Feather ? "feather" : "none"; }

BlendMode blend_mode_from_string(std::string_view name) {
    if (name == "feather") return BlendMode::Feather;
    if (name == "none") return BlendMode::None;
    throw Error(ErrorKind::InvalidArgument, "unknown blend mode '" + std::string(name) + "'");
}

namespace {

constexpr float kLumaR = 0.299f, kLumaG = 0.587f, kLumaB = 0.114f;

// Bilinear sample in float with edge replication. SC source channels are
// written to DC output channels (gray is replicated).
template <int SC, int DC>
inline void sample(const std::uint8_t* d, int w, int h, double x, double y, float* out) {
    x = std::clamp(x, 0.0, w - 1.0);
    y = std::clamp(y, 0.0, h - 1.0);
    const int x0 = static_cast<int>(x);
    const int y0 = static_cast<int>(y);
    const int dx = x0 + 1 < w ? SC : 0;
    const std::ptrdiff_t dy = y0 + 1 < h ? static_cast<std::ptrdiff_t>(w) * SC : 0;
    const float fx = static_cast<float>(x - x0);
    const float fy = static_cast<float>(y - y0);
    const std::uint8_t* p = d + (static_cast<std::size_t>(y0) * w + x0) * SC;
    for (int ch = 0; ch < SC; ++ch) {
        const float top = p[ch] + (p[ch + dx] - p[ch]) * fx;
        const float bot = p[ch + dy] + (p[ch + dy + dx] - p[ch + dy]) * fx;
        out[ch] = top + (bot - top) * fy;
    }
    if constexpr (SC == 1 && DC == 3) out[1] = out[2] = out[0];
}

struct Canvas {
    Rect bounds;
    int channels;
    std::vector<float> acc;  // bounds.area * channels
    std::vector<float> weight;

    std::size_t index(int cx, int cy) const {
        return static_cast<std::size_t>(cy - bounds.y) * bounds.width + (cx - bounds.x);
    }
    float luma(std::size_t i) const {
        const float w = weight[i];
        const float* a = &acc[i * channels];
        if (channels == 1) return a[0] / w;
        return (kLumaR * a[0] + kLumaG * a[1] + kLumaB * a[2]) / w;
    }
};

// Source position of canvas pixel (cx, cy) under the inverse map.
struct InverseMap {
    std::array<double, 9> m;
    bool projective;

    explicit InverseMap(const Transform2D& inv)
        : m(inv.matrix()), projective(inv.model() == TransformModel::Homography) {}

    void apply(double cx, double cy, double& sx, double& sy) const {
        sx = m[0] * cx + m[1] * cy + m[2];
        sy = m[3] * cx + m[4] * cy + m[5];
        if (projective) {
            const double wz = m[6] * cx + m[7] * cy + m[8];
            sx /= wz;
            sy /= wz;
        }
    }
    bool inside(int cx, int cy, int w, int h) const {
        double sx, sy;
        apply(cx, cy, sx, sy);
        return detail::inside_footprint(sx, sy, w, h);
    }
};

// Columns [lo, hi) of canvas row cy (clipped to rect) that map into the image
// footprint. For affine maps the set is an interval found in closed form and then
// snapped with the exact per-pixel test; projective maps are scanned.
std::pair<int, int> footprint_span(const InverseMap& inv, int w, int h, const Rect& rect, int cy) {
    int lo = rect.x, hi = rect.right();
    if (inv.projective) {
        while (lo < hi && !inv.inside(lo, cy, w, h)) ++lo;
        while (hi > lo && !inv.inside(hi - 1, cy, w, h)) --hi;
        return {lo, hi};
    }
    double a = lo, b = hi;
    auto clip = [&](double slope, double offset, double extent) {
        // Solve -0.5 <= slope * x + offset < extent - 0.5.
        if (std::abs(slope) < 1e-12) {
            if (offset < -0.5 || offset >= extent - 0.5) b = a - 1;
            return;
        }
        double x0 = (-0.5 - offset) / slope, x1 = (extent - 0.5 - offset) / slope;
        if (x0 > x1) std::swap(x0, x1);
        a = std::max(a, x0);
        b = std::min(b, x1);
    };
    const auto& m = inv.m;
    clip(m[0], m[1] * cy + m[2], w);
    clip(m[3], m[4] * cy + m[5], h);
    if (b < a) return {lo, lo};
    lo = std::clamp(static_cast<int>(std::floor(a)) - 1, rect.x, rect.right());
    hi = std::clamp(static_cast<int>(std::ceil(b)) + 2, lo, rect.right());
    while (lo < hi && !inv.inside(lo, cy, w, h)) ++lo;
    while (hi > lo && !inv.inside(hi - 1, cy, w, h)) --hi;
    return {lo, hi};
}

template <int SC, int DC>
void median_samples(const Canvas& canvas, const Image& img, const InverseMap& inv, const Rect& rect,
                    std::vector<float>& ratios) {
    const std::uint8_t* d = img.data().data();
    float px[3];
    // Every other row and column is plenty for a median.
    for (int cy = rect.y; cy < rect.bottom(); cy += 2) {
        auto [lo, hi] = footprint_span(inv, img.width(), img.height(), rect, cy);
        if ((lo - rect.x) & 1) ++lo;
        for (int cx = lo; cx < hi; cx += 2) {
            const std::size_t i = canvas.index(cx, cy);
            if (canvas.weight[i] <= 0) continue;
            double sx, sy;
            inv.apply(cx, cy, sx, sy);
            sample<SC, SC>(d, img.width(), img.height(), sx, sy, px);
            const float l = SC == 1 ? px[0] : kLumaR * px[0] + kLumaG * px[1] + kLumaB * px[2];
            if (l < 8.0f) continue;
            ratios.push_back(canvas.luma(i) / l);
        }
    }
}

double median_gain(const Canvas& canvas, const Image& img, const InverseMap& inv, const Rect& rect,
                   const RenderOptions& opt) {
    std::vector<float> ratios;
    if (img.channels() == 1)
        median_samples<1, 1>(canvas, img, inv, rect, ratios);
    else
        median_samples<3, 3>(canvas, img, inv, rect, ratios);
    if (ratios.empty()) return 1.0;
    const auto mid = ratios.begin() + static_cast<std::ptrdiff_t>(ratios.size() / 2);
    std::nth_element(ratios.begin(), mid, ratios.end());
    double med = *mid;
    if (ratios.size() % 2 == 0) med = 0.5 * (med + *std::max_element(ratios.begin(), mid));
    return std::clamp(med, opt.gain_min, opt.gain_max);
}

template <int SC, int DC>
void splat_row(Canvas& canvas, const Image& img, const InverseMap& inv, const Rect& rect, int cy, float gain,
               BlendMode blend) {
    const auto [lo, hi] = footprint_span(inv, img.width(), img.height(), rect, cy);
    if (lo >= hi) return;
    const std::uint8_t* d = img.data().data();
    const int w = img.width(), h = img.height();
    const float half_w = w - 0.5f, half_h = h - 0.5f;
    const std::ptrdiff_t stride = static_cast<std::ptrdiff_t>(w) * SC;
    float* acc = &canvas.acc[canvas.index(lo, cy) * DC];
    float* weight = &canvas.weight[canvas.index(lo, cy)];
    double sx, sy;
    inv.apply(lo, cy, sx, sy);
    float px[3];
    for (int cx = lo; cx < hi; ++cx, acc += DC, ++weight) {
        if (cx > lo) {
            if (inv.projective)
                inv.apply(cx, cy, sx, sy);
            else {
                sx += inv.m[0];
                sy += inv.m[3];
            }
        }
        float wt = 1.0f;
        if (blend == BlendMode::Feather) {
            const float fx = static_cast<float>(sx), fy = static_cast<float>(sy);
            wt = std::min(std::min(fx + 0.5f, half_w - fx), std::min(fy + 0.5f, half_h - fy));
            if (wt <= 0) continue;
        }
        if (sx >= 0 && sy >= 0 && sx < w - 1 && sy < h - 1) {
            // Interior: all four neighbours exist.
            const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
            const float fx = static_cast<float>(sx - x0), fy = static_cast<float>(sy - y0);
            const std::uint8_t* p = d + y0 * stride + x0 * SC;
            for (int ch = 0; ch < SC; ++ch) {
                const float top = p[ch] + (p[ch + SC] - p[ch]) * fx;
                const float bot = p[ch + stride] + (p[ch + stride + SC] - p[ch + stride]) * fx;
                px[ch] = top + (bot - top) * fy;
            }
            if constexpr (SC == 1 && DC == 3) px[1] = px[2] = px[0];
        } else {
            sample<SC, DC>(d, w, h, sx, sy, px);
        }
        if (blend == BlendMode::None) {
            *weight = 0.0f;
            for (int ch = 0; ch < DC; ++ch) acc[ch] = 0.0f;
        }
        for (int ch = 0; ch < DC; ++ch) acc[ch] += std::min(255.0f, px[ch] * gain) * wt;
        *weight += wt;
    }
}

}  // namespace

Rendered render(std::span<const Placement> placements, const RenderOptions& options, std::optional<Rect> bounds) {
    if (placements.empty()) throw Error(ErrorKind::EmptyInput, "nothing to render");
    Rect out = bounds.value_or(Rect{});
    int channels = 1;
    for (const auto& p : placements) {
        if (!p.image || p.image->empty()) throw Error(ErrorKind::InvalidArgument, "placement without an image");
        if (!bounds) out = out.united(warped_bounds(p.transform, p.image->width(), p.image->height()));
        channels = std::max(channels, p.image->channels());
    }
    if (out.empty()) throw Error(ErrorKind::InvalidArgument, "render bounds are empty");

    Canvas canvas{out, channels, std::vector<float>(static_cast<std::size_t>(out.area()) * channels, 0.0f),
                  std::vector<float>(static_cast<std::size_t>(out.area()), 0.0f)};
    Rendered res;
    res.bounds = out;
    res.gains.assign(placements.size(), 1.0);

    for (std::size_t k = 0; k < placements.size(); ++k) {
        const Image& img = *placements[k].image;
        const InverseMap inv(placements[k].transform.inverse());
        const Rect rect = warped_bounds(placements[k].transform, img.width(), img.height()).intersected(out);
        if (rect.empty()) continue;
        const float gain =
            options.gain_compensation && k > 0 ? static_cast<float>(median_gain(canvas, img, inv, rect, options)) : 1.0f;
        res.gains[k] = gain;
        auto splat = img.channels() == 1 ? (channels == 1 ? &splat_row<1, 1> : &splat_row<1, 3>) : &splat_row<3, 3>;

        // Rows are disjoint, so row-parallel accumulation is order-independent.
        parallel_for(static_cast<std::size_t>(rect.height), options.threads, [&](std::size_t y) {
            splat(canvas, img, inv, rect, rect.y + static_cast<int>(y), gain, options.blend);
        });
    }

    res.image = Image(out.width, out.height, channels, kBackground);
    res.valid.assign(static_cast<std::size_t>(out.area()), 0);
    auto data = res.image.data();
    for (std::size_t i = 0; i < res.valid.size(); ++i) {
        const float w = canvas.weight[i];
        if (w <= 0) continue;
        res.valid[i] = 1;
        for (int ch = 0; ch < channels; ++ch)
            data[i * channels + ch] = detail::to_u8(canvas.acc[i * channels + ch] / w);
    }
    return res;
}

}  // namespace vid2wsi
