#include "rounding.hpp"
#include "vid2wsi/image.hpp"

#include "vid2wsi/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vid2wsi {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::SingularTransform: return "SingularTransform";
        case ErrorKind::ImageTooSmall: return "ImageTooSmall";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::NoFramesFound: return "NoFramesFound";
        case ErrorKind::InconsistentDimensions: return "InconsistentDimensions";
        case ErrorKind::InsufficientMatches: return "InsufficientMatches";
        case ErrorKind::NoConsensus: return "NoConsensus";
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::StitchFailed: return "StitchFailed";
        case ErrorKind::NoValidTiles: return "NoValidTiles";
        case ErrorKind::IoError: return "IoError";
        case ErrorKind::CorruptPyramid: return "CorruptPyramid";
        case ErrorKind::SpecInfeasible: return "SpecInfeasible";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

Rect Rect::united(const Rect& o) const {
    if (empty()) return o;
    if (o.empty()) return *this;
    const int x0 = std::min(x, o.x);
    const int y0 = std::min(y, o.y);
    const int x1 = std::max(right(), o.right());
    const int y1 = std::max(bottom(), o.bottom());
    return {x0, y0, x1 - x0, y1 - y0};
}

Rect Rect::intersected(const Rect& o) const {
    const int x0 = std::max(x, o.x);
    const int y0 = std::max(y, o.y);
    const int x1 = std::min(right(), o.right());
    const int y1 = std::min(bottom(), o.bottom());
    if (x1 <= x0 || y1 <= y0) return {x0, y0, 0, 0};
    return {x0, y0, x1 - x0, y1 - y0};
}

namespace {

void check_shape(int width, int height, int channels) {
    if (width < 1 || height < 1)
        throw Error(ErrorKind::InvalidArgument,
                    "image dimensions must be positive, got " + std::to_string(width) + "x" +
                        std::to_string(height));
    if (channels != 1 && channels != 3)
        throw Error(ErrorKind::InvalidArgument,
                    "image must have 1 or 3 channels, got " + std::to_string(channels));
}

std::uint8_t clamp_u8(double v) {
    return detail::saturate_u8(v);
}

}  // namespace

Image::Image(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
    check_shape(width, height, channels);
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image::Image(int width, int height, int channels, std::vector<std::uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    check_shape(width, height, channels);
    if (data_.size() != static_cast<std::size_t>(width) * height * channels)
        throw Error(ErrorKind::InvalidArgument, "pixel buffer length does not match dimensions");
}

Image to_gray(const Image& img) {
    if (img.is_gray()) return img;
    Image out(img.width(), img.height(), 1);
    const auto src = img.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const double v = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
        dst[i] = clamp_u8(v);
    }
    return out;
}

Image gray_to_rgb(const Image& gray) {
    if (!gray.is_gray()) return gray;
    Image out(gray.width(), gray.height(), 3);
    const auto src = gray.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = src[i];
    return out;
}

Image crop(const Image& img, const Rect& r) {
    const Rect clipped = r.intersected(img.extent());
    if (clipped.empty() || clipped != r)
        throw Error(ErrorKind::InvalidArgument, "crop rectangle outside image");
    Image out(r.width, r.height, img.channels());
    const std::size_t row_bytes = static_cast<std::size_t>(r.width) * img.channels();
    for (int y = 0; y < r.height; ++y) {
        auto src = img.row(r.y + y).subspan(static_cast<std::size_t>(r.x) * img.channels(), row_bytes);
        std::copy(src.begin(), src.end(), out.row(y).begin());
    }
    return out;
}

void paste(Image& dst, const Image& src, int x, int y) {
    if (src.channels() != dst.channels())
        throw Error(ErrorKind::DimensionMismatch, "paste requires matching channel counts");
    const Rect target = Rect{x, y, src.width(), src.height()}.intersected(dst.extent());
    if (target.empty()) return;
    const int c = src.channels();
    for (int ty = target.y; ty < target.bottom(); ++ty) {
        auto s = src.row(ty - y).subspan(static_cast<std::size_t>(target.x - x) * c,
                                         static_cast<std::size_t>(target.width) * c);
        std::copy(s.begin(), s.end(), dst.row(ty).begin() + static_cast<std::ptrdiff_t>(target.x) * c);
    }
}

Image downsample2x(const Image& img) {
    const int w = (img.width() + 1) / 2;
    const int h = (img.height() + 1) / 2;
    const int c = img.channels();
    Image out(w, h, c);
    for (int y = 0; y < h; ++y) {
        const int y0 = 2 * y;
        const int y1 = std::min(2 * y + 1, img.height() - 1);
        for (int x = 0; x < w; ++x) {
            const int x0 = 2 * x;
            const int x1 = std::min(2 * x + 1, img.width() - 1);
            const int n = (y1 - y0 + 1) * (x1 - x0 + 1);
            for (int ch = 0; ch < c; ++ch) {
                int sum = 0;
                for (int yy = y0; yy <= y1; ++yy)
                    for (int xx = x0; xx <= x1; ++xx) sum += img.at(xx, yy, ch);
                out.at(x, y, ch) = static_cast<std::uint8_t>((sum + n / 2) / n);
            }
        }
    }
    return out;
}

Image downsample_box(const Image& img, int factor) {
    if (factor < 1) throw Error(ErrorKind::InvalidArgument, "downsample factor must be >= 1");
    if (factor == 1) return img;
    const int w = std::max(1, img.width() / factor);
    const int h = std::max(1, img.height() / factor);
    const int c = img.channels();
    Image out(w, h, c);
    std::vector<int> acc(static_cast<std::size_t>(w) * c);
    for (int y = 0; y < h; ++y) {
        std::fill(acc.begin(), acc.end(), 0);
        int rows = 0;
        for (int yy = y * factor; yy < std::min((y + 1) * factor, img.height()); ++yy, ++rows) {
            const auto r = img.row(yy);
            for (int x = 0; x < w; ++x)
                for (int xx = x * factor; xx < std::min((x + 1) * factor, img.width()); ++xx)
                    for (int ch = 0; ch < c; ++ch)
                        acc[static_cast<std::size_t>(x) * c + ch] += r[static_cast<std::size_t>(xx) * c + ch];
        }
        for (int x = 0; x < w; ++x) {
            const int cols = std::min((x + 1) * factor, img.width()) - x * factor;
            const int n = rows * cols;
            for (int ch = 0; ch < c; ++ch)
                out.at(x, y, ch) =
                    static_cast<std::uint8_t>((acc[static_cast<std::size_t>(x) * c + ch] + n / 2) / n);
        }
    }
    return out;
}

namespace {

// Area-coverage weights for one axis when shrinking src_len -> dst_len.
struct AxisWeights {
    std::vector<int> first;
    std::vector<std::vector<double>> weights;
};

AxisWeights area_weights(int src_len, int dst_len) {
    AxisWeights aw;
    const double scale = static_cast<double>(src_len) / dst_len;
    aw.first.resize(dst_len);
    aw.weights.resize(dst_len);
    for (int i = 0; i < dst_len; ++i) {
        const double a = i * scale;
        const double b = (i + 1) * scale;
        const int s0 = static_cast<int>(std::floor(a));
        const int s1 = std::min(src_len - 1, static_cast<int>(std::ceil(b)) - 1);
        aw.first[i] = s0;
        for (int s = s0; s <= s1; ++s) {
            const double cover = std::min<double>(b, s + 1) - std::max<double>(a, s);
            aw.weights[i].push_back(std::max(0.0, cover) / scale);
        }
    }
    return aw;
}

double bilinear_sample(const Image& img, double x, double y, int ch) {
    x = std::clamp(x, 0.0, img.width() - 1.0);
    y = std::clamp(y, 0.0, img.height() - 1.0);
    const int x0 = static_cast<int>(x);
    const int y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, img.width() - 1);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = img.at(x0, y0, ch) * (1 - fx) + img.at(x1, y0, ch) * fx;
    const double bot = img.at(x0, y1, ch) * (1 - fx) + img.at(x1, y1, ch) * fx;
    return top * (1 - fy) + bot * fy;
}

}  // namespace

Image resize(const Image& img, int new_width, int new_height) {
    if (new_width < 1 || new_height < 1) throw Error(ErrorKind::InvalidArgument, "resize target must be positive");
    const int c = img.channels();
    if (new_width == img.width() && new_height == img.height()) return img;
    if (new_width <= img.width() && new_height <= img.height()) {
        const AxisWeights wx = area_weights(img.width(), new_width);
        const AxisWeights wy = area_weights(img.height(), new_height);
        std::vector<double> tmp(static_cast<std::size_t>(new_width) * img.height() * c);
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < new_width; ++x)
                for (int ch = 0; ch < c; ++ch) {
                    double v = 0;
                    for (std::size_t k = 0; k < wx.weights[x].size(); ++k)
                        v += wx.weights[x][k] * img.at(wx.first[x] + static_cast<int>(k), y, ch);
                    tmp[(static_cast<std::size_t>(y) * new_width + x) * c + ch] = v;
                }
        Image out(new_width, new_height, c);
        for (int y = 0; y < new_height; ++y)
            for (int x = 0; x < new_width; ++x)
                for (int ch = 0; ch < c; ++ch) {
                    double v = 0;
                    for (std::size_t k = 0; k < wy.weights[y].size(); ++k)
                        v += wy.weights[y][k] *
                             tmp[((wy.first[y] + k) * new_width + x) * c + ch];
                    out.at(x, y, ch) = clamp_u8(v);
                }
        return out;
    }
    Image out(new_width, new_height, c);
    const double sx = static_cast<double>(img.width()) / new_width;
    const double sy = static_cast<double>(img.height()) / new_height;
    for (int y = 0; y < new_height; ++y)
        for (int x = 0; x < new_width; ++x)
            for (int ch = 0; ch < c; ++ch)
                out.at(x, y, ch) = clamp_u8(bilinear_sample(img, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5, ch));
    return out;
}

Image upscale(const Image& img, int factor) {
    if (factor < 1) throw Error(ErrorKind::InvalidArgument, "upscale factor must be >= 1");
    if (factor == 1) return img;
    const int c = img.channels();
    Image out(img.width() * factor, img.height() * factor, c);
    const double off = (factor - 1) / 2.0;
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            for (int ch = 0; ch < c; ++ch)
                out.at(x, y, ch) = clamp_u8(bilinear_sample(img, (x - off) / factor, (y - off) / factor, ch));
    return out;
}

Image gaussian_blur(const Image& img, double sigma) {
    if (sigma <= 0) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double total = 0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-(i * i) / (2 * sigma * sigma));
        total += kernel[i + radius];
    }
    for (double& k : kernel) k /= total;

    const int w = img.width();
    const int h = img.height();
    const int c = img.channels();
    std::vector<double> tmp(static_cast<std::size_t>(w) * h * c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double v = 0;
                for (int k = -radius; k <= radius; ++k)
                    v += kernel[k + radius] * img.at(std::clamp(x + k, 0, w - 1), y, ch);
                tmp[(static_cast<std::size_t>(y) * w + x) * c + ch] = v;
            }
    Image out(w, h, c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double v = 0;
                for (int k = -radius; k <= radius; ++k)
                    v += kernel[k + radius] * tmp[(static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x) * c + ch];
                out.at(x, y, ch) = clamp_u8(v);
            }
    return out;
}

Image apply_gain(const Image& img, double gain) {
    Image out = img;
    for (auto& v : out.data()) v = clamp_u8(v * gain);
    return out;
}

Image add_constant(const Image& img, int offset) {
    Image out = img;
    for (auto& v : out.data()) v = static_cast<std::uint8_t>(std::clamp(v + offset, 0, 255));
    return out;
}

Plane to_plane(const Image& gray) {
    const Image g = to_gray(gray);
    Plane p(g.width(), g.height());
    const auto src = g.data();
    std::copy(src.begin(), src.end(), p.data.begin());
    return p;
}

std::vector<std::uint8_t> content_mask(const Image& img) {
    const std::size_t n = static_cast<std::size_t>(img.width()) * img.height();
    std::vector<std::uint8_t> mask(n, 0);
    const auto d = img.data();
    const int c = img.channels();
    for (std::size_t i = 0; i < n; ++i) {
        bool bg = true;
        for (int ch = 0; ch < c; ++ch) bg = bg && d[i * c + ch] == kBackground;
        mask[i] = bg ? 0 : 1;
    }
    return mask;
}

}  // namespace vid2wsi
