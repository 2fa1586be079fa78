#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace vid2wsi {

/// Background value written wherever no source data exists.
inline constexpr std::uint8_t kBackground = 255;

/// Integer rectangle; `x`/`y` may be negative (canvas coordinates).
struct Rect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    bool empty() const { return width <= 0 || height <= 0; }
    int right() const { return x + width; }    // exclusive
    int bottom() const { return y + height; }  // exclusive
    long long area() const { return empty() ? 0 : static_cast<long long>(width) * height; }
    bool contains(int px, int py) const { return px >= x && py >= y && px < right() && py < bottom(); }

    Rect united(const Rect& o) const;
    Rect intersected(const Rect& o) const;
    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Owned 8-bit raster, 1 (gray) or 3 (RGB) interleaved channels, row-major.
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, std::uint8_t fill = 0);
    Image(int width, int height, int channels, std::vector<std::uint8_t> data);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return data_.empty(); }
    bool is_gray() const { return channels_ == 1; }
    Rect extent() const { return {0, 0, width_, height_}; }

    std::uint8_t at(int x, int y, int c = 0) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    std::uint8_t& at(int x, int y, int c = 0) {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    std::span<const std::uint8_t> row(int y) const {
        return {data_.data() + static_cast<std::size_t>(y) * width_ * channels_,
                static_cast<std::size_t>(width_) * channels_};
    }
    std::span<std::uint8_t> row(int y) {
        return {data_.data() + static_cast<std::size_t>(y) * width_ * channels_,
                static_cast<std::size_t>(width_) * channels_};
    }

    std::span<const std::uint8_t> data() const { return data_; }
    std::span<std::uint8_t> data() { return data_; }

    bool same_shape(const Image& o) const {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }
    friend bool operator==(const Image&, const Image&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Single-channel float plane used for intermediate computations.
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    Plane() = default;
    Plane(int w, int h, float fill = 0.0f)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}
    float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// ITU-R BT.601 luma (0.299, 0.587, 0.114). Gray input is returned unchanged.
Image to_gray(const Image& img);

/// Replicates a gray image into three channels.
Image gray_to_rgb(const Image& gray);

Image crop(const Image& img, const Rect& r);

/// Copies `src` into `dst` with its top-left at (x, y); clipped to `dst`.
void paste(Image& dst, const Image& src, int x, int y);

/// 2x2 box-filter reduction; odd trailing rows/columns average the pixels that exist.
/// Output size is ceil(w/2) x ceil(h/2). Rounds half up.
Image downsample2x(const Image& img);

/// Integer-factor box-filter reduction (area average over factor x factor blocks).
Image downsample_box(const Image& img, int factor);

/// Area-average resize to an arbitrary smaller size, or bilinear when enlarging.
Image resize(const Image& img, int new_width, int new_height);

/// Enlarges by an integer factor with bilinear interpolation; output pixel X samples
/// the source at (X - (f-1)/2) / f, the inverse of `downsample_box`'s centre mapping.
Image upscale(const Image& img, int factor);

Image gaussian_blur(const Image& img, double sigma);

/// Multiplies every channel by `gain` and clamps to [0, 255].
Image apply_gain(const Image& img, double gain);

/// Adds `offset` to every channel and clamps to [0, 255].
Image add_constant(const Image& img, int offset);

/// Gray image promoted to float.
Plane to_plane(const Image& gray);

/// Mask of pixels that are not pure background (any channel != 255).
std::vector<std::uint8_t> content_mask(const Image& img);

}  // namespace vid2wsi
