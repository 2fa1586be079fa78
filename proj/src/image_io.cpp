#include "vid2wsi/image_io.hpp"

#include "vid2wsi/errors.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cctype>
#include <string>
#include <vector>

namespace vid2wsi {

namespace {

std::string lower_ext(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw Error(ErrorKind::IoError, "cannot read image " + path.string());
    if (m.depth() != CV_8U) throw Error(ErrorKind::IoError, "only 8-bit images are supported: " + path.string());

    if (m.channels() == 1) {
        Image out(m.cols, m.rows, 1);
        for (int y = 0; y < m.rows; ++y) std::copy_n(m.ptr<std::uint8_t>(y), m.cols, out.row(y).begin());
        return out;
    }
    const int c = m.channels();
    Image out(m.cols, m.rows, 3);
    for (int y = 0; y < m.rows; ++y) {
        const std::uint8_t* src = m.ptr<std::uint8_t>(y);
        auto dst = out.row(y);
        for (int x = 0; x < m.cols; ++x) {
            dst[3 * x] = src[c * x + 2];
            dst[3 * x + 1] = src[c * x + 1];
            dst[3 * x + 2] = src[c * x];
        }
    }
    return out;
}

void write_image(const std::filesystem::path& path, const Image& img, int jpeg_quality) {
    cv::Mat bgr(img.height(), img.width(), img.is_gray() ? CV_8UC1 : CV_8UC3);
    for (int y = 0; y < img.height(); ++y) {
        const auto src = img.row(y);
        std::uint8_t* dst = bgr.ptr<std::uint8_t>(y);
        if (img.is_gray()) {
            std::copy(src.begin(), src.end(), dst);
            continue;
        }
        for (int x = 0; x < img.width(); ++x) {
            dst[3 * x] = src[3 * x + 2];
            dst[3 * x + 1] = src[3 * x + 1];
            dst[3 * x + 2] = src[3 * x];
        }
    }

    const std::string ext = lower_ext(path);
    std::vector<int> params;
    if (ext == ".png")
        params = {cv::IMWRITE_PNG_COMPRESSION, 3};
    else if (ext == ".jpg" || ext == ".jpeg")
        params = {cv::IMWRITE_JPEG_QUALITY, jpeg_quality};
    else
        throw Error(ErrorKind::IoError, "unsupported image extension: " + path.string());

    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), bgr, params);
    } catch (const cv::Exception& e) {
        throw Error(ErrorKind::IoError, "cannot write " + path.string() + ": " + e.what());
    }
    if (!ok) throw Error(ErrorKind::IoError, "cannot write " + path.string());
}

}  // namespace vid2wsi
