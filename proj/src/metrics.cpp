#include "vid2wsi/metrics.hpp"

#include "vid2wsi/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

namespace vid2wsi {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
constexpr double kC2 = (0.03 * 255) * (0.03 * 255);

std::array<double, kWindow> gaussian_taps() {
    std::array<double, kWindow> g{};
    double sum = 0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
        sum += g[i];
    }
    for (auto& v : g) v /= sum;
    return g;
}

std::vector<double> luma(const Image& img) {
    const std::size_t n = static_cast<std::size_t>(img.width()) * img.height();
    std::vector<double> out(n);
    const auto d = img.data();
    if (img.channels() == 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = d[i];
    } else {
        for (std::size_t i = 0; i < n; ++i)
            out[i] = 0.299 * d[3 * i] + 0.587 * d[3 * i + 1] + 0.114 * d[3 * i + 2];
    }
    return out;
}

/// Separable "valid" Gaussian filter: output is (w - 10) x (h - 10).
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h) {
    static const auto g = gaussian_taps();
    const int ow = w - kWindow + 1, oh = h - kWindow + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y) {
        const double* row = src.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int k = 0; k < kWindow; ++k) s += g[k] * row[x + k];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int k = 0; k < kWindow; ++k) s += g[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

void check_same(const Image& a, const Image& b) {
    if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels())
        throw Error(ErrorKind::DimensionMismatch, "metric inputs differ in size or channels");
    if (a.empty()) throw Error(ErrorKind::EmptyInput, "metric inputs are empty");
}

// Shifted by the first sample so constant data gives exactly that value and a zero spread.
double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x - v[0];
    return v[0] + s / v.size();
}

double sample_std(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0;
    double s = 0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / (v.size() - 1));
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    check_same(a, b);
    const int w = a.width(), h = a.height();
    if (w < kWindow || h < kWindow) throw Error(ErrorKind::ImageTooSmall, "SSIM needs at least 11x11 pixels");
    const std::vector<double> x = luma(a), y = luma(b);
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h), my = filter_valid(y, w, h);
    const auto sxx = filter_valid(xx, w, h), syy = filter_valid(yy, w, h), sxy = filter_valid(xy, w, h);
    double total = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
        total += ((2 * mx[i] * my[i] + kC1) * (2 * cxy + kC2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
    }
    return total / mx.size();
}

double psnr(const Image& a, const Image& b) {
    check_same(a, b);
    const auto da = a.data(), db = b.data();
    double sq = 0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = static_cast<double>(da[i]) - db[i];
        sq += d * d;
    }
    if (sq == 0) return kPsnrCap;
    const double mse = sq / da.size();
    return std::min(kPsnrCap, 10 * std::log10(255.0 * 255.0 / mse));
}

MetricSample measure(const Image& reference, const Image& test, std::string tile_id) {
    return {std::move(tile_id), ssim(reference, test), psnr(reference, test)};
}

MetricsReport aggregate(std::span<const MetricSample> samples) {
    if (samples.empty()) throw Error(ErrorKind::EmptyInput, "no metric samples to aggregate");
    std::vector<double> s, p;
    for (const auto& m : samples) {
        s.push_back(m.ssim);
        p.push_back(m.psnr);
    }
    MetricsReport r;
    r.n = samples.size();
    r.ssim_mean = mean_of(s);
    r.ssim_std = sample_std(s, r.ssim_mean);
    r.psnr_mean = mean_of(p);
    r.psnr_std = sample_std(p, r.psnr_mean);
    r.samples.assign(samples.begin(), samples.end());
    return r;
}

std::string format_mean_std(double mean, double std) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f ± %.3f", mean, std);
    return buf;
}

std::string format_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::vector<std::array<std::string, 3>> cells{{"Model", "SSIM", "PSNR"}};
    for (const auto& [label, r] : rows)
        cells.push_back({label, format_mean_std(r.ssim_mean, r.ssim_std), format_mean_std(r.psnr_mean, r.psnr_std)});
    // Display width: "±" is two bytes in UTF-8 but one column.
    const auto width = [](const std::string& s) {
        return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
    };
    std::array<std::size_t, 3> col{};
    for (const auto& row : cells)
        for (int c = 0; c < 3; ++c) col[c] = std::max(col[c], width(row[c]));
    std::string out;
    for (const auto& row : cells) {
        for (int c = 0; c < 3; ++c) {
            out += row[c];
            if (c < 2) out += std::string(col[c] - width(row[c]), ' ') + " | ";
        }
        out += '\n';
    }
    return out;
}

std::string format_latex_row(const std::string& label, const MetricsReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, " & %.3f $\\pm$ %.3f & %.3f $\\pm$ %.3f\\\\", r.ssim_mean, r.ssim_std, r.psnr_mean,
                  r.psnr_std);
    std::string l;
    for (char c : label) {
        if (c == '#' || c == '%' || c == '&' || c == '_') l += '\\';
        l += c;
    }
    return l + buf;
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : r.samples) samples.push_back({{"tile_id", s.tile_id}, {"ssim", s.ssim}, {"psnr", s.psnr}});
    return {{"n", r.n},
            {"ssim_mean", r.ssim_mean},
            {"ssim_std", r.ssim_std},
            {"psnr_mean", r.psnr_mean},
            {"psnr_std", r.psnr_std},
            {"psnr_cap_db", kPsnrCap},
            {"std", "sample (n-1)"},
            {"ssim_window", {{"size", kWindow}, {"sigma", kSigma}, {"k1", 0.01}, {"k2", 0.03}, {"channels", "luma"}}},
            {"summary", format_mean_std(r.ssim_mean, r.ssim_std) + " / " + format_mean_std(r.psnr_mean, r.psnr_std)},
            {"samples", samples}};
}

}  // namespace vid2wsi
