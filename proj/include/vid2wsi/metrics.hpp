#pragma once

#include "vid2wsi/image.hpp"

#include "json.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace vid2wsi {

/// PSNR reported for identical images.
inline constexpr double kPsnrCap = 100.0;

/// Mean SSIM over all fully covered 11x11 Gaussian windows (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, L = 255. RGB inputs are compared on BT.601 luma (unrounded).
/// Throws Error(DimensionMismatch) or Error(ImageTooSmall) below 11x11.
double ssim(const Image& a, const Image& b);

/// 10 log10(255^2 / MSE) with MSE over all channels, capped at kPsnrCap.
double psnr(const Image& a, const Image& b);

struct MetricSample {
    std::string tile_id;
    double ssim = 0;
    double psnr = 0;
};

MetricSample measure(const Image& reference, const Image& test, std::string tile_id = {});

struct MetricsReport {
    std::size_t n = 0;
    double ssim_mean = 0;
    double ssim_std = 0;
    double psnr_mean = 0;
    double psnr_std = 0;
    std::vector<MetricSample> samples;
};

/// Means and sample standard deviations (n - 1 denominator, 0 for one sample).
/// Throws Error(EmptyInput).
MetricsReport aggregate(std::span<const MetricSample> samples);

/// "0.317 ± 0.054": three decimals, as in the paper's results table.
std::string format_mean_std(double mean, double std);

/// Aligned plain-text table, one row per labelled report:
///   Model | SSIM          | PSNR
///   #5    | 0.317 ± 0.054 | 10.733 ± 1.221
std::string format_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

/// One LaTeX tabular row: "\#5 & 0.317 $\pm$ 0.054 & 10.733 $\pm$ 1.221\\".
std::string format_latex_row(const std::string& label, const MetricsReport& report);

/// Report with per-sample values and the PSNR cap recorded.
nlohmann::json to_json(const MetricsReport& report);

}  // namespace vid2wsi
