#include "rounding.hpp"
#include "vid2wsi/errors.hpp"
#include "vid2wsi/registration.hpp"

#include <algorithm>
#include <cmath>

namespace vid2wsi {

namespace {

bool patch_valid(const std::vector<std::uint8_t>* valid, int w, int cx, int cy, int r) {
    if (!valid) return true;
    for (int y = cy - r; y <= cy + r; ++y) {
        const std::uint8_t* row = valid->data() + static_cast<std::size_t>(y) * w;
        for (int x = cx - r; x <= cx + r; ++x)
            if (!row[x]) return false;
    }
    return true;
}

double bilinear(const Image& img, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    const auto r0 = img.row(y0), r1 = img.row(y0 + 1);
    const double top = r0[x0] + fx * (r0[x0 + 1] - r0[x0]);
    const double bot = r1[x0] + fx * (r1[x0 + 1] - r1[x0]);
    return top + fy * (bot - top);
}

constexpr int kSubpixelIterations = 8;

struct Located {
    Point2 canvas;
    bool ok = false;
};

class Correlator {
public:
    Correlator(const Image& b, const std::vector<std::uint8_t>* b_valid, std::span<const PatchTarget> targets,
               const RefineParams& p)
        : b_(b), b_valid_(b_valid), targets_(targets), p_(p), n_((2 * p.radius + 1) * (2 * p.radius + 1)) {
        for (const auto& t : targets) inverses_.push_back(t.to_canvas.inverse());
        probe_.resize(n_);
        gx_.resize(n_);
        gy_.resize(n_);
        sample_.resize(n_);
        scores_.resize((2 * p.search + 1) * (2 * p.search + 1));
    }

    Located locate(int x, int y, Point2 canvas) {
        const int r = p_.radius, s = p_.search;
        if (!patch_valid(b_valid_, b_.width(), x, y, r + 1)) return {};
        double sum = 0, sq = 0;
        for (int dy = -r, k = 0; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx, ++k) {
                const double v = b_.at(x + dx, y + dy);
                probe_[k] = v;
                sum += v;
                sq += v * v;
            }
        const double mean = sum / n_;
        const double var = sq / n_ - mean * mean;
        if (var < p_.min_stddev * p_.min_stddev) return {};
        for (auto& v : probe_) v -= mean;
        const double probe_norm = std::sqrt(var * n_);
        // Gradient of the normalised probe, for the subpixel step.
        double hxx = 0, hxy = 0, hyy = 0;
        for (int dy = -r, k = 0; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx, ++k) {
                gx_[k] = 0.5 * (b_.at(x + dx + 1, y + dy) - b_.at(x + dx - 1, y + dy)) / probe_norm;
                gy_[k] = 0.5 * (b_.at(x + dx, y + dy + 1) - b_.at(x + dx, y + dy - 1)) / probe_norm;
                hxx += gx_[k] * gx_[k];
                hxy += gx_[k] * gy_[k];
                hyy += gy_[k] * gy_[k];
            }
        const double hdet = hxx * hyy - hxy * hxy;
        if (hdet <= 1e-12) return {};

        // The target whose footprint holds the search window deepest inside.
        int best = -1;
        int qx = 0, qy = 0;
        double depth = -1;
        const int reach = r + s + 2;  // room for the subpixel step
        for (std::size_t t = 0; t < targets_.size(); ++t) {
            const Image& img = *targets_[t].image;
            const Point2 q = inverses_[t].apply(canvas);
            if (!std::isfinite(q.x) || !std::isfinite(q.y)) continue;
            const int ix = detail::iround(q.x), iy = detail::iround(q.y);
            const double d = std::min({ix - reach, img.width() - 1 - reach - ix, iy - reach, img.height() - 1 - reach - iy});
            if (d < 0 || d <= depth) continue;
            if (!patch_valid(targets_[t].valid, img.width(), ix, iy, reach)) continue;
            best = static_cast<int>(t);
            depth = d;
            qx = ix;
            qy = iy;
        }
        if (best < 0) return {};

        const Image& img = *targets_[best].image;
        const int side = 2 * s + 1;
        int arg = 0;
        for (int oy = -s, k = 0; oy <= s; ++oy)
            for (int ox = -s; ox <= s; ++ox, ++k) {
                double tsum = 0, tsq = 0, cross = 0;
                for (int dy = -r, j = 0; dy <= r; ++dy) {
                    const std::uint8_t* row = img.row(qy + oy + dy).data() + (qx + ox);
                    for (int dx = -r; dx <= r; ++dx, ++j) {
                        const double v = row[dx];
                        tsum += v;
                        tsq += v * v;
                        cross += probe_[j] * v;
                    }
                }
                const double tvar = tsq - tsum * tsum / n_;
                scores_[k] = tvar > 1e-9 ? cross / (probe_norm * std::sqrt(tvar)) : -1.0;
                if (scores_[k] > scores_[arg]) arg = k;
            }
        const int ax = arg % side, ay = arg / side;
        if (scores_[arg] < p_.min_zncc || ax == 0 || ay == 0 || ax == side - 1 || ay == side - 1) return {};

        // Inverse-compositional Gauss-Newton on normalised patches around the integer peak.
        const double px = qx + (ax - s), py = qy + (ay - s);
        double ux = 0, uy = 0;
        for (int it = 0; it < kSubpixelIterations; ++it) {
            double tsum = 0;
            for (int dy = -r, k = 0; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx, ++k) {
                    sample_[k] = bilinear(img, px + ux + dx, py + uy + dy);
                    tsum += sample_[k];
                }
            const double tmean = tsum / n_;
            double tsq = 0;
            for (auto& v : sample_) {
                v -= tmean;
                tsq += v * v;
            }
            if (tsq <= 1e-9) return {};
            const double tnorm = std::sqrt(tsq);
            double bx = 0, by = 0;
            for (int k = 0; k < n_; ++k) {
                const double e = sample_[k] / tnorm - probe_[k] / probe_norm;
                bx += gx_[k] * e;
                by += gy_[k] * e;
            }
            const double sx = (hyy * bx - hxy * by) / hdet;
            const double sy = (hxx * by - hxy * bx) / hdet;
            ux -= sx;
            uy -= sy;
            if (std::abs(ux) > 1 || std::abs(uy) > 1) return {};
            if (sx * sx + sy * sy < 1e-8) break;
        }
        return {targets_[best].to_canvas.apply(Point2{px + ux, py + uy}), true};
    }

private:
    const Image& b_;
    const std::vector<std::uint8_t>* b_valid_;
    std::span<const PatchTarget> targets_;
    const RefineParams& p_;
    const int n_;
    std::vector<Transform2D> inverses_;
    std::vector<double> probe_;
    std::vector<double> gx_, gy_;
    std::vector<double> sample_;
    std::vector<double> scores_;
};

}  // namespace

RefineResult refine_by_correlation(const Image& b, const std::vector<std::uint8_t>* b_valid,
                                   const Transform2D& b_to_canvas, std::span<const PatchTarget> targets,
                                   TransformModel model, const RefineParams& params) {
    if (!b.is_gray()) throw Error(ErrorKind::InvalidArgument, "refinement needs a grayscale moving image");
    for (const auto& t : targets)
        if (!t.image || !t.image->is_gray())
            throw Error(ErrorKind::InvalidArgument, "refinement needs grayscale targets");
    if (params.radius < 1 || params.search < 1 || params.grid_step < 1)
        throw Error(ErrorKind::InvalidArgument, "refinement radius, search and grid_step must be positive");

    RefineResult res{b_to_canvas, 0, 0};
    Correlator corr(b, b_valid, targets, params);
    const int r = params.radius + 1;  // the probe gradient reads one pixel further
    // Centre the probe grid so both borders get equal slack.
    const int x0 = r + ((b.width() - 1 - 2 * r) % params.grid_step) / 2;
    const int y0 = r + ((b.height() - 1 - 2 * r) % params.grid_step) / 2;

    Transform2D current = b_to_canvas;
    std::vector<Point2> src, dst;
    for (int it = 0; it < params.iterations; ++it) {
        src.clear();
        dst.clear();
        for (int y = y0; y < b.height() - r; y += params.grid_step)
            for (int x = x0; x < b.width() - r; x += params.grid_step) {
                const Located l = corr.locate(x, y, current.apply(x, y));
                if (!l.ok) continue;
                src.push_back({static_cast<double>(x), static_cast<double>(y)});
                dst.push_back(l.canvas);
            }
        if (static_cast<int>(src.size()) < params.min_points) break;

        Transform2D fit;
        std::vector<double> resid(src.size());
        try {
            fit = fit_transform(src, dst, model);
            // Two trimming passes: gross outliers first, then the residual bound.
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t i = 0; i < src.size(); ++i) {
                    const Point2 p = fit.apply(src[i]);
                    resid[i] = std::hypot(p.x - dst[i].x, p.y - dst[i].y);
                }
                double bound = params.max_residual;
                if (pass == 0) {
                    std::vector<double> sorted = resid;
                    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
                    bound = std::max(bound, 3 * sorted[sorted.size() / 2]);
                }
                std::size_t k = 0;
                for (std::size_t i = 0; i < src.size(); ++i)
                    if (resid[i] <= bound) {
                        src[k] = src[i];
                        dst[k] = dst[i];
                        resid[k] = resid[i];
                        ++k;
                    }
                src.resize(k);
                dst.resize(k);
                resid.resize(k);
                if (static_cast<int>(k) < params.min_points) break;
                fit = fit_transform(src, dst, model);
            }
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::SingularTransform || e.kind() == ErrorKind::InsufficientMatches) break;
            throw;
        }
        if (static_cast<int>(src.size()) < params.min_points) break;

        double sq = 0;
        for (std::size_t i = 0; i < src.size(); ++i) {
            const Point2 p = fit.apply(src[i]);
            sq += (p.x - dst[i].x) * (p.x - dst[i].x) + (p.y - dst[i].y) * (p.y - dst[i].y);
        }
        current = fit;
        res = {fit, static_cast<int>(src.size()), std::sqrt(sq / src.size())};
    }
    return res;
}

}  // namespace vid2wsi
