#include "vid2wsi/registration.hpp"

#include "vid2wsi/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>

namespace vid2wsi {

MatchSet match(std::span<const Descriptor> a, std::span<const Descriptor> b, double ratio) {
    if (!(ratio > 0 && ratio <= 1)) throw Error(ErrorKind::InvalidArgument, "ratio must lie in (0, 1]");
    MatchSet out;
    if (a.empty() || b.empty()) return out;

    std::vector<Match> candidates;
    for (std::size_t i = 0; i < a.size(); ++i) {
        int best = std::numeric_limits<int>::max();
        int second = std::numeric_limits<int>::max();
        int best_j = -1;
        const Descriptor& da = a[i];
        for (std::size_t j = 0; j < b.size(); ++j) {
            const int d = hamming(da, b[j]);
            if (d < best) {
                second = best;
                best = d;
                best_j = static_cast<int>(j);
            } else if (d < second) {
                second = d;
            }
        }
        if (second == std::numeric_limits<int>::max() || best < ratio * second)
            candidates.push_back({static_cast<int>(i), best_j, best});
    }
    std::sort(candidates.begin(), candidates.end(), [](const Match& x, const Match& y) {
        return std::tie(x.distance, x.a, x.b) < std::tie(y.distance, y.a, y.b);
    });
    std::vector<char> used_b(b.size(), 0);
    for (const auto& m : candidates) {
        if (used_b[m.b]) continue;
        used_b[m.b] = 1;
        out.pairs.push_back(m);
    }
    return out;
}

namespace {

using Rng = std::mt19937_64;

// Unbiased index in [0, n); defined here rather than via std::uniform_int_distribution
// so sequences are identical across standard libraries.
std::size_t uniform_index(Rng& rng, std::size_t n) {
    const std::uint64_t range = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t v;
    do v = rng();
    while (v >= limit);
    return static_cast<std::size_t>(v % range);
}

double cross(Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }
double dist(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

bool collinear(Point2 a, Point2 b, Point2 c) {
    const double scale = dist(a, b) * dist(a, c);
    return scale < 1e-12 || std::abs(cross(a, b, c)) <= 1e-6 * scale;
}

struct Centered {
    Point2 mean_src, mean_dst;
};

Centered centroids(std::span<const Point2> src, std::span<const Point2> dst) {
    Centered c;
    for (std::size_t i = 0; i < src.size(); ++i) {
        c.mean_src.x += src[i].x;
        c.mean_src.y += src[i].y;
        c.mean_dst.x += dst[i].x;
        c.mean_dst.y += dst[i].y;
    }
    const double n = static_cast<double>(src.size());
    c.mean_src = {c.mean_src.x / n, c.mean_src.y / n};
    c.mean_dst = {c.mean_dst.x / n, c.mean_dst.y / n};
    return c;
}

Transform2D fit_translation(std::span<const Point2> src, std::span<const Point2> dst) {
    const Centered c = centroids(src, dst);
    return Transform2D::translation(c.mean_dst.x - c.mean_src.x, c.mean_dst.y - c.mean_src.y);
}

Transform2D fit_similarity(std::span<const Point2> src, std::span<const Point2> dst) {
    const Centered c = centroids(src, dst);
    double sxx = 0, num_a = 0, num_b = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double x = src[i].x - c.mean_src.x, y = src[i].y - c.mean_src.y;
        const double u = dst[i].x - c.mean_dst.x, v = dst[i].y - c.mean_dst.y;
        sxx += x * x + y * y;
        num_a += x * u + y * v;
        num_b += x * v - y * u;
    }
    if (sxx < 1e-12) throw Error(ErrorKind::SingularTransform, "coincident points cannot fix a similarity");
    const double a = num_a / sxx;
    const double b = num_b / sxx;
    const double tx = c.mean_dst.x - (a * c.mean_src.x - b * c.mean_src.y);
    const double ty = c.mean_dst.y - (b * c.mean_src.x + a * c.mean_src.y);
    return Transform2D::from_matrix({a, -b, tx, b, a, ty, 0, 0, 1}, TransformModel::Similarity);
}

Transform2D fit_affine(std::span<const Point2> src, std::span<const Point2> dst) {
    const Centered c = centroids(src, dst);
    double sxx = 0, sxy = 0, syy = 0, sxu = 0, syu = 0, sxv = 0, syv = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double x = src[i].x - c.mean_src.x, y = src[i].y - c.mean_src.y;
        const double u = dst[i].x - c.mean_dst.x, v = dst[i].y - c.mean_dst.y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        sxu += x * u;
        syu += y * u;
        sxv += x * v;
        syv += y * v;
    }
    const double det = sxx * syy - sxy * sxy;
    if (std::abs(det) <= 1e-12 * std::max(1.0, (sxx + syy) * (sxx + syy)))
        throw Error(ErrorKind::SingularTransform, "collinear points cannot fix an affine transform");
    const double a = (sxu * syy - syu * sxy) / det;
    const double b = (syu * sxx - sxu * sxy) / det;
    const double d = (sxv * syy - syv * sxy) / det;
    const double e = (syv * sxx - sxv * sxy) / det;
    const double tx = c.mean_dst.x - a * c.mean_src.x - b * c.mean_src.y;
    const double ty = c.mean_dst.y - d * c.mean_src.x - e * c.mean_src.y;
    return Transform2D::affine(a, b, tx, d, e, ty);
}

// Hartley normalisation: centroid to origin, mean distance sqrt(2).
Eigen::Matrix3d normaliser(std::span<const Point2> pts) {
    double mx = 0, my = 0;
    for (const auto& p : pts) mx += p.x, my += p.y;
    mx /= pts.size();
    my /= pts.size();
    double md = 0;
    for (const auto& p : pts) md += std::hypot(p.x - mx, p.y - my);
    md /= pts.size();
    if (md < 1e-12) throw Error(ErrorKind::SingularTransform, "coincident points cannot fix a homography");
    const double s = std::sqrt(2.0) / md;
    Eigen::Matrix3d t;
    t << s, 0, -s * mx, 0, s, -s * my, 0, 0, 1;
    return t;
}

Transform2D fit_homography(std::span<const Point2> src, std::span<const Point2> dst) {
    const Eigen::Matrix3d ts = normaliser(src);
    const Eigen::Matrix3d td = normaliser(dst);
    Eigen::Matrix<double, 9, 9> ata = Eigen::Matrix<double, 9, 9>::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const Eigen::Vector3d p = ts * Eigen::Vector3d(src[i].x, src[i].y, 1);
        const Eigen::Vector3d q = td * Eigen::Vector3d(dst[i].x, dst[i].y, 1);
        Eigen::Matrix<double, 9, 1> r1, r2;
        r1 << -p.x(), -p.y(), -1, 0, 0, 0, q.x() * p.x(), q.x() * p.y(), q.x();
        r2 << 0, 0, 0, -p.x(), -p.y(), -1, q.y() * p.x(), q.y() * p.y(), q.y();
        ata += r1 * r1.transpose() + r2 * r2.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig(ata);
    const auto& vals = eig.eigenvalues();
    if (vals(1) <= 1e-10 * std::max(1.0, vals(8)))
        throw Error(ErrorKind::SingularTransform, "degenerate point configuration for a homography");
    const Eigen::Matrix<double, 9, 1> h = eig.eigenvectors().col(0);
    Eigen::Matrix3d hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    Eigen::Matrix3d hm = td.inverse() * hn * ts;
    if (std::abs(hm(2, 2)) < 1e-12) throw Error(ErrorKind::SingularTransform, "homography maps origin to infinity");
    hm /= hm(2, 2);
    Transform2D::Matrix m{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m[3 * r + c] = hm(r, c);
    return Transform2D::from_matrix(m, TransformModel::Homography);
}

Transform2D fit_any(std::span<const Point2> src, std::span<const Point2> dst, TransformModel model) {
    switch (model) {
        case TransformModel::Translation: return fit_translation(src, dst);
        case TransformModel::Similarity: return fit_similarity(src, dst);
        case TransformModel::Affine: return fit_affine(src, dst);
        case TransformModel::Homography: return fit_homography(src, dst);
    }
    throw Error(ErrorKind::InvalidArgument, "unknown model");
}

bool degenerate_sample(std::span<const Point2> pts, TransformModel model) {
    switch (model) {
        case TransformModel::Translation: return false;
        case TransformModel::Similarity: return dist(pts[0], pts[1]) < 1e-6;
        case TransformModel::Affine: return collinear(pts[0], pts[1], pts[2]);
        case TransformModel::Homography:
            return collinear(pts[0], pts[1], pts[2]) || collinear(pts[0], pts[1], pts[3]) ||
                   collinear(pts[0], pts[2], pts[3]) || collinear(pts[1], pts[2], pts[3]);
    }
    return true;
}

struct Consensus {
    std::vector<int> inliers;
    double sse = 0;
};

Consensus consensus(const Transform2D& t, std::span<const Point2> src, std::span<const Point2> dst, double thr) {
    Consensus c;
    const double thr2 = thr * thr;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const Point2 p = t.apply(src[i]);
        const double e2 = (p.x - dst[i].x) * (p.x - dst[i].x) + (p.y - dst[i].y) * (p.y - dst[i].y);
        if (e2 <= thr2) {
            c.inliers.push_back(static_cast<int>(i));
            c.sse += e2;
        }
    }
    return c;
}

bool better(const Consensus& a, const Consensus& b) {
    if (a.inliers.size() != b.inliers.size()) return a.inliers.size() > b.inliers.size();
    return a.sse < b.sse;
}

}  // namespace

Transform2D fit_transform(std::span<const Point2> src, std::span<const Point2> dst, TransformModel model) {
    if (src.size() != dst.size()) throw Error(ErrorKind::InvalidArgument, "correspondence lists differ in length");
    if (static_cast<int>(src.size()) < minimal_sample_size(model))
        throw Error(ErrorKind::InsufficientMatches, std::to_string(src.size()) + " correspondences, " +
                                                        std::string(to_string(model)) + " needs " +
                                                        std::to_string(minimal_sample_size(model)));
    Transform2D t = fit_any(src, dst, model);
    if (!t.invertible()) throw Error(ErrorKind::SingularTransform, "fitted transform is singular");
    return t;
}

RegistrationResult estimate_from_points(std::span<const Point2> src, std::span<const Point2> dst,
                                        TransformModel model, const RansacParams& params) {
    if (src.size() != dst.size()) throw Error(ErrorKind::InvalidArgument, "correspondence lists differ in length");
    const int s = minimal_sample_size(model);
    const std::size_t n = src.size();
    if (static_cast<int>(n) < s)
        throw Error(ErrorKind::InsufficientMatches,
                    std::to_string(n) + " matches, " + std::string(to_string(model)) + " needs " + std::to_string(s));

    Rng rng(params.seed);
    std::optional<Transform2D> best_model;
    Consensus best;
    std::vector<std::size_t> idx(s);
    std::vector<Point2> ss(s), sd(s);
    long long needed = params.max_iterations;
    int it = 0;
    for (; it < needed; ++it) {
        for (int k = 0; k < s; ++k) {
            bool dup;
            do {
                idx[k] = uniform_index(rng, n);
                dup = std::find(idx.begin(), idx.begin() + k, idx[k]) != idx.begin() + k;
            } while (dup);
            ss[k] = src[idx[k]];
            sd[k] = dst[idx[k]];
        }
        if (degenerate_sample(ss, model) || degenerate_sample(sd, model)) continue;
        Transform2D t;
        try {
            t = fit_any(ss, sd, model);
        } catch (const Error&) {
            continue;
        }
        if (!t.invertible()) continue;
        Consensus c = consensus(t, src, dst, params.inlier_threshold);
        if (!best_model || better(c, best)) {
            best = std::move(c);
            best_model = t;
            const double w = static_cast<double>(best.inliers.size()) / n;
            const double p_fail = 1.0 - std::pow(w, s);
            if (p_fail <= 0) {
                needed = it + 1;
            } else if (p_fail < 1) {
                const double k = std::log(1.0 - params.confidence) / std::log(p_fail);
                needed = std::min<long long>(params.max_iterations, static_cast<long long>(std::ceil(k)));
            }
        }
    }
    if (!best_model || static_cast<int>(best.inliers.size()) < std::max(s, 1))
        throw Error(ErrorKind::NoConsensus, "no non-degenerate model found among " + std::to_string(n) + " matches");

    // Least-squares refinement until the inlier set stops changing.
    Transform2D current = *best_model;
    Consensus cur = best;
    for (int round = 0; round < 10; ++round) {
        std::vector<Point2> is, id;
        for (int i : cur.inliers) {
            is.push_back(src[i]);
            id.push_back(dst[i]);
        }
        Transform2D refit;
        try {
            refit = fit_any(is, id, model);
        } catch (const Error&) {
            break;
        }
        if (!refit.invertible()) break;
        Consensus next = consensus(refit, src, dst, params.inlier_threshold);
        if (next.inliers.size() < cur.inliers.size()) break;
        const bool same = next.inliers == cur.inliers;
        current = refit;
        cur = std::move(next);
        if (same) break;
    }

    RegistrationResult r;
    r.transform = current;
    r.inliers = static_cast<int>(cur.inliers.size());
    r.total_matches = static_cast<int>(n);
    r.rms_error = cur.inliers.empty() ? 0.0 : std::sqrt(cur.sse / cur.inliers.size());
    r.iterations = it;
    r.inlier_indices = std::move(cur.inliers);
    if (r.inliers < params.min_inliers)
        throw Error(ErrorKind::NoConsensus, "best model has " + std::to_string(r.inliers) + " inliers, need " +
                                                std::to_string(params.min_inliers));
    return r;
}

RegistrationResult estimate_transform(const MatchSet& matches, std::span<const Keypoint> kps_a,
                                      std::span<const Keypoint> kps_b, TransformModel model,
                                      const RansacParams& params) {
    std::vector<Point2> src, dst;
    src.reserve(matches.size());
    dst.reserve(matches.size());
    for (const auto& m : matches.pairs) {
        src.push_back({kps_b[m.b].x, kps_b[m.b].y});
        dst.push_back({kps_a[m.a].x, kps_a[m.a].y});
    }
    return estimate_from_points(src, dst, model, params);
}

RegistrationResult register_features(const FeatureSet& a, const FeatureSet& b, const RegistrationParams& params) {
    const MatchSet m = match(a, b, params.ratio);
    return estimate_transform(m, a.keypoints, b.keypoints, params.model, params.ransac);
}

nlohmann::json to_json(const Transform2D& t) {
    return {{"model", std::string(to_string(t.model()))}, {"matrix", t.matrix()}};
}

Transform2D transform_from_json(const nlohmann::json& j) {
    try {
        return Transform2D::from_matrix(j.at("matrix").get<Transform2D::Matrix>(),
                                        transform_model_from_string(j.at("model").get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("malformed transform: ") + e.what());
    }
}

nlohmann::json to_json(const RegistrationResult& r) {
    return {{"transform", to_json(r.transform)},
            {"inliers", r.inliers},
            {"total_matches", r.total_matches},
            {"rms_error", r.rms_error},
            {"confidence", r.confidence()}};
}

}  // namespace vid2wsi
