#include "vid2wsi/coregister.hpp"

#include "rounding.hpp"
#include "vid2wsi/errors.hpp"
#include "vid2wsi/image_io.hpp"
#include "vid2wsi/parallel.hpp"
#include "vid2wsi/warp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>

namespace vid2wsi {

namespace {

/// Reduced scan plus the map from reduced to full-resolution scan pixels.
struct Reduced {
    Image image;
    Transform2D to_full;
};

Reduced reduce(const Image& img, double scale) {
    const double k = std::round(scale);
    if (std::abs(scale - k) < 1e-9) {
        const int f = static_cast<int>(k);
        const double c = (f - 1) / 2.0;
        return {f == 1 ? img : downsample_box(img, f), Transform2D::affine(f, 0, c, 0, f, c)};
    }
    const int w = std::max(1, detail::iround(img.width() / scale));
    const int h = std::max(1, detail::iround(img.height() / scale));
    const double fx = static_cast<double>(img.width()) / w, fy = static_cast<double>(img.height()) / h;
    return {resize(img, w, h), Transform2D::affine(fx, 0, (fx - 1) / 2, 0, fy, (fy - 1) / 2)};
}

double overlap_fraction(const Image& stitched, const std::vector<std::uint8_t>& s_mask, const Image& scanned,
                        const std::vector<std::uint8_t>& c_mask, const Transform2D& t, int threads) {
    const int w = stitched.width(), h = stitched.height();
    std::vector<long long> rows(h, 0);
    parallel_for(h, threads, [&](std::size_t yi) {
        const int y = static_cast<int>(yi);
        long long n = 0;
        for (int x = 0; x < w; ++x) {
            if (!s_mask[static_cast<std::size_t>(y) * w + x]) continue;
            const Point2 p = t.apply(x, y);
            const int ix = detail::iround(p.x), iy = detail::iround(p.y);
            if (ix < 0 || iy < 0 || ix >= scanned.width() || iy >= scanned.height()) continue;
            n += c_mask[static_cast<std::size_t>(iy) * scanned.width() + ix];
        }
        rows[y] = n;
    });
    return static_cast<double>(std::accumulate(rows.begin(), rows.end(), 0LL)) / (static_cast<double>(w) * h);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

void CoregParams::validate() const {
    if (registration.model != TransformModel::Affine)
        throw Error(ErrorKind::ConfigError, "co-registration uses the affine model");
    if (registration.features.max_keypoints < 8) throw Error(ErrorKind::ConfigError, "max_keypoints must be >= 8");
    if (threads < 1) throw Error(ErrorKind::ConfigError, "threads must be >= 1");
}

nlohmann::json to_json(const CoregParams& p) {
    return {{"model", to_string(p.registration.model)},
            {"max_keypoints", p.registration.features.max_keypoints},
            {"fast_threshold", p.registration.features.fast_threshold},
            {"ratio", p.registration.ratio},
            {"inlier_threshold", p.registration.ransac.inlier_threshold},
            {"min_inliers", p.registration.ransac.min_inliers},
            {"ransac_seed", p.registration.ransac.seed},
            {"refine", p.refine}};
}

nlohmann::json to_json(const CoregResult& r) {
    return {{"transform", to_json(r.transform)},
            {"inliers", r.inliers},
            {"rms_error", r.rms_error},
            {"refined_points", r.refined_points},
            {"overlap_fraction", r.overlap_fraction}};
}

CoregResult coreg_result_from_json(const nlohmann::json& j) {
    try {
        CoregResult r;
        r.transform = transform_from_json(j.at("transform"));
        r.inliers = j.at("inliers").get<int>();
        r.rms_error = j.at("rms_error").get<double>();
        r.refined_points = j.value("refined_points", 0);
        r.overlap_fraction = j.at("overlap_fraction").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("bad co-registration json: ") + e.what());
    }
}

CoregResult coregister(const Image& stitched, const Image& scanned, double scale_hint, const CoregParams& params) {
    if (!(scale_hint > 0) || !std::isfinite(scale_hint))
        throw Error(ErrorKind::InvalidArgument, "scale_hint must be positive");
    params.validate();
    if (stitched.empty() || scanned.empty()) throw Error(ErrorKind::EmptyInput, "co-registration needs two images");

    const Image a_gray = to_gray(stitched);
    const std::vector<std::uint8_t> a_mask = content_mask(stitched);
    const Reduced red = reduce(scanned, scale_hint);
    const Image b_gray = to_gray(red.image);
    const std::vector<std::uint8_t> b_mask = content_mask(red.image);

    const FeatureSet fa = extract_features(a_gray, params.registration.features, &a_mask);
    const FeatureSet fb = extract_features(b_gray, params.registration.features, &b_mask);

    CoregResult out;
    Transform2D t;  // stitched -> reduced scan
    try {
        const RegistrationResult r = register_features(fb, fa, params.registration);
        t = r.transform;
        out.inliers = r.inliers;
        out.rms_error = r.rms_error;
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::InsufficientMatches)
            throw Error(ErrorKind::NoConsensus, std::string("co-registration: ") + e.what());
        throw;
    }
    if (params.refine) {
        const std::vector<PatchTarget> targets{{&b_gray, &b_mask, Transform2D::identity()}};
        const RefineResult rr = refine_by_correlation(a_gray, &a_mask, t, targets, TransformModel::Affine);
        if (rr.points > 0) {
            t = rr.transform;
            out.refined_points = rr.points;
            out.rms_error = rr.rms_error;
        }
    }
    out.transform = compose(red.to_full, t);
    out.overlap_fraction =
        overlap_fraction(stitched, a_mask, scanned, content_mask(scanned), out.transform, params.threads);
    return out;
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

Split split_from_string(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw Error(ErrorKind::InvalidArgument, "unknown split '" + std::string(name) + "'");
}

void PairParams::validate() const {
    if (tile < 32 || stride < 32) throw Error(ErrorKind::ConfigError, "tile and stride must be >= 32");
    if (scale < 1) throw Error(ErrorKind::ConfigError, "scale must be >= 1");
    if (!(valid_min >= 0 && valid_min <= 1)) throw Error(ErrorKind::ConfigError, "valid_min must be in [0, 1]");
    if (!(train_fraction >= 0 && val_fraction >= 0 && train_fraction + val_fraction <= 1 + 1e-12))
        throw Error(ErrorKind::ConfigError, "split fractions must be non-negative and sum to at most 1");
    if (slide_id.empty()) throw Error(ErrorKind::ConfigError, "slide_id must not be empty");
    if (threads < 1) throw Error(ErrorKind::ConfigError, "threads must be >= 1");
}

nlohmann::json to_json(const PairParams& p) {
    return {{"tile", p.tile},
            {"stride", p.stride},
            {"scale", p.scale},
            {"valid_min", p.valid_min},
            {"train_fraction", p.train_fraction},
            {"val_fraction", p.val_fraction},
            {"slide_id", p.slide_id}};
}

std::vector<TilePair> extract_pairs(const Image& stitched, const Image& scanned, const CoregResult& coreg,
                                    const PairParams& params) {
    params.validate();
    const int T = params.tile, S = params.scale * params.tile;
    std::vector<std::pair<int, int>> origins;
    for (int y = 0; y + T <= stitched.height(); y += params.stride)
        for (int x = 0; x + T <= stitched.width(); x += params.stride) origins.emplace_back(x, y);

    const std::vector<std::uint8_t> mask = content_mask(stitched);
    const double s = params.scale, c = (s - 1) / 2;
    const Transform2D up = Transform2D::affine(s, 0, c, 0, s, c);
    const Transform2D to_stitched = coreg.transform.inverse();

    std::vector<std::optional<TilePair>> cells(origins.size());
    parallel_for(origins.size(), params.threads, [&](std::size_t i) {
        const auto [x, y] = origins[i];
        long long n = 0;
        for (int v = y; v < y + T; ++v)
            for (int u = x; u < x + T; ++u) n += mask[static_cast<std::size_t>(v) * stitched.width() + u];
        const double frac = static_cast<double>(n) / (static_cast<double>(T) * T);
        if (frac < params.valid_min) return;
        // scan pixel -> stitched pixel -> tile-local -> highq pixel
        const Transform2D m = compose(up, compose(Transform2D::translation(-x, -y), to_stitched));
        WarpResult hq = warp(scanned, m, {0, 0, S, S});
        if (std::find(hq.valid.begin(), hq.valid.end(), 0) != hq.valid.end()) return;
        TilePair p;
        p.id = params.slide_id + "_" + std::to_string(x) + "_" + std::to_string(y);
        p.x = x;
        p.y = y;
        p.valid_fraction = frac;
        p.lowq = crop(stitched, {x, y, T, T});
        p.highq = std::move(hq.image);
        cells[i] = std::move(p);
    });

    std::vector<TilePair> pairs;
    for (auto& cell : cells)
        if (cell) pairs.push_back(std::move(*cell));
    if (pairs.empty()) throw Error(ErrorKind::NoValidTiles, "no tile passed the validity filter");

    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::uint64_t> keys(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) keys[i] = fnv1a(pairs[i].id);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return keys[a] != keys[b] ? keys[a] < keys[b] : a < b;
    });
    const double n = static_cast<double>(pairs.size());
    const std::size_t n_train = static_cast<std::size_t>(std::llround(params.train_fraction * n));
    const std::size_t n_val =
        std::min(pairs.size() - n_train, static_cast<std::size_t>(std::llround(params.val_fraction * n)));
    for (std::size_t r = 0; r < order.size(); ++r)
        pairs[order[r]].split = r < n_train ? Split::Train : r < n_train + n_val ? Split::Val : Split::Test;
    return pairs;
}

void write_pairs(const std::filesystem::path& dir, const std::vector<TilePair>& pairs, const CoregResult& coreg,
                 const PairParams& params, const nlohmann::json& config) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "lowq", ec);
    std::filesystem::create_directories(dir / "highq", ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());

    parallel_for(pairs.size(), params.threads, [&](std::size_t i) {
        write_image(dir / "lowq" / (pairs[i].id + ".png"), pairs[i].lowq);
        write_image(dir / "highq" / (pairs[i].id + ".png"), pairs[i].highq);
    });

    nlohmann::json list = nlohmann::json::array();
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& p : pairs) {
        ++counts[static_cast<int>(p.split)];
        list.push_back({{"id", p.id},
                        {"origin", {p.x, p.y}},
                        {"split", to_string(p.split)},
                        {"valid_fraction", p.valid_fraction},
                        {"lowq", "lowq/" + p.id + ".png"},
                        {"highq", "highq/" + p.id + ".png"}});
    }
    nlohmann::json j = {{"format", "vid2wsi-pairs"},
                              {"version", 1},
                              {"slide_id", params.slide_id},
                              {"lowq_size", params.tile},
                              {"highq_size", params.tile * params.scale},
                              {"scale", params.scale},
                              {"params", to_json(params)},
                              {"coregistration", to_json(coreg)},
                              {"counts", {{"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}}},
                              {"pairs", list}};
    if (!config.is_null()) j["config"] = config;
    std::ofstream out(dir / "pairs.json");
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + (dir / "pairs.json").string());
}

}  // namespace vid2wsi
