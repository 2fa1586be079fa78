#pragma once

#include "vid2wsi/features.hpp"
#include "vid2wsi/transform.hpp"

#include "json.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace vid2wsi {

struct Match {
    int a = 0;  // index into the first keypoint list
    int b = 0;  // index into the second keypoint list
    int distance = 0;
    friend bool operator==(const Match&, const Match&) = default;
};

/// One-to-one correspondences, sorted by (distance, a, b).
struct MatchSet {
    std::vector<Match> pairs;
    std::size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }
};

/// Nearest/second-nearest Hamming ratio test (strict `<`), then greedy
/// lowest-distance selection so no keypoint is used twice.
MatchSet match(std::span<const Descriptor> a, std::span<const Descriptor> b, double ratio = 0.8);
inline MatchSet match(const FeatureSet& a, const FeatureSet& b, double ratio = 0.8) {
    return match(a.descriptors, b.descriptors, ratio);
}

struct RansacParams {
    int max_iterations = 2000;
    double confidence = 0.999;
    double inlier_threshold = 3.0;  // px, reprojection
    int min_inliers = 8;
    std::uint64_t seed = 42;
};

/// Transform mapping B coordinates into A's frame plus fit diagnostics.
struct RegistrationResult {
    Transform2D transform;
    int inliers = 0;
    int total_matches = 0;
    double rms_error = 0;
    int iterations = 0;
    std::vector<int> inlier_indices;  // into the correspondence list

    double confidence() const { return total_matches > 0 ? static_cast<double>(inliers) / total_matches : 0.0; }
};

/// Least-squares fit of `model` to correspondences src[i] -> dst[i]: closed form for
/// translation/similarity, normal equations for affine, normalised DLT for homography.
/// Throws Error(SingularTransform) for degenerate point sets and
/// Error(InsufficientMatches) below the minimal sample size.
Transform2D fit_transform(std::span<const Point2> src, std::span<const Point2> dst, TransformModel model);

/// RANSAC over point correspondences (src -> dst) followed by iterated
/// least-squares refits on the inlier set. Deterministic for a fixed seed.
/// Throws Error(InsufficientMatches) or Error(NoConsensus).
RegistrationResult estimate_from_points(std::span<const Point2> src, std::span<const Point2> dst,
                                        TransformModel model, const RansacParams& params = {});

/// Same as estimate_from_points with src = kps_b[m.b], dst = kps_a[m.a].
RegistrationResult estimate_transform(const MatchSet& matches, std::span<const Keypoint> kps_a,
                                      std::span<const Keypoint> kps_b, TransformModel model,
                                      const RansacParams& params = {});

struct RegistrationParams {
    FeatureParams features;
    double ratio = 0.8;
    RansacParams ransac;
    TransformModel model = TransformModel::Similarity;
};

/// Match + estimate for two precomputed feature sets; maps b into a.
RegistrationResult register_features(const FeatureSet& a, const FeatureSet& b, const RegistrationParams& params);

/// A grayscale raster that correlation refinement may sample, placed on a shared canvas.
struct PatchTarget {
    const Image* image = nullptr;                      // 1 channel
    const std::vector<std::uint8_t>* valid = nullptr;  // null: every pixel is valid
    Transform2D to_canvas;
};

struct RefineParams {
    int grid_step = 24;      // spacing of probe points in the moving image
    int radius = 5;          // patch half-size
    int search = 2;          // integer search half-range around the prediction
    double min_zncc = 0.75;  // weaker peaks are discarded
    double min_stddev = 4;   // flat probe patches are skipped
    double max_residual = 1.0;
    int min_points = 8;
    int iterations = 2;
};

struct RefineResult {
    Transform2D transform;
    int points = 0;  // correspondences in the final fit; 0 if the input was kept
    double rms_error = 0;
};

/// Polishes `b_to_canvas` by dense patch correlation: probe patches on a grid over
/// `b` are located in whichever target covers them best (integer ZNCC search, then
/// Gauss-Newton subpixel alignment of the normalised patches), and `model` is refit
/// with residual trimming.
/// Returns the input transform with points = 0 when too few probes survive.
RefineResult refine_by_correlation(const Image& b, const std::vector<std::uint8_t>* b_valid,
                                   const Transform2D& b_to_canvas, std::span<const PatchTarget> targets,
                                   TransformModel model, const RefineParams& params = {});

nlohmann::json to_json(const Transform2D& t);
Transform2D transform_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RegistrationResult& r);

}  // namespace vid2wsi
