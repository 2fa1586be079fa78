#pragma once

#include "vid2wsi/image.hpp"
#include "vid2wsi/registration.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vid2wsi {

struct CoregParams {
    RegistrationParams registration = default_registration();
    /// Polish the feature estimate by dense patch correlation.
    bool refine = true;
    int threads = 1;

    static RegistrationParams default_registration() {
        RegistrationParams p;
        p.model = TransformModel::Affine;
        p.features.max_keypoints = 4000;
        return p;
    }
    void validate() const;
};

nlohmann::json to_json(const CoregParams& p);

/// Affine map from stitched pixels to full-resolution scanned pixels.
struct CoregResult {
    Transform2D transform;
    int inliers = 0;
    double rms_error = 0;  // px, at the matching resolution
    int refined_points = 0;
    /// Stitched content pixels that land on scanned content, over all stitched pixels.
    double overlap_fraction = 0;
};

nlohmann::json to_json(const CoregResult& r);
CoregResult coreg_result_from_json(const nlohmann::json& j);

/// Matches `stitched` against `scanned` reduced by `scale_hint` (the expected
/// magnification ratio), then folds the scale back so the transform addresses
/// full-resolution scanned pixels. Pure white counts as background on both sides.
/// Throws Error(NoConsensus) when the images do not share content,
/// Error(InvalidArgument) for a non-positive scale.
CoregResult coregister(const Image& stitched, const Image& scanned, double scale_hint,
                       const CoregParams& params = {});

enum class Split { Train, Val, Test };

std::string_view to_string(Split s);
Split split_from_string(std::string_view name);

struct PairParams {
    int tile = 256;     // lowq side, stitched pixels
    int stride = 224;
    int scale = 4;      // highq tiles are scale * tile on a side
    double valid_min = 0.9;
    double train_fraction = 0.75;
    double val_fraction = 0.25;  // the remainder, if any, is Test
    std::string slide_id = "slide";
    int threads = 1;

    void validate() const;
};

nlohmann::json to_json(const PairParams& p);

struct TilePair {
    std::string id;
    int x = 0;  // tile origin in stitched pixels
    int y = 0;
    Split split = Split::Train;
    double valid_fraction = 0;
    Image lowq;   // tile x tile, cut from the stitched image
    Image highq;  // scale*tile square, resampled from the scan
};

/// Slides a tile grid over the stitched image and keeps tiles with at least
/// valid_min content whose scanned counterpart lies fully inside the scan.
/// Splits are assigned by ranking a hash of (slide_id, origin), so the train
/// count is exactly round(train_fraction * n) and independent of tile order.
/// Throws Error(NoValidTiles) when nothing qualifies.
std::vector<TilePair> extract_pairs(const Image& stitched, const Image& scanned, const CoregResult& coreg,
                                    const PairParams& params = {});

/// Writes lowq/<id>.png, highq/<id>.png and pairs.json (written last) under `dir`.
/// A non-null `config` is stored in the manifest under "config".
void write_pairs(const std::filesystem::path& dir, const std::vector<TilePair>& pairs, const CoregResult& coreg,
                 const PairParams& params, const nlohmann::json& config = nullptr);

}  // namespace vid2wsi
