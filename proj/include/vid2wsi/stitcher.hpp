#pragma once

#include "vid2wsi/frame_extract.hpp"
#include "vid2wsi/registration.hpp"
#include "vid2wsi/render.hpp"

#include "json.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vid2wsi {

struct StitchPlan {
    int batch_size = 40;
    BlendMode blend = BlendMode::Feather;
    bool gain_compensation = true;
    RegistrationParams registration;  // model defaults to Similarity
    /// Registered similarity scale must stay within [1/max_scale_change, max_scale_change].
    double max_scale_change = 1.25;
    /// Frame features come from this many 2x box-reduced pyramid levels, all
    /// reported in full-resolution pixels. Coarse levels tolerate defocus blur.
    int feature_levels = 2;
    /// Polish every accepted registration by dense patch correlation at full resolution.
    bool refine = true;
    int threads = 1;

    void validate() const;
};

nlohmann::json to_json(const StitchPlan& plan);

/// A frame placed in a mosaic.
struct Member {
    std::size_t seq_index = 0;
    Transform2D transform;  // frame pixel -> node canvas
};

/// Stitched composite. `image` covers `bounds` on the node canvas, whose
/// coordinates are those of the first placed frame.
struct MosaicNode {
    Image image;
    std::vector<std::uint8_t> valid;
    std::vector<Member> members;
    Rect bounds;
    int level = 0;
};

struct DroppedFrame {
    std::size_t seq_index = 0;
    std::string reason;  // error kind, e.g. "NoConsensus"
    std::string detail;
};

/// One registration attempt, kept for the audit trail.
struct RegistrationRecord {
    int level = 0;
    std::size_t item = 0;  // frame seq_index at level 0, node index above
    std::string target;    // "composite", "previous:<item>" or "pair:<item>"
    bool ok = false;
    std::optional<RegistrationResult> result;
    int refined_points = 0;  // correlation probes behind the final transform, 0 if unrefined
    std::string error;
};

struct StitchManifest {
    std::string method;  // "batch", "recursive" or "naive"
    StitchPlan plan;
    std::vector<RegistrationRecord> registrations;
    std::vector<std::vector<std::vector<std::size_t>>> levels;  // level -> group -> items
    std::vector<Member> transforms;                              // final, per placed frame
    std::vector<DroppedFrame> dropped;
    std::size_t registration_calls = 0;
    Rect canvas;
    /// Wall-clock seconds per stage. Not part of to_json so manifests stay reproducible.
    std::map<std::string, double> timing;
};

/// Deterministic JSON (no timing).
nlohmann::json to_json(const StitchManifest& manifest);
nlohmann::json timing_json(const StitchManifest& manifest);

/// Stitches up to plan.batch_size frames: the first frame is the anchor, each later
/// frame is registered against the keypoints of everything placed so far, retried
/// against the previously placed frame, and otherwise dropped.
/// Throws Error(EmptyInput) for no frames.
MosaicNode stitch_batch(const std::vector<FrameRecord>& frames, const StitchPlan& plan,
                        StitchManifest* manifest = nullptr);

struct StitchOutput {
    MosaicNode mosaic;
    StitchManifest manifest;
};

/// Consecutive batches of plan.batch_size frames, then batches of node composites
/// (registered at 2^level downscale) until one node remains. Final transforms are
/// composed down the tree and the mosaic is rendered once from the original frames.
StitchOutput stitch_recursive(const std::vector<FrameRecord>& frames, const StitchPlan& plan);

/// Baseline: registers every frame pair, keeps a maximum spanning tree over
/// registration confidence and chains transforms out from the highest-degree frame.
/// Transforms are reported relative to the first placed frame.
StitchOutput stitch_naive(const std::vector<FrameRecord>& frames, const StitchPlan& plan);

}  // namespace vid2wsi
