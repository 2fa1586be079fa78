#pragma once

#include "vid2wsi/focus.hpp"
#include "vid2wsi/image.hpp"

#include "json.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace vid2wsi {

/// Block-matching settings for the coarse motion estimate.
struct BlockMatchParams {
    int block = 32;             // block edge, px
    int radius = 16;            // search radius, px
    int grid_stride = 64;       // spacing between block origins, px
    double min_block_std = 2.0; // blocks flatter than this carry no motion information
};

/// Mean block displacement between two frames, in pixels.
struct MotionScore {
    double value = 0;
    bool low_texture = false;  // no block had enough texture to measure motion
    int blocks = 0;            // textured blocks that contributed
};

struct BlockVector {
    int x = 0;  // block origin in the first frame
    int y = 0;
    int dx = 0;
    int dy = 0;
    double ncc = 0;
};

/// Displacement of every textured grid block of `a` as found in `b` (coarse-to-fine NCC search).
std::vector<BlockVector> block_motion(const Image& a, const Image& b, const BlockMatchParams& params = {});

/// Symmetric motion magnitude: mean of the forward (a->b) and backward (b->a) block
/// displacement magnitudes. Throws Error(DimensionMismatch).
MotionScore motion_between(const Image& a, const Image& b, const BlockMatchParams& params = {});

/// Inclusive range of frames the operator held still.
struct PauseSegment {
    std::size_t start_idx = 0;
    std::size_t end_idx = 0;
    std::size_t representative_idx = 0;

    std::size_t length() const { return end_idx - start_idx + 1; }
    friend bool operator==(const PauseSegment&, const PauseSegment&) = default;
};

/// Segments from consecutive-pair motion (`pair_motion[i]` is frames i -> i+1) and
/// per-frame focus. Runs of sub-threshold pairs covering >= `min_len` frames become
/// segments; the representative is the sharpest frame (lowest index on ties).
std::vector<PauseSegment> segment_from_scores(std::span<const double> pair_motion,
                                              std::span<const double> focus, double motion_threshold,
                                              std::size_t min_len);

/// Scores every consecutive pair and segments. Fewer than two frames yields an empty list.
std::vector<PauseSegment> segment_pauses(std::span<const Image> frames, double motion_threshold,
                                         std::size_t min_len, const BlockMatchParams& params = {});

struct FrameRecord {
    Image image;
    std::size_t seq_index = 0;
    std::size_t source_first = 0;  // original frame range of the pause, inclusive
    std::size_t source_last = 0;
    std::size_t source_index = 0;  // the frame actually used
    MotionScore motion;            // mean over the pause
    FocusScore focus;
};

/// Zero-normalised cross-correlation of two equally sized images (luma).
/// Returns 0 when either image is constant.
double zncc(const Image& a, const Image& b);

/// Drops every record whose ZNCC with the last kept record reaches `sim_threshold`,
/// then repacks seq_index to 0..n-1.
std::vector<FrameRecord> deduplicate(std::vector<FrameRecord> records, double sim_threshold = 0.995);

struct ExtractionParams {
    double motion_threshold = 1.5;       // px/frame
    double fps = 30;                     // capture rate; sets the default minimum pause
    std::optional<std::size_t> min_len;  // frames; default ceil(0.5 * fps)
    std::size_t stride = 2;              // score every `stride`-th pair
    BlockMatchParams block;
    double dedup_threshold = 0.995;
    int threads = 1;

    std::size_t effective_min_len() const;
};

struct ExtractionResult {
    std::vector<FrameRecord> records;
    nlohmann::json log;
};

/// Numbered frame files (png/jpg) in `dir`, ordered by their trailing number.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// Motion scoring, pause segmentation with boundary refinement, sharpest-frame
/// selection and de-duplication over a directory of numbered frames.
ExtractionResult extract_frames(const std::filesystem::path& frame_dir, const ExtractionParams& params);

}  // namespace vid2wsi
