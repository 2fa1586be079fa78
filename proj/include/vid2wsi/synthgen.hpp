#pragma once

#include "vid2wsi/image.hpp"
#include "vid2wsi/transform.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vid2wsi {

/// Parameters of a simulated serpentine sweep over a procedural slide.
struct SweepSpec {
    int slide_width = 4000;
    int slide_height = 3000;
    int frame_width = 640;
    int frame_height = 480;
    double overlap_fraction = 0.3;  // between adjacent stops, [0.2, 0.3]
    int columns = 0;                // stops per row; 0 fits as many as the slide allows
    int stops = 0;                  // 0 fills the grid
    int pause_frames = 8;
    int travel_frames = 4;
    double brightness_jitter = 0.0;  // per-frame gain drawn from [1 - j, 1 + j]
    double blur_fraction = 0.0;      // share of frames blurred
    double blur_sigma = 1.5;
    double rotation_jitter_deg = 0.0;  // per-stop rotation drawn from [-r, r]
    int revisits = 0;                  // stops paused at twice, with a short excursion between
    int channels = 3;
    std::uint64_t seed = 1;

    /// Throws Error(SpecInfeasible).
    void validate() const;
};

nlohmann::json to_json(const SweepSpec& spec);
SweepSpec sweep_spec_from_json(const nlohmann::json& j);

struct FrameTruth {
    std::size_t index = 0;
    Transform2D transform;  // frame pixel -> slide pixel
    int stop = -1;          // -1 while travelling
    bool pause = false;
    double gain = 1.0;
    double blur_sigma = 0.0;  // 0: not blurred
};

struct PauseTruth {
    std::size_t start = 0;  // inclusive frame indices
    std::size_t end = 0;
    int stop = 0;
    bool revisit = false;  // repeats the previous pause's pose
};

struct GroundTruth {
    SweepSpec spec;
    std::vector<FrameTruth> frames;
    std::vector<PauseTruth> pauses;
    std::vector<Transform2D> stops;  // pose of each stop
};

nlohmann::json to_json(const GroundTruth& gt);
GroundTruth ground_truth_from_json(const nlohmann::json& j);

/// Procedural stain-like texture: multi-octave value noise plus scattered dark
/// elliptical blobs. Values stay at or below about 225 so brightness jitter rarely clips.
Image render_slide(const SweepSpec& spec);

struct Sweep {
    std::vector<Image> frames;
    GroundTruth truth;
};

/// Plans the sweep and renders every frame in memory. Deterministic in spec.seed.
Sweep synthesize(const SweepSpec& spec);

/// synthesize() written as frame_000001.png ... plus ground_truth.json.
GroundTruth generate(const SweepSpec& spec, const std::filesystem::path& out_dir);

}  // namespace vid2wsi
