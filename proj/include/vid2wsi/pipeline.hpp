#pragma once

#include "vid2wsi/coregister.hpp"
#include "vid2wsi/errors.hpp"
#include "vid2wsi/frame_extract.hpp"
#include "vid2wsi/metrics.hpp"
#include "vid2wsi/stitcher.hpp"
#include "vid2wsi/wsi_output.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace vid2wsi {

/// Every tunable of the pipeline. The JSON form mirrors the struct:
/// seed, extraction, stitch, coregister, pairs, pyramid. Thread counts are not
/// part of it, so outputs and echoed configs do not depend on them.
struct PipelineConfig {
    std::uint64_t seed = 42;  // RANSAC seed for stitching and co-registration
    ExtractionParams extraction;
    StitchPlan stitch;
    CoregParams coregister;
    int scan_scale = 4;  // scanned pixels per stitched pixel
    PairParams pairs;
    PyramidParams pyramid;

    /// Throws Error(ConfigError).
    void validate() const;
    /// Copies the seed into the RANSAC settings and the scale into the pair settings.
    void propagate();
    void set_threads(int threads);
};

/// The effective configuration in config-file form.
nlohmann::json to_json(const PipelineConfig& config);

/// Missing keys keep their defaults. Unknown keys and wrong types throw
/// Error(ConfigError) naming the dotted key path, e.g. "stitch.batchsize".
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Process exit status for a failure class:
///   2 configuration or arguments, 3 unusable input, 4 registration or stitching,
///   5 no valid tile pairs, 6 file I/O, 7 corrupt pyramid.
/// 0 is success and 1 is reserved for unexpected failures.
int exit_code(ErrorKind kind);

struct RunOptions {
    int threads = 1;
    std::optional<std::filesystem::path> scan;  // reference scan enables coregister, pairs and metrics
    /// Receives one JSON object per stage ({"event", "stage", "seconds", ...}).
    std::function<void(const nlohmann::json&)> log;
};

struct RunSummary {
    std::size_t frames_in = 0;
    std::size_t records = 0;
    std::size_t placed = 0;
    std::size_t dropped = 0;
    int mosaic_width = 0;
    int mosaic_height = 0;
    int pyramid_levels = 0;
    std::optional<CoregResult> coregistration;
    std::size_t pairs = 0;
    std::optional<MetricsReport> metrics;
};

/// extract -> stitch_recursive -> build_pyramid, then with a scan
/// coregister -> extract_pairs -> metrics. Writes under `out_dir`:
///   extraction.json, frames/, mosaic.png, stitch_manifest.json, pyramid/,
///   [coregistration.json, pairs/, metrics.json], manifest.json (last).
/// Every JSON output carries the effective config. Errors keep their kind and
/// gain the stage name as a message prefix.
RunSummary run_pipeline(const std::filesystem::path& frame_dir, const std::filesystem::path& out_dir,
                        PipelineConfig config, const RunOptions& options = {});

/// Baseline metrics with no enhancer: each lowq tile is upscaled bilinearly by the
/// pair scale and compared with its highq tile. Test split if present,
/// else validation, else all pairs.
MetricsReport baseline_metrics(const std::vector<TilePair>& pairs, int scale, std::string* split_used = nullptr);

/// Every frame file in `dir` (see list_frames) as a record, in file order.
std::vector<FrameRecord> load_frame_records(const std::filesystem::path& dir);

/// Writes `j` as indented JSON plus a newline. Throws Error(IoError).
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace vid2wsi
