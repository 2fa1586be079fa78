#include "vid2wsi/pipeline.hpp"

#include "vid2wsi/image_io.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <type_traits>

namespace vid2wsi {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

/// One JSON object of the config file. Reads are strict about types and every
/// key that was never asked for is reported as unknown.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object())
            throw Error(ErrorKind::ConfigError, "config key '" + (path_.empty() ? "<root>" : path_) + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        bool ok;
        if constexpr (std::is_same_v<T, bool>)
            ok = it->is_boolean();
        else if constexpr (std::is_unsigned_v<T>)
            ok = it->is_number_unsigned() || (it->is_number_integer() && it->template get<std::int64_t>() >= 0);
        else if constexpr (std::is_integral_v<T>)
            ok = it->is_number_integer();
        else if constexpr (std::is_floating_point_v<T>)
            ok = it->is_number();
        else
            ok = it->is_string();
        if (!ok) throw Error(ErrorKind::ConfigError, "config key '" + name(key) + "' has the wrong type");
        out = it->template get<T>();
    }

    void get(const char* key, std::optional<std::size_t>& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        if (it->is_null()) {
            out.reset();
            return;
        }
        std::size_t v = 0;
        get(key, v);
        out = v;
    }

    /// String-valued enumeration parsed by `parse`.
    template <typename T, typename Parse>
    void get_enum(const char* key, T& out, Parse parse) {
        std::string s;
        seen_.insert(key);
        if (!j_.contains(key)) return;
        get(key, s);
        try {
            out = parse(s);
        } catch (const Error& e) {
            throw Error(ErrorKind::ConfigError, "config key '" + name(key) + "': " + e.detail());
        }
    }

    std::optional<Section> sub(const char* key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return std::nullopt;
        return Section(*it, name(key));
    }

    void reject_unknown() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw Error(ErrorKind::ConfigError, "unknown config key '" + name(k) + "'");
    }

private:
    std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

json registration_json(const RegistrationParams& r) {
    return {{"model", to_string(r.model)},
            {"ratio", r.ratio},
            {"features",
             {{"max_keypoints", r.features.max_keypoints},
              {"fast_threshold", r.features.fast_threshold},
              {"cell_size", r.features.cell_size},
              {"per_cell_cap", r.features.per_cell_cap}}},
            {"ransac",
             {{"max_iterations", r.ransac.max_iterations},
              {"confidence", r.ransac.confidence},
              {"inlier_threshold", r.ransac.inlier_threshold},
              {"min_inliers", r.ransac.min_inliers}}}};
}

void read_registration(Section& s, RegistrationParams& r) {
    s.get_enum("model", r.model, transform_model_from_string);
    s.get("ratio", r.ratio);
    if (auto f = s.sub("features")) {
        f->get("max_keypoints", r.features.max_keypoints);
        f->get("fast_threshold", r.features.fast_threshold);
        f->get("cell_size", r.features.cell_size);
        f->get("per_cell_cap", r.features.per_cell_cap);
        f->reject_unknown();
    }
    if (auto g = s.sub("ransac")) {
        g->get("max_iterations", r.ransac.max_iterations);
        g->get("confidence", r.ransac.confidence);
        g->get("inlier_threshold", r.ransac.inlier_threshold);
        g->get("min_inliers", r.ransac.min_inliers);
        g->reject_unknown();
    }
    s.reject_unknown();
}

void check_registration(const RegistrationParams& r, const std::string& where) {
    const auto fail = [&](const std::string& what) { throw Error(ErrorKind::ConfigError, where + ": " + what); };
    if (!(r.ratio > 0 && r.ratio <= 1)) fail("ratio must lie in (0, 1]");
    if (r.features.max_keypoints < 8) fail("features.max_keypoints must be >= 8");
    if (r.features.fast_threshold < 1 || r.features.fast_threshold > 255) fail("features.fast_threshold must lie in [1, 255]");
    if (r.features.cell_size < 8) fail("features.cell_size must be >= 8");
    if (r.features.per_cell_cap < 0) fail("features.per_cell_cap must be >= 0");
    if (r.ransac.max_iterations < 1) fail("ransac.max_iterations must be >= 1");
    if (!(r.ransac.confidence > 0 && r.ransac.confidence < 1)) fail("ransac.confidence must lie in (0, 1)");
    if (!(r.ransac.inlier_threshold > 0)) fail("ransac.inlier_threshold must be positive");
    if (r.ransac.min_inliers < 3) fail("ransac.min_inliers must be >= 3");
}

using Clock = std::chrono::steady_clock;

/// Last path component, ignoring a trailing separator; absolute prefixes would
/// make manifests depend on where the run happened.
std::string dir_name(const fs::path& dir) {
    fs::path p = dir.lexically_normal();
    if (p.filename().empty()) p = p.parent_path();
    return p.filename().string();
}

/// Runs one stage, re-raising library errors with the stage name in front.
template <typename Fn>
auto stage(const char* name, const RunOptions& options, Fn&& fn) {
    const auto start = Clock::now();
    try {
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            if (options.log)
                options.log({{"event", "stage"},
                             {"stage", name},
                             {"seconds", std::chrono::duration<double>(Clock::now() - start).count()}});
        } else {
            auto out = fn();
            if (options.log)
                options.log({{"event", "stage"},
                             {"stage", name},
                             {"seconds", std::chrono::duration<double>(Clock::now() - start).count()}});
            return out;
        }
    } catch (const Error& e) {
        throw Error(e.kind(), std::string(name) + ": " + e.detail());
    }
}

}  // namespace

void PipelineConfig::validate() const {
    const auto wrap = [](const char* where, auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::ConfigError) throw;
            throw Error(ErrorKind::ConfigError, std::string(where) + ": " + e.detail());
        }
    };
    const auto& x = extraction;
    if (!(x.motion_threshold > 0)) throw Error(ErrorKind::ConfigError, "extraction.motion_threshold must be positive");
    if (!(x.fps > 0)) throw Error(ErrorKind::ConfigError, "extraction.fps must be positive");
    if (x.min_len && *x.min_len < 1) throw Error(ErrorKind::ConfigError, "extraction.min_len must be >= 1");
    if (x.stride < 1) throw Error(ErrorKind::ConfigError, "extraction.stride must be >= 1");
    if (!(x.dedup_threshold > 0 && x.dedup_threshold <= 1))
        throw Error(ErrorKind::ConfigError, "extraction.dedup_threshold must lie in (0, 1]");
    if (x.block.block < 8 || x.block.radius < 1 || x.block.grid_stride < 1 || x.block.min_block_std < 0)
        throw Error(ErrorKind::ConfigError, "extraction.block_match values out of range");
    wrap("stitch", [&] { stitch.validate(); });
    check_registration(stitch.registration, "stitch.registration");
    if (stitch.registration.model == TransformModel::Homography)
        throw Error(ErrorKind::ConfigError, "stitch.registration: homography is not supported for stitching");
    wrap("coregister", [&] { coregister.validate(); });
    check_registration(coregister.registration, "coregister.registration");
    if (scan_scale < 1 || scan_scale > 16) throw Error(ErrorKind::ConfigError, "coregister.scale must lie in [1, 16]");
    wrap("pairs", [&] { pairs.validate(); });
    wrap("pyramid", [&] { pyramid.validate(); });
}

void PipelineConfig::propagate() {
    stitch.registration.ransac.seed = seed;
    coregister.registration.ransac.seed = seed;
    pairs.scale = scan_scale;
}

void PipelineConfig::set_threads(int threads) {
    threads = std::max(1, threads);
    extraction.threads = threads;
    stitch.threads = threads;
    coregister.threads = threads;
    pairs.threads = threads;
    pyramid.threads = threads;
}

json to_json(const PipelineConfig& c) {
    const auto& x = c.extraction;
    return {{"seed", c.seed},
            {"extraction",
             {{"motion_threshold", x.motion_threshold},
              {"fps", x.fps},
              {"min_len", x.min_len ? json(*x.min_len) : json(nullptr)},
              {"stride", x.stride},
              {"dedup_threshold", x.dedup_threshold},
              {"block_match",
               {{"block", x.block.block},
                {"radius", x.block.radius},
                {"grid_stride", x.block.grid_stride},
                {"min_block_std", x.block.min_block_std}}}}},
            {"stitch",
             {{"batch_size", c.stitch.batch_size},
              {"blend", to_string(c.stitch.blend)},
              {"gain_compensation", c.stitch.gain_compensation},
              {"max_scale_change", c.stitch.max_scale_change},
              {"feature_levels", c.stitch.feature_levels},
              {"refine", c.stitch.refine},
              {"registration", registration_json(c.stitch.registration)}}},
            {"coregister",
             {{"scale", c.scan_scale},
              {"refine", c.coregister.refine},
              {"registration", registration_json(c.coregister.registration)}}},
            {"pairs",
             {{"tile", c.pairs.tile},
              {"stride", c.pairs.stride},
              {"valid_min", c.pairs.valid_min},
              {"train_fraction", c.pairs.train_fraction},
              {"val_fraction", c.pairs.val_fraction},
              {"slide_id", c.pairs.slide_id}}},
            {"pyramid",
             {{"tile_size", c.pyramid.tile_size},
              {"overlap", c.pyramid.overlap},
              {"format", to_string(c.pyramid.format)},
              {"jpeg_quality", c.pyramid.jpeg_quality},
              {"name", c.pyramid.name}}}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
    PipelineConfig c;
    Section root(j, "");
    root.get("seed", c.seed);
    if (auto s = root.sub("extraction")) {
        auto& x = c.extraction;
        s->get("motion_threshold", x.motion_threshold);
        s->get("fps", x.fps);
        s->get("min_len", x.min_len);
        s->get("stride", x.stride);
        s->get("dedup_threshold", x.dedup_threshold);
        if (auto b = s->sub("block_match")) {
            b->get("block", x.block.block);
            b->get("radius", x.block.radius);
            b->get("grid_stride", x.block.grid_stride);
            b->get("min_block_std", x.block.min_block_std);
            b->reject_unknown();
        }
        s->reject_unknown();
    }
    if (auto s = root.sub("stitch")) {
        s->get("batch_size", c.stitch.batch_size);
        s->get_enum("blend", c.stitch.blend, blend_mode_from_string);
        s->get("gain_compensation", c.stitch.gain_compensation);
        s->get("max_scale_change", c.stitch.max_scale_change);
        s->get("feature_levels", c.stitch.feature_levels);
        s->get("refine", c.stitch.refine);
        if (auto r = s->sub("registration")) read_registration(*r, c.stitch.registration);
        s->reject_unknown();
    }
    if (auto s = root.sub("coregister")) {
        s->get("scale", c.scan_scale);
        s->get("refine", c.coregister.refine);
        if (auto r = s->sub("registration")) read_registration(*r, c.coregister.registration);
        s->reject_unknown();
    }
    if (auto s = root.sub("pairs")) {
        s->get("tile", c.pairs.tile);
        s->get("stride", c.pairs.stride);
        s->get("valid_min", c.pairs.valid_min);
        s->get("train_fraction", c.pairs.train_fraction);
        s->get("val_fraction", c.pairs.val_fraction);
        s->get("slide_id", c.pairs.slide_id);
        s->reject_unknown();
    }
    if (auto s = root.sub("pyramid")) {
        s->get("tile_size", c.pyramid.tile_size);
        s->get("overlap", c.pyramid.overlap);
        s->get_enum("format", c.pyramid.format, tile_format_from_string);
        s->get("jpeg_quality", c.pyramid.jpeg_quality);
        s->get("name", c.pyramid.name);
        s->reject_unknown();
    }
    root.reject_unknown();
    c.propagate();
    c.validate();
    return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigError, "cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigError, path.string() + " is not valid JSON: " + e.what());
    }
    return pipeline_config_from_json(j);
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ConfigError:
        case ErrorKind::InvalidArgument: return 2;
        case ErrorKind::NoFramesFound:
        case ErrorKind::InconsistentDimensions:
        case ErrorKind::EmptyInput:
        case ErrorKind::ImageTooSmall:
        case ErrorKind::DimensionMismatch:
        case ErrorKind::SpecInfeasible: return 3;
        case ErrorKind::InsufficientMatches:
        case ErrorKind::NoConsensus:
        case ErrorKind::SingularTransform:
        case ErrorKind::StitchFailed: return 4;
        case ErrorKind::NoValidTiles: return 5;
        case ErrorKind::IoError: return 6;
        case ErrorKind::CorruptPyramid: return 7;
    }
    return 1;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::IoError, path.string() + " is not valid JSON: " + e.what());
    }
}

std::vector<FrameRecord> load_frame_records(const fs::path& dir) {
    const auto files = list_frames(dir);
    std::vector<FrameRecord> out(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        out[i].image = read_image(files[i]);
        out[i].seq_index = out[i].source_first = out[i].source_last = out[i].source_index = i;
    }
    return out;
}

MetricsReport baseline_metrics(const std::vector<TilePair>& pairs, int scale, std::string* split_used) {
    std::vector<const TilePair*> chosen;
    std::string used;
    for (Split s : {Split::Test, Split::Val}) {
        for (const auto& p : pairs)
            if (p.split == s) chosen.push_back(&p);
        if (!chosen.empty()) {
            used = to_string(s);
            break;
        }
    }
    if (chosen.empty()) {
        for (const auto& p : pairs) chosen.push_back(&p);
        used = "all";
    }
    if (split_used) *split_used = used;
    std::vector<MetricSample> samples(chosen.size());
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        Image up = upscale(chosen[i]->lowq, scale);
        if (up.channels() == 1 && chosen[i]->highq.channels() == 3) up = gray_to_rgb(up);
        Image ref = chosen[i]->highq;
        if (ref.channels() == 1 && up.channels() == 3) ref = gray_to_rgb(ref);
        samples[i] = measure(ref, up, chosen[i]->id);
    }
    return aggregate(samples);
}

RunSummary run_pipeline(const fs::path& frame_dir, const fs::path& out_dir, PipelineConfig config,
                        const RunOptions& options) {
    config.propagate();
    config.set_threads(options.threads);
    stage("config", {}, [&] { config.validate(); });
    const json echo = to_json(config);

    std::error_code ec;
    fs::create_directories(out_dir / "frames", ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

    RunSummary summary;
    json outputs = json::object();

    ExtractionResult extracted = stage("extract", options, [&] {
        auto r = extract_frames(frame_dir, config.extraction);
        if (r.records.empty()) throw Error(ErrorKind::NoFramesFound, "no pause segments in " + frame_dir.string());
        for (const auto& rec : r.records) {
            char name[32];
            std::snprintf(name, sizeof name, "frame_%06zu.png", rec.seq_index);
            write_image(out_dir / "frames" / name, rec.image);
        }
        write_json(out_dir / "extraction.json", {{"config", echo}, {"extraction", r.log}});
        return r;
    });
    summary.frames_in = extracted.log.value("frame_count", std::size_t{0});
    summary.records = extracted.records.size();
    outputs["extraction"] = "extraction.json";
    outputs["frames"] = "frames/";

    StitchOutput stitched = stage("stitch", options, [&] {
        auto s = stitch_recursive(extracted.records, config.stitch);
        write_image(out_dir / "mosaic.png", s.mosaic.image);
        write_json(out_dir / "stitch_manifest.json", {{"config", echo}, {"stitch", to_json(s.manifest)}});
        return s;
    });
    extracted.records.clear();
    summary.placed = stitched.manifest.transforms.size();
    summary.dropped = stitched.manifest.dropped.size();
    summary.mosaic_width = stitched.mosaic.image.width();
    summary.mosaic_height = stitched.mosaic.image.height();
    outputs["mosaic"] = "mosaic.png";
    outputs["stitch_manifest"] = "stitch_manifest.json";

    const TilePyramid pyramid = stage("tile", options, [&] {
        PyramidParams p = config.pyramid;
        p.config = echo;
        return build_pyramid(stitched.mosaic.image, out_dir / "pyramid", p);
    });
    summary.pyramid_levels = pyramid.level_count();
    outputs["pyramid"] = "pyramid/pyramid.json";

    json scan_summary = nullptr;
    if (options.scan) {
        const Image scan = stage("read_scan", {}, [&] { return read_image(*options.scan); });
        const CoregResult coreg = stage("coregister", options, [&] {
            auto c = coregister(stitched.mosaic.image, scan, config.scan_scale, config.coregister);
            write_json(out_dir / "coregistration.json", {{"config", echo}, {"coregistration", to_json(c)}});
            return c;
        });
        summary.coregistration = coreg;
        outputs["coregistration"] = "coregistration.json";

        const auto pairs = stage("pairs", options, [&] {
            auto p = extract_pairs(stitched.mosaic.image, scan, coreg, config.pairs);
            write_pairs(out_dir / "pairs", p, coreg, config.pairs, echo);
            return p;
        });
        summary.pairs = pairs.size();
        outputs["pairs"] = "pairs/pairs.json";

        std::string split;
        const MetricsReport report = stage("metrics", options, [&] {
            auto r = baseline_metrics(pairs, config.scan_scale, &split);
            write_json(out_dir / "metrics.json", {{"config", echo},
                                                  {"baseline", "bilinear upscale of lowq tiles"},
                                                  {"split", split},
                                                  {"table", format_table({{"baseline", r}})},
                                                  {"report", to_json(r)}});
            return r;
        });
        summary.metrics = report;
        outputs["metrics"] = "metrics.json";
        scan_summary = {{"file", options.scan->filename().string()},
                        {"inliers", coreg.inliers},
                        {"overlap_fraction", coreg.overlap_fraction},
                        {"pairs", pairs.size()},
                        {"metrics_split", split},
                        {"metrics", format_mean_std(report.ssim_mean, report.ssim_std) + " / " +
                                        format_mean_std(report.psnr_mean, report.psnr_std)}};
    }

    write_json(out_dir / "manifest.json",
               {{"format", "vid2wsi-run"},
                {"version", 1},
                {"config", echo},
                {"input", {{"frame_dir", dir_name(frame_dir)}, {"frame_count", summary.frames_in}}},
                {"summary",
                 {{"records", summary.records},
                  {"placed", summary.placed},
                  {"dropped", summary.dropped},
                  {"mosaic", {{"width", summary.mosaic_width}, {"height", summary.mosaic_height}}},
                  {"pyramid_levels", summary.pyramid_levels},
                  {"scan", scan_summary}}},
                {"outputs", outputs}});
    return summary;
}

}  // namespace vid2wsi
