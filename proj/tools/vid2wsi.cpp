// vid2wsi command line: each pipeline stage as a subcommand plus `run` for all of them.

#include "vid2wsi/coregister.hpp"
#include "vid2wsi/errors.hpp"
#include "vid2wsi/image_io.hpp"
#include "vid2wsi/metrics.hpp"
#include "vid2wsi/parallel.hpp"
#include "vid2wsi/pipeline.hpp"
#include "vid2wsi/stitcher.hpp"
#include "vid2wsi/synthgen.hpp"
#include "vid2wsi/wsi_output.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vid2wsi;

namespace {

struct Globals {
    int threads = 0;  // 0: VID2WSI_THREADS or all cores
    bool json_logs = false;
    std::string config_path;
};

Globals g;

int thread_count() { return g.threads > 0 ? g.threads : default_thread_count(); }

/// Progress and results go to stderr, as JSON lines under --json.
void log_event(const json& event) {
    if (g.json_logs) {
        std::cerr << event.dump() << '\n';
        return;
    }
    if (event.value("event", "") == "stage") {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.2f s", event.value("seconds", 0.0));
        std::cerr << "[" << event.value("stage", "") << "] " << buf << '\n';
    } else if (event.contains("message")) {
        std::cerr << event["message"].get<std::string>() << '\n';
    }
}

void info(const std::string& message, json extra = json::object()) {
    extra["event"] = "info";
    extra["message"] = message;
    log_event(extra);
}

PipelineConfig base_config() {
    PipelineConfig c = g.config_path.empty() ? PipelineConfig{} : load_pipeline_config(g.config_path);
    c.propagate();
    c.set_threads(thread_count());
    return c;
}

/// Re-checks a config after command-line overrides.
void finish_config(PipelineConfig& c) {
    c.propagate();
    c.set_threads(thread_count());
    c.validate();
}

template <typename Fn>
double timed(Fn&& fn) {
    const auto t = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

void stage_done(const char* name, double seconds) { log_event({{"event", "stage"}, {"stage", name}, {"seconds", seconds}}); }

// --- synth ----------------------------------------------------------------

struct SynthArgs {
    std::string spec_path, out;
    std::optional<std::uint64_t> seed;
    std::optional<int> stops, columns, pause_frames, travel_frames;
    std::optional<int> frame_width, frame_height, slide_width, slide_height, revisits, channels;
    std::optional<double> overlap, brightness_jitter, blur_fraction;
};

void cmd_synth(const SynthArgs& a) {
    SweepSpec s;
    if (!a.spec_path.empty()) {
        try {
            s = sweep_spec_from_json(read_json(a.spec_path));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::IoError) throw Error(ErrorKind::ConfigError, e.detail());
            throw;
        }
    }
    if (a.seed) s.seed = *a.seed;
    if (a.stops) s.stops = *a.stops;
    if (a.columns) s.columns = *a.columns;
    if (a.pause_frames) s.pause_frames = *a.pause_frames;
    if (a.travel_frames) s.travel_frames = *a.travel_frames;
    if (a.frame_width) s.frame_width = *a.frame_width;
    if (a.frame_height) s.frame_height = *a.frame_height;
    if (a.slide_width) s.slide_width = *a.slide_width;
    if (a.slide_height) s.slide_height = *a.slide_height;
    if (a.revisits) s.revisits = *a.revisits;
    if (a.channels) s.channels = *a.channels;
    if (a.overlap) s.overlap_fraction = *a.overlap;
    if (a.brightness_jitter) s.brightness_jitter = *a.brightness_jitter;
    if (a.blur_fraction) s.blur_fraction = *a.blur_fraction;
    GroundTruth truth;
    const double secs = timed([&] { truth = generate(s, a.out); });
    stage_done("synth", secs);
    info("wrote " + std::to_string(truth.frames.size()) + " frames with " + std::to_string(truth.pauses.size()) +
             " pauses to " + a.out,
         {{"frames", truth.frames.size()}, {"pauses", truth.pauses.size()}});
}

// --- extract --------------------------------------------------------------

void cmd_extract(const std::string& frame_dir, const std::string& out, std::optional<double> threshold,
                 std::optional<std::size_t> min_len) {
    PipelineConfig c = base_config();
    if (threshold) c.extraction.motion_threshold = *threshold;
    if (min_len) c.extraction.min_len = *min_len;
    finish_config(c);
    ExtractionResult r;
    stage_done("extract", timed([&] { r = extract_frames(frame_dir, c.extraction); }));
    fs::create_directories(fs::path(out) / "frames");
    for (const auto& rec : r.records) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%06zu.png", rec.seq_index);
        write_image(fs::path(out) / "frames" / name, rec.image);
    }
    write_json(fs::path(out) / "extraction.json", {{"config", to_json(c)}, {"extraction", r.log}});
    info(std::to_string(r.records.size()) + " pause frames written to " + (fs::path(out) / "frames").string(),
         {{"records", r.records.size()}});
}

// --- stitch ---------------------------------------------------------------

struct StitchArgs {
    std::string frames, out;
    std::optional<int> batch_size;
    std::optional<std::string> blend;
    std::optional<bool> gain_comp;
    std::optional<std::uint64_t> seed;
    bool naive = false;
};

void cmd_stitch(const StitchArgs& a) {
    PipelineConfig c = base_config();
    if (a.batch_size) c.stitch.batch_size = *a.batch_size;
    if (a.blend) c.stitch.blend = blend_mode_from_string(*a.blend);
    if (a.gain_comp) c.stitch.gain_compensation = *a.gain_comp;
    if (a.seed) c.seed = *a.seed;
    finish_config(c);
    const auto frames = load_frame_records(a.frames);
    if (frames.empty()) throw Error(ErrorKind::NoFramesFound, "no frames in " + a.frames);
    StitchOutput s;
    stage_done("stitch", timed([&] { s = a.naive ? stitch_naive(frames, c.stitch) : stitch_recursive(frames, c.stitch); }));
    fs::create_directories(a.out);
    write_image(fs::path(a.out) / "mosaic.png", s.mosaic.image);
    write_json(fs::path(a.out) / "stitch_manifest.json", {{"config", to_json(c)}, {"stitch", to_json(s.manifest)}});
    info("placed " + std::to_string(s.manifest.transforms.size()) + " of " + std::to_string(frames.size()) +
             " frames, " + std::to_string(s.manifest.registration_calls) + " registrations, mosaic " +
             std::to_string(s.mosaic.image.width()) + "x" + std::to_string(s.mosaic.image.height()),
         {{"placed", s.manifest.transforms.size()},
          {"dropped", s.manifest.dropped.size()},
          {"registration_calls", s.manifest.registration_calls},
          {"timing", timing_json(s.manifest)}});
}

// --- coregister / pairs ---------------------------------------------------

void cmd_coregister(const std::string& stitched, const std::string& scan, const std::string& out,
                    std::optional<int> scale) {
    PipelineConfig c = base_config();
    if (scale) c.scan_scale = *scale;
    finish_config(c);
    const Image a = read_image(stitched), b = read_image(scan);
    CoregResult r;
    stage_done("coregister", timed([&] { r = coregister(a, b, c.scan_scale, c.coregister); }));
    write_json(out, {{"config", to_json(c)}, {"coregistration", to_json(r)}});
    info("coregistered with " + std::to_string(r.inliers) + " inliers, overlap " +
             std::to_string(r.overlap_fraction),
         {{"coregistration", to_json(r)}});
}

void cmd_pairs(const std::string& stitched, const std::string& scan, const std::string& coreg_path,
               const std::string& out, std::optional<int> tile, std::optional<int> stride,
               std::optional<std::string> slide_id) {
    PipelineConfig c = base_config();
    if (tile) c.pairs.tile = *tile;
    if (stride) c.pairs.stride = *stride;
    if (slide_id) c.pairs.slide_id = *slide_id;
    const json cj = read_json(coreg_path);
    const CoregResult coreg = coreg_result_from_json(cj.contains("coregistration") ? cj["coregistration"] : cj);
    if (cj.contains("config") && cj["config"].contains("coregister"))
        c.scan_scale = cj["config"]["coregister"].value("scale", c.scan_scale);
    finish_config(c);
    const Image a = read_image(stitched), b = read_image(scan);
    std::vector<TilePair> pairs;
    stage_done("pairs", timed([&] {
                   pairs = extract_pairs(a, b, coreg, c.pairs);
                   write_pairs(out, pairs, coreg, c.pairs, to_json(c));
               }));
    info(std::to_string(pairs.size()) + " tile pairs written to " + out, {{"pairs", pairs.size()}});
}

// --- metrics --------------------------------------------------------------

void cmd_metrics(const std::string& ref, const std::string& test, const std::string& out, const std::string& label) {
    std::vector<MetricSample> samples;
    if (fs::is_directory(ref)) {
        if (!fs::is_directory(test)) throw Error(ErrorKind::InvalidArgument, "--ref is a directory but --test is not");
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(ref))
            if (e.is_regular_file()) files.push_back(e.path().filename());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            if (!fs::exists(fs::path(test) / f)) throw Error(ErrorKind::IoError, "no counterpart for " + f.string());
            samples.push_back(measure(read_image(fs::path(ref) / f), read_image(fs::path(test) / f), f.stem().string()));
        }
    } else {
        samples.push_back(measure(read_image(ref), read_image(test), fs::path(test).stem().string()));
    }
    const MetricsReport r = aggregate(samples);
    const json j = to_json(r);
    if (!out.empty()) write_json(out, j);
    if (g.json_logs) {
        std::cout << j.dump() << '\n';
    } else {
        char buf[96];
        std::snprintf(buf, sizeof buf, "ssim %.6f psnr %.2f dB (n=%zu)\n", r.ssim_mean, r.psnr_mean, r.n);
        std::cout << buf << format_table({{label, r}}) << format_latex_row(label, r) << '\n';
    }
}

// --- tile -----------------------------------------------------------------

void cmd_tile(const std::string& input, const std::string& out, bool verify, const std::string& original,
              std::optional<int> tile_size, std::optional<int> overlap, std::optional<std::string> format) {
    if (verify) {
        const fs::path dir = out.empty() ? fs::path(input) : fs::path(out);
        Image orig;
        if (!original.empty()) orig = read_image(original);
        PyramidCheck check;
        stage_done("verify", timed([&] { check = verify_pyramid(dir, original.empty() ? nullptr : &orig); }));
        if (!check.ok) {
            for (const auto& p : check.problems) log_event({{"event", "problem"}, {"message", p}});
            throw Error(ErrorKind::CorruptPyramid, std::to_string(check.problems.size()) + " problem(s) in " + dir.string());
        }
        const TilePyramid p = open_pyramid(dir);
        std::cout << "round trip OK: " << p.level_count() << " levels, " << p.base_width << "x" << p.base_height
                  << " base\n";
        return;
    }
    if (out.empty()) throw Error(ErrorKind::InvalidArgument, "tile needs --out");
    PipelineConfig c = base_config();
    if (tile_size) c.pyramid.tile_size = *tile_size;
    if (overlap) c.pyramid.overlap = *overlap;
    if (format) c.pyramid.format = tile_format_from_string(*format);
    finish_config(c);
    const Image img = read_image(input);
    TilePyramid p;
    stage_done("tile", timed([&] { p = build_pyramid(img, out, c.pyramid); }));
    std::size_t tiles = 0;
    for (const auto& l : p.levels) tiles += static_cast<std::size_t>(l.cols) * l.rows;
    info("wrote " + std::to_string(p.level_count()) + " levels, " + std::to_string(tiles) + " tiles to " + out,
         {{"levels", p.level_count()}, {"tiles", tiles}});
}

// --- run ------------------------------------------------------------------

void cmd_run(const std::string& frames, const std::string& out, const std::string& scan) {
    PipelineConfig c = base_config();
    RunOptions opts;
    opts.threads = thread_count();
    if (!scan.empty()) opts.scan = scan;
    opts.log = log_event;
    const RunSummary s = run_pipeline(frames, out, c, opts);
    std::string msg = std::to_string(s.records) + " pause frames, " + std::to_string(s.placed) + " placed, mosaic " +
                      std::to_string(s.mosaic_width) + "x" + std::to_string(s.mosaic_height) + ", " +
                      std::to_string(s.pyramid_levels) + " pyramid levels";
    if (s.metrics)
        msg += ", " + std::to_string(s.pairs) + " pairs, baseline " + format_mean_std(s.metrics->ssim_mean, s.metrics->ssim_std) +
               " / " + format_mean_std(s.metrics->psnr_mean, s.metrics->psnr_std);
    info(msg, {{"records", s.records}, {"placed", s.placed}, {"dropped", s.dropped}});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vid2wsi: whole-slide images from microscope video frames"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand
    app.add_option("--threads", g.threads, "Worker threads (default: VID2WSI_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);
    app.add_flag("--json", g.json_logs, "Machine-readable JSON log lines on stderr");
    app.add_option("--config", g.config_path, "Pipeline config file (JSON)");

    SynthArgs synth;
    auto* sy = app.add_subcommand("synth", "Render a synthetic sweep with ground truth");
    sy->add_option("--out", synth.out, "Output frame directory")->required();
    sy->add_option("--spec", synth.spec_path, "Sweep spec JSON");
    sy->add_option("--seed", synth.seed);
    sy->add_option("--stops", synth.stops);
    sy->add_option("--columns", synth.columns);
    sy->add_option("--pause-frames", synth.pause_frames);
    sy->add_option("--travel-frames", synth.travel_frames);
    sy->add_option("--frame-width", synth.frame_width);
    sy->add_option("--frame-height", synth.frame_height);
    sy->add_option("--slide-width", synth.slide_width);
    sy->add_option("--slide-height", synth.slide_height);
    sy->add_option("--overlap", synth.overlap);
    sy->add_option("--brightness-jitter", synth.brightness_jitter);
    sy->add_option("--blur-fraction", synth.blur_fraction);
    sy->add_option("--revisits", synth.revisits);
    sy->add_option("--channels", synth.channels);

    std::string frames_dir, out;
    std::optional<double> threshold;
    std::optional<std::size_t> min_len;
    auto* ex = app.add_subcommand("extract", "Pick one sharp frame per pause and drop duplicates");
    ex->add_option("frames", frames_dir, "Directory of numbered frames")->required();
    ex->add_option("--out", out, "Output directory")->required();
    ex->add_option("--motion-threshold", threshold);
    ex->add_option("--min-len", min_len);

    StitchArgs st;
    auto* sc = app.add_subcommand("stitch", "Stitch a directory of frames into a mosaic");
    sc->add_option("frames", st.frames, "Directory of frames, stitched in file order")->required();
    sc->add_option("--out", st.out, "Output directory")->required();
    sc->add_option("--batch-size", st.batch_size);
    sc->add_option("--blend", st.blend)->check(CLI::IsMember({"feather", "none"}));
    sc->add_option("--gain-comp", st.gain_comp, "Gain compensation (true/false)");
    sc->add_option("--seed", st.seed);
    sc->add_flag("--naive", st.naive, "All-pairs baseline instead of recursive batches");

    std::string stitched, scan, coreg_path;
    std::optional<int> scale, tile, stride;
    std::optional<std::string> slide_id;
    auto* co = app.add_subcommand("coregister", "Affine map from the stitched image to a reference scan");
    co->add_option("--stitched", stitched)->required();
    co->add_option("--scan", scan)->required();
    co->add_option("--out", out, "Output JSON")->required();
    co->add_option("--scale", scale, "Scanned pixels per stitched pixel");

    auto* pa = app.add_subcommand("pairs", "Cut lowq/highq training pairs");
    pa->add_option("--stitched", stitched)->required();
    pa->add_option("--scan", scan)->required();
    pa->add_option("--coreg", coreg_path, "Output of `coregister`")->required();
    pa->add_option("--out", out, "Output directory")->required();
    pa->add_option("--tile", tile);
    pa->add_option("--stride", stride);
    pa->add_option("--slide-id", slide_id);

    std::string ref, test, label = "result";
    auto* me = app.add_subcommand("metrics", "SSIM and PSNR of test images against references");
    me->add_option("--ref", ref, "Reference image or directory")->required();
    me->add_option("--test", test, "Test image or directory")->required();
    me->add_option("--out", out, "Also write the JSON report here");
    me->add_option("--label", label, "Row label in the table");

    std::string input, original;
    bool verify = false;
    std::optional<int> tile_size, overlap;
    std::optional<std::string> format;
    auto* ti = app.add_subcommand("tile", "Write a deep-zoom tile pyramid, or verify one");
    ti->add_option("input", input, "Image to tile, or pyramid directory with --verify")->required();
    ti->add_option("--out", out, "Pyramid directory");
    ti->add_flag("--verify", verify, "Check an existing pyramid instead of writing one");
    ti->add_option("--original", original, "With --verify: image the base level must equal");
    ti->add_option("--tile-size", tile_size);
    ti->add_option("--overlap", overlap);
    ti->add_option("--format", format)->check(CLI::IsMember({"png", "jpeg", "jpg"}));

    auto* ru = app.add_subcommand("run", "Whole pipeline: extract, stitch, tile and, with a scan, pairs and metrics");
    ru->add_option("frames", frames_dir, "Directory of numbered frames")->required();
    ru->add_option("--out", out, "Output directory")->required();
    ru->add_option("--scan", scan, "Reference scan for coregistration, pairs and metrics");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code(ErrorKind::InvalidArgument);
    }

    try {
        if (*sy) cmd_synth(synth);
        else if (*ex) cmd_extract(frames_dir, out, threshold, min_len);
        else if (*sc) cmd_stitch(st);
        else if (*co) cmd_coregister(stitched, scan, out, scale);
        else if (*pa) cmd_pairs(stitched, scan, coreg_path, out, tile, stride, slide_id);
        else if (*me) cmd_metrics(ref, test, out, label);
        else if (*ti) cmd_tile(input, out, verify, original, tile_size, overlap, format);
        else if (*ru) cmd_run(frames_dir, out, scan);
    } catch (const Error& e) {
        log_event({{"event", "error"}, {"kind", to_string(e.kind())}, {"message", std::string("error: ") + e.what()}});
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        log_event({{"event", "error"}, {"kind", "Internal"}, {"message", std::string("error: ") + e.what()}});
        return 1;
    }
    return 0;
}
