#include "doctest.h"
#include "testing/fixtures.hpp"

#include "vid2wsi/errors.hpp"
#include "vid2wsi/image_io.hpp"
#include "vid2wsi/parallel.hpp"
#include "vid2wsi/pipeline.hpp"
#include "vid2wsi/synthgen.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>

using namespace vid2wsi;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

ErrorKind kind_of(const json& j) {
    try {
        pipeline_config_from_json(j);
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("config was accepted");
    return ErrorKind::InvalidArgument;
}

std::string message_of(const json& j) {
    try {
        pipeline_config_from_json(j);
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

SweepSpec sweep() {
    SweepSpec s;
    s.slide_width = 1400;
    s.slide_height = 1000;
    s.frame_width = 480;
    s.frame_height = 360;
    s.columns = 3;
    s.stops = 6;
    s.pause_frames = 6;
    s.travel_frames = 4;
    s.seed = 3;
    return s;
}

PipelineConfig sweep_config() {
    PipelineConfig c;
    c.extraction.min_len = 4;
    c.scan_scale = 2;
    c.pairs.tile = 128;
    c.pairs.stride = 128;
    c.pyramid.tile_size = 128;
    return c;
}

}  // namespace

TEST_CASE("default config round trips through json") {
    const PipelineConfig c;
    const json j = to_json(c);
    CHECK(to_json(pipeline_config_from_json(j)) == j);
    CHECK(to_json(pipeline_config_from_json(json::object())) == j);
    CHECK(j["stitch"]["batch_size"] == 40);
    CHECK(j["seed"] == 42);
    CHECK(j["extraction"]["min_len"].is_null());
    CHECK(j.dump().find("threads") == std::string::npos);
}

TEST_CASE("config overrides and seed propagation") {
    const PipelineConfig c = pipeline_config_from_json(
        {{"seed", 7}, {"stitch", {{"batch_size", 30}, {"blend", "none"}}}, {"coregister", {{"scale", 2}}}});
    CHECK(c.stitch.batch_size == 30);
    CHECK(c.stitch.blend == BlendMode::None);
    CHECK(c.stitch.registration.ransac.seed == 7);
    CHECK(c.coregister.registration.ransac.seed == 7);
    CHECK(c.pairs.scale == 2);
    CHECK(c.coregister.registration.model == TransformModel::Affine);
}

TEST_CASE("unknown config keys are named") {
    CHECK(kind_of({{"sed", 1}}) == ErrorKind::ConfigError);
    CHECK(message_of({{"sed", 1}}).find("'sed'") != std::string::npos);
    CHECK(message_of({{"stitch", {{"batchsize", 30}}}}).find("'stitch.batchsize'") != std::string::npos);
    CHECK(message_of({{"stitch", {{"registration", {{"ransac", {{"seed", 1}}}}}}}})
              .find("'stitch.registration.ransac.seed'") != std::string::npos);
    CHECK(message_of({{"extraction", {{"block_match", {{"size", 8}}}}}}).find("extraction.block_match.size") !=
          std::string::npos);
}

TEST_CASE("wrong types and values are config errors") {
    CHECK(kind_of({{"seed", "x"}}) == ErrorKind::ConfigError);
    CHECK(kind_of({{"seed", -1}}) == ErrorKind::ConfigError);
    CHECK(kind_of({{"stitch", {{"batch_size", 2.5}}}}) == ErrorKind::ConfigError);
    CHECK(kind_of({{"stitch", 3}}) == ErrorKind::ConfigError);
    CHECK(kind_of({{"stitch", {{"batch_size", 1}}}}) == ErrorKind::ConfigError);
    CHECK(kind_of({{"stitch", {{"blend", "multiband"}}}}) == ErrorKind::ConfigError);
    CHECK(message_of({{"stitch", {{"blend", "multiband"}}}}).find("stitch.blend") != std::string::npos);
    CHECK(kind_of({{"pairs", {{"train_fraction", 0.9}, {"val_fraction", 0.3}}}}) == ErrorKind::ConfigError);
    CHECK(kind_of({{"pyramid", {{"format", "tiff"}}}}) == ErrorKind::ConfigError);
    CHECK(kind_of({{"extraction", {{"min_len", 0}}}}) == ErrorKind::ConfigError);
    CHECK(kind_of({{"coregister", {{"scale", 0}}}}) == ErrorKind::ConfigError);
    CHECK(kind_of(json::array()) == ErrorKind::ConfigError);
    CHECK(pipeline_config_from_json({{"extraction", {{"min_len", nullptr}}}}).extraction.min_len == std::nullopt);
}

TEST_CASE("config files") {
    testing::TempDir dir("cfg");
    {
        std::ofstream(dir / "ok.json") << R"({"stitch": {"batch_size": 32}})";
        std::ofstream(dir / "bad.json") << "{not json";
    }
    CHECK(load_pipeline_config(dir / "ok.json").stitch.batch_size == 32);
    CHECK_THROWS_AS(load_pipeline_config(dir / "bad.json"), Error);
    CHECK_THROWS_AS(load_pipeline_config(dir / "missing.json"), Error);
}

TEST_CASE("exit codes separate failure classes") {
    CHECK(exit_code(ErrorKind::ConfigError) == 2);
    CHECK(exit_code(ErrorKind::NoFramesFound) == 3);
    CHECK(exit_code(ErrorKind::NoConsensus) == 4);
    CHECK(exit_code(ErrorKind::NoValidTiles) == 5);
    CHECK(exit_code(ErrorKind::IoError) == 6);
    CHECK(exit_code(ErrorKind::CorruptPyramid) == 7);
    std::set<int> classes;
    for (ErrorKind k : {ErrorKind::ConfigError, ErrorKind::NoFramesFound, ErrorKind::NoConsensus,
                        ErrorKind::NoValidTiles, ErrorKind::IoError, ErrorKind::CorruptPyramid})
        classes.insert(exit_code(k));
    CHECK(classes.size() == 6);
    CHECK(!classes.count(0));
    CHECK(!classes.count(1));
}

TEST_CASE("thirty identical frames give the frame back") {
    testing::TempDir dir("pipe_same");
    const Image frame = testing::noise_texture(320, 240, 9, 3);
    std::filesystem::create_directories(dir / "frames");
    for (int i = 1; i <= 30; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%06d.png", i);
        write_image(dir / "frames" / name, frame);
    }
    const RunSummary s = run_pipeline(dir / "frames", dir / "out", PipelineConfig{});
    CHECK(s.frames_in == 30);
    CHECK(s.records == 1);
    CHECK(s.placed == 1);
    CHECK(read_image(dir / "out" / "mosaic.png") == frame);
    CHECK(reassemble(dir / "out" / "pyramid", s.pyramid_levels - 1) == frame);
    const json m = read_json(dir / "out" / "manifest.json");
    CHECK(m["format"] == "vid2wsi-run");
    CHECK(m["config"] == to_json(PipelineConfig{}));
    CHECK(read_json(dir / "out" / "stitch_manifest.json")["config"] == m["config"]);
    CHECK(read_json(dir / "out" / "extraction.json")["config"] == m["config"]);
    CHECK(read_json(dir / "out" / "pyramid" / "pyramid.json")["config"] == m["config"]);
}

TEST_CASE("stage errors keep their kind and name the stage") {
    testing::TempDir dir("pipe_err");
    std::filesystem::create_directories(dir / "empty");
    try {
        run_pipeline(dir / "empty", dir / "out", PipelineConfig{});
        FAIL("expected NoFramesFound");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NoFramesFound);
        CHECK(e.detail().rfind("extract: ", 0) == 0);
    }
    PipelineConfig bad;
    bad.stitch.batch_size = 1;
    try {
        run_pipeline(dir / "empty", dir / "out", bad);
        FAIL("expected ConfigError");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ConfigError);
    }
}

TEST_CASE("full run with a reference scan, reproducible across thread counts") {
    testing::TempDir dir("pipe_scan");
    const SweepSpec spec = sweep();
    generate(spec, dir / "frames");
    write_image(dir / "scan.png", upscale(render_slide(spec), 2));

    std::vector<std::string> events;
    RunOptions opts;
    opts.scan = dir / "scan.png";
    opts.log = [&](const json& e) { events.push_back(e["stage"]); };
    const RunSummary a = run_pipeline(dir / "frames", dir / "a", sweep_config(), opts);
    CHECK(a.records == 6);
    CHECK(a.placed == 6);
    REQUIRE(a.coregistration);
    CHECK(a.coregistration->overlap_fraction > 0.9);
    CHECK(a.pairs > 10);
    REQUIRE(a.metrics);
    CHECK(a.metrics->ssim_mean > 0.3);
    CHECK(a.metrics->ssim_mean < 1.0);
    CHECK(events == std::vector<std::string>{"extract", "stitch", "tile", "coregister", "pairs", "metrics"});

    const json pairs = read_json(dir / "a" / "pairs" / "pairs.json");
    CHECK(pairs["highq_size"] == 256);
    CHECK(pairs["config"]["coregister"]["scale"] == 2);
    CHECK(std::filesystem::exists(dir / "a" / "pairs" / "lowq" / (pairs["pairs"][0]["id"].get<std::string>() + ".png")));
    CHECK(read_json(dir / "a" / "metrics.json")["split"] == "val");

    opts.threads = 3;
    opts.log = nullptr;
    run_pipeline(dir / "frames", dir / "b", sweep_config(), opts);
    for (const char* f : {"manifest.json", "extraction.json", "stitch_manifest.json", "coregistration.json",
                          "pairs/pairs.json", "metrics.json", "pyramid/pyramid.json", "mosaic.png"})
        CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
}

TEST_CASE("load_frame_records keeps file order") {
    testing::TempDir dir("pipe_load");
    for (int i : {3, 1, 2}) write_image(dir / ("f_" + std::to_string(i) + ".png"), Image(8, 8, 1, i));
    const auto r = load_frame_records(dir.path());
    REQUIRE(r.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(r[i].seq_index == i);
        CHECK(r[i].image.at(0, 0) == i + 1);
    }
}

TEST_CASE("sixty-stop sweep runs end to end within a minute") {
    testing::TempDir dir("pipe_sixty");
    SweepSpec s;  // the stitcher fixture, played as video with short pauses
    s.columns = 8;
    s.stops = 60;
    s.pause_frames = 6;
    s.travel_frames = 4;
    s.brightness_jitter = 0.1;
    s.blur_fraction = 0.2;
    s.blur_sigma = 1.5;
    s.seed = 7;
    generate(s, dir / "frames");
    PipelineConfig c;
    c.extraction.min_len = 4;
    RunOptions opts;
    opts.threads = default_thread_count();
    const auto start = std::chrono::steady_clock::now();
    const RunSummary r = run_pipeline(dir / "frames", dir / "out", c, opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    MESSAGE("end-to-end " << secs << " s");
    CHECK(r.records == 60);
    CHECK(r.placed == 60);
    CHECK(secs < 60);
}
