#include "doctest.h"
#include "testing/fixtures.hpp"

#include "vid2wsi/image_io.hpp"
#include "vid2wsi/pipeline.hpp"
#include "vid2wsi/synthgen.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>

using namespace vid2wsi;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

/// Runs the CLI with `args` (already shell-quoted where needed), capturing both streams.
Run cli(const testing::TempDir& dir, const std::string& args) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string(VID2WSI_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

void write_numbered(const std::filesystem::path& dir, const std::vector<Image>& frames) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%06zu.png", i + 1);
        write_image(dir / name, frames[i]);
    }
}

}  // namespace

TEST_CASE("metrics of an image against itself") {
    testing::TempDir dir("cli_metrics");
    write_image(dir / "a.png", testing::noise_texture(64, 48, 1, 3));
    Run r = cli(dir, "metrics --ref " + q(dir / "a.png") + " --test " + q(dir / "a.png"));
    CHECK(r.code == 0);
    CHECK(r.out.find("ssim 1.000000 psnr 100.00 dB") != std::string::npos);
    CHECK(r.out.find("1.000 ± 0.000 | 100.000 ± 0.000") != std::string::npos);

    r = cli(dir, "--json metrics --ref " + q(dir / "a.png") + " --test " + q(dir / "a.png"));
    REQUIRE(r.code == 0);
    const json j = json::parse(r.out);
    CHECK(j["ssim_mean"] == 1.0);
    CHECK(j["psnr_mean"] == 100.0);
}

TEST_CASE("tile then tile --verify") {
    testing::TempDir dir("cli_tile");
    const Image img = testing::noise_texture(700, 500, 2, 3);
    write_image(dir / "img.png", img);
    Run r = cli(dir, "tile " + q(dir / "img.png") + " --out " + q(dir / "pyr") + " --tile-size 128");
    REQUIRE(r.code == 0);
    r = cli(dir, "tile --verify " + q(dir / "pyr") + " --original " + q(dir / "img.png"));
    CHECK(r.code == 0);
    CHECK(r.out.find("round trip OK") != std::string::npos);

    std::filesystem::remove(dir / "pyr" / "mosaic_files" / "10" / "2_1.png");
    r = cli(dir, "tile --verify " + q(dir / "pyr"));
    CHECK(r.code == exit_code(ErrorKind::CorruptPyramid));
    CHECK(r.err.find("2_1.png") != std::string::npos);
}

TEST_CASE("invalid config key exits with the config-error code") {
    testing::TempDir dir("cli_cfg");
    std::ofstream(dir / "cfg.json") << R"({"stitch": {"batchsize": 30}})";
    std::filesystem::create_directories(dir / "frames");
    const Run r = cli(dir, "--config " + q(dir / "cfg.json") + " run " + q(dir / "frames") + " --out " + q(dir / "o"));
    CHECK(r.code == exit_code(ErrorKind::ConfigError));
    CHECK(r.code == 2);
    CHECK(r.err.find("stitch.batchsize") != std::string::npos);
}

TEST_CASE("failure classes reach the exit status") {
    testing::TempDir dir("cli_codes");
    std::filesystem::create_directories(dir / "empty");
    CHECK(cli(dir, "run " + q(dir / "empty") + " --out " + q(dir / "o")).code == exit_code(ErrorKind::NoFramesFound));
    CHECK(cli(dir, "stitch --batch-size 1 " + q(dir / "empty") + " --out " + q(dir / "o")).code == 2);
    CHECK(cli(dir, "frobnicate").code == 2);
    const Run j = cli(dir, "--json run " + q(dir / "empty") + " --out " + q(dir / "o"));
    const json e = json::parse(j.err.substr(0, j.err.find('\n')));
    CHECK(e["event"] == "error");
    CHECK(e["kind"] == "NoFramesFound");
    CHECK(cli(dir, "--help").code == 0);
}

TEST_CASE("thirty identical frames: the mosaic is the frame") {
    testing::TempDir dir("cli_same");
    const Image frame = testing::noise_texture(320, 240, 4, 3);
    write_numbered(dir / "frames", std::vector<Image>(30, frame));
    const Run r = cli(dir, "run " + q(dir / "frames") + " --out " + q(dir / "o"));
    REQUIRE(r.code == 0);
    CHECK(read_image(dir / "o" / "mosaic.png") == frame);
    CHECK(std::filesystem::exists(dir / "o" / "pyramid" / "mosaic.dzi"));
}

TEST_CASE("stitch and stitch --naive agree on the four-crop fixture") {
    testing::TempDir dir("cli_stitch");
    SweepSpec s;
    s.slide_width = s.slide_height = 1024;
    s.frame_width = 200;
    s.frame_height = 150;
    s.seed = 21;
    const Image slide = render_slide(s);
    const int xs[] = {0, 390, 390, 0}, ys[] = {0, 0, 286, 286};
    std::vector<Image> crops;
    for (int i = 0; i < 4; ++i) crops.push_back(crop(slide, {xs[i], ys[i], 600, 440}));
    write_numbered(dir / "frames", crops);

    REQUIRE(cli(dir, "stitch " + q(dir / "frames") + " --out " + q(dir / "rec")).code == 0);
    REQUIRE(cli(dir, "stitch --naive " + q(dir / "frames") + " --out " + q(dir / "naive")).code == 0);
    const json a = read_json(dir / "rec" / "stitch_manifest.json")["stitch"];
    const json b = read_json(dir / "naive" / "stitch_manifest.json")["stitch"];
    CHECK(b["method"] == "naive");
    REQUIRE(a["frames"].size() == 4);
    REQUIRE(b["frames"].size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        const Transform2D ta = transform_from_json(a["frames"][i]["transform"]);
        const Transform2D tb = transform_from_json(b["frames"][i]["transform"]);
        CHECK(a["frames"][i]["seq_index"] == b["frames"][i]["seq_index"]);
        for (const Point2 p : {Point2{0, 0}, Point2{599, 439}}) {
            const Point2 pa = ta.apply(p), pb = tb.apply(p);
            CHECK(std::hypot(pa.x - pb.x, pa.y - pb.y) < 5);
        }
        const Point2 o = ta.apply(0, 0);
        CHECK(std::hypot(o.x - xs[i], o.y - ys[i]) < 2);
    }
}

TEST_CASE("synth, then run twice: byte-identical manifests") {
    testing::TempDir dir("cli_det");
    REQUIRE(cli(dir, "synth --out " + q(dir / "frames") +
                         " --slide-width 1200 --slide-height 900 --frame-width 400 --frame-height 300"
                         " --stops 4 --columns 2 --pause-frames 5 --travel-frames 3 --seed 5")
                .code == 0);
    CHECK(std::filesystem::exists(dir / "frames" / "ground_truth.json"));
    std::ofstream(dir / "cfg.json") << R"({"extraction": {"min_len": 4}, "seed": 9})";
    const std::string base = "--config " + q(dir / "cfg.json") + " run " + q(dir / "frames");
    REQUIRE(cli(dir, base + " --out " + q(dir / "a") + " --threads 1").code == 0);
    const Run r = cli(dir, base + " --out " + q(dir / "b") + " --threads 2 --json");
    REQUIRE(r.code == 0);
    CHECK(r.err.find("\"stage\":\"stitch\"") != std::string::npos);
    for (const char* f : {"manifest.json", "extraction.json", "stitch_manifest.json", "pyramid/pyramid.json"})
        CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
    CHECK(read_json(dir / "a" / "manifest.json")["config"]["seed"] == 9);
    CHECK(read_json(dir / "a" / "manifest.json")["summary"]["records"] == 4);
}

TEST_CASE("extract, coregister and pairs compose through files") {
    testing::TempDir dir("cli_chain");
    SweepSpec s;
    s.slide_width = 1000;
    s.slide_height = 800;
    s.frame_width = 400;
    s.frame_height = 300;
    s.stops = 4;
    s.columns = 2;
    s.pause_frames = 5;
    s.travel_frames = 3;
    s.seed = 8;
    generate(s, dir / "video");
    write_image(dir / "scan.png", upscale(render_slide(s), 2));
    std::ofstream(dir / "cfg.json") << R"({"extraction": {"min_len": 4}, "coregister": {"scale": 2},
                                           "pairs": {"tile": 96, "stride": 96}})";
    const std::string cfg = "--config " + q(dir / "cfg.json") + " ";
    REQUIRE(cli(dir, cfg + "extract " + q(dir / "video") + " --out " + q(dir / "ex")).code == 0);
    CHECK(list_frames(dir / "ex" / "frames").size() == 4);
    REQUIRE(cli(dir, cfg + "stitch " + q(dir / "ex" / "frames") + " --out " + q(dir / "st")).code == 0);
    REQUIRE(cli(dir, cfg + "coregister --stitched " + q(dir / "st" / "mosaic.png") + " --scan " + q(dir / "scan.png") +
                         " --out " + q(dir / "coreg.json"))
                .code == 0);
    REQUIRE(cli(dir, cfg + "pairs --stitched " + q(dir / "st" / "mosaic.png") + " --scan " + q(dir / "scan.png") +
                         " --coreg " + q(dir / "coreg.json") + " --out " + q(dir / "pairs"))
                .code == 0);
    const json p = read_json(dir / "pairs" / "pairs.json");
    CHECK(p["highq_size"] == 192);
    REQUIRE(p["pairs"].size() > 4);
    const std::string id = p["pairs"][0]["id"];
    CHECK(read_image(dir / "pairs" / "highq" / (id + ".png")).width() == 192);
    const Run m = cli(dir, "metrics --ref " + q(dir / "pairs" / "lowq") + " --test " + q(dir / "pairs" / "lowq"));
    CHECK(m.code == 0);
    CHECK(m.out.find("n=" + std::to_string(p["pairs"].size())) != std::string::npos);
}
