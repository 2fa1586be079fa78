// Acceptance suite: one PASS/FAIL line per primary criterion, at the stated tolerances.
// Exit status is non-zero when a criterion fails, except for the ones listed in
// kUnattainable, which are still measured and printed as FAIL.

#include "vid2wsi/coregister.hpp"
#include "vid2wsi/errors.hpp"
#include "vid2wsi/frame_extract.hpp"
#include "vid2wsi/image_io.hpp"
#include "vid2wsi/metrics.hpp"
#include "vid2wsi/pipeline.hpp"
#include "vid2wsi/registration.hpp"
#include "vid2wsi/stitcher.hpp"
#include "vid2wsi/synthgen.hpp"
#include "vid2wsi/warp.hpp"
#include "vid2wsi/wsi_output.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace vid2wsi;
namespace fs = std::filesystem;

namespace {

/// Criteria that cannot be met by any implementation; see the README.
const std::map<std::string, std::string> kUnattainable = {
    {"robust_estimation", "translation entries sit on a noise floor of about sigma/sqrt(35) = 0.085 px"},
};

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path g_scratch;

// --- pause-frame extraction ---------------------------------------------

Outcome extraction() {
    Outcome o{true, ""};
    for (int k : {1, 5, 12}) {
        SweepSpec s;
        s.stops = k;
        s.pause_frames = 30;  // one second at the default 30 fps
        s.travel_frames = 10;
        s.brightness_jitter = 0.05;
        s.blur_fraction = 0.2;
        s.seed = 100 + k;
        const fs::path dir = g_scratch / ("extract_" + std::to_string(k));
        const GroundTruth gt = generate(s, dir);
        const auto start = Clock::now();
        const ExtractionResult r = extract_frames(dir, ExtractionParams{});
        const double secs = seconds_since(start);
        std::size_t exact = 0;
        for (std::size_t i = 0; i < std::min(r.records.size(), gt.pauses.size()); ++i)
            exact += r.records[i].source_first == gt.pauses[i].start && r.records[i].source_last == gt.pauses[i].end;
        const std::size_t false_segments = r.records.size() > exact ? r.records.size() - exact : 0;
        const bool ok = gt.pauses.size() == static_cast<std::size_t>(k) && r.records.size() == gt.pauses.size() &&
                        exact == gt.pauses.size() && secs < 30;
        o.pass = o.pass && ok;
        o.detail += fmt("%sK=%d: %zu records, %zu exact, %zu false, %.1f s", k == 1 ? "" : "; ", k, r.records.size(),
                        exact, false_segments, secs);
    }
    return o;
}

// --- de-duplication -------------------------------------------------------

/// ZNCC from the definition, on unrounded BT.601 luma.
double ncc_oracle(const Image& a, const Image& b) {
    const auto luma = [](const Image& img, int x, int y) {
        if (img.channels() == 1) return double(img.at(x, y));
        return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    };
    const double n = double(a.width()) * a.height();
    double ma = 0, mb = 0;
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x) {
            ma += luma(a, x, y);
            mb += luma(b, x, y);
        }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x) {
            const double da = luma(a, x, y) - ma, db = luma(b, x, y) - mb;
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
    return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0;
}

Outcome deduplication() {
    const double threshold = ExtractionParams{}.dedup_threshold;
    Outcome o{true, ""};
    for (int revisits : {3, 0}) {
        SweepSpec s;
        s.stops = 6;
        s.columns = 3;
        s.revisits = revisits;
        s.pause_frames = 30;
        s.travel_frames = 10;
        s.brightness_jitter = 0.05;
        s.blur_fraction = 0.2;
        s.seed = 200 + revisits;
        const fs::path dir = g_scratch / ("dedup_" + std::to_string(revisits));
        const GroundTruth gt = generate(s, dir);
        const ExtractionResult r = extract_frames(dir, ExtractionParams{});
        const auto files = list_frames(dir);

        // Every kept record must be a first visit, every dropped frame a revisit.
        std::set<std::size_t> first_visits, revisit_pauses;
        for (std::size_t k = 0; k < gt.pauses.size(); ++k) (gt.pauses[k].revisit ? revisit_pauses : first_visits).insert(k);
        const auto pause_of = [&](std::size_t frame) -> long {
            for (std::size_t k = 0; k < gt.pauses.size(); ++k)
                if (frame >= gt.pauses[k].start && frame <= gt.pauses[k].end) return long(k);
            return -1;
        };
        bool ok = r.records.size() == first_visits.size();
        for (const auto& rec : r.records) ok = ok && first_visits.count(pause_of(rec.source_index));
        const auto& dropped = r.log["deduplicated"];
        ok = ok && dropped.size() == static_cast<std::size_t>(revisits);

        // NCC oracle: dropped frames reach the threshold against the frame they duplicate,
        // consecutive kept frames stay below it.
        double min_dup = 1, max_kept = -1;
        for (const auto& d : dropped) {
            ok = ok && revisit_pauses.count(pause_of(d["dropped_source_index"]));
            const double v = ncc_oracle(read_image(files[d["dropped_source_index"].get<std::size_t>()]),
                                        read_image(files[d["duplicate_of"].get<std::size_t>()]));
            min_dup = std::min(min_dup, v);
        }
        for (std::size_t i = 1; i < r.records.size(); ++i)
            max_kept = std::max(max_kept, ncc_oracle(r.records[i - 1].image, r.records[i].image));
        ok = ok && (dropped.empty() || min_dup >= threshold) && max_kept < threshold;
        o.pass = o.pass && ok;
        o.detail += fmt("%s%d revisits: %zu pauses -> %zu kept, %zu removed, oracle NCC dup>=%.4f kept<=%.4f",
                        revisits ? "" : "; ", revisits, gt.pauses.size(), r.records.size(), dropped.size(),
                        dropped.empty() ? 1.0 : min_dup, max_kept);
    }
    return o;
}

// --- robust estimation ----------------------------------------------------

Outcome robust_estimation() {
    const Transform2D truth = Transform2D::affine(1.02, 0.01, 40, -0.01, 0.99, 12);
    int successes = 0, linear_ok = 0, inliers_ok = 0;
    double worst = 0, worst_linear = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        std::mt19937_64 rng(1000 + trial);
        std::uniform_real_distribution<double> pos(0, 1000);
        std::normal_distribution<double> noise(0, 0.5);
        std::vector<Point2> src, dst;
        for (int i = 0; i < 35; ++i) {
            const Point2 p{pos(rng), pos(rng)}, q = truth.apply(p);
            src.push_back(p);
            dst.push_back({q.x + noise(rng), q.y + noise(rng)});
        }
        for (int i = 0; i < 15; ++i) {
            src.push_back({pos(rng), pos(rng)});
            dst.push_back({pos(rng) * 1.1, pos(rng) * 1.1});
        }
        RansacParams params;
        params.seed = trial;
        const auto r = estimate_from_points(src, dst, TransformModel::Affine, params);
        const double d = max_abs_diff(r.transform, truth);
        double lin = 0;
        for (int i : {0, 1, 3, 4}) lin = std::max(lin, std::abs(r.transform.matrix()[i] - truth.matrix()[i]));
        successes += d <= 1e-2;
        linear_ok += lin <= 1e-2;
        inliers_ok += r.inliers >= 33 && r.inliers <= 37;
        worst = std::max(worst, d);
        worst_linear = std::max(worst_linear, lin);
    }
    return {successes >= 99,
            fmt("%d/100 within 1e-2 elementwise (worst %.3f); linear part %d/100 (worst %.4f); inliers in [33,37] %d/100",
                successes, worst, linear_ok, worst_linear, inliers_ok)};
}

// --- stitching ------------------------------------------------------------

struct StitchFixture {
    Sweep sweep;
    std::vector<FrameRecord> frames;
};

const StitchFixture& stitch_fixture() {
    static const StitchFixture f = [] {
        SweepSpec s;  // 4000x3000 slide, 640x480 frames, 30% overlap
        s.columns = 8;
        s.stops = 60;
        s.pause_frames = 1;
        s.travel_frames = 0;
        s.brightness_jitter = 0.1;
        s.blur_fraction = 0.2;
        s.blur_sigma = 1.5;
        s.seed = 7;
        StitchFixture out;
        out.sweep = synthesize(s);
        for (std::size_t i = 0; i < out.sweep.frames.size(); ++i) {
            FrameRecord r;
            r.image = out.sweep.frames[i];
            r.seq_index = r.source_first = r.source_last = r.source_index = i;
            out.frames.push_back(std::move(r));
        }
        return out;
    }();
    return f;
}

struct Timed {
    StitchOutput out;
    double seconds = 0;
};

Timed best_of_two(bool naive) {
    const auto& f = stitch_fixture();
    StitchPlan plan;
    Timed best;
    for (int run = 0; run < 2; ++run) {
        const auto start = Clock::now();
        StitchOutput o = naive ? stitch_naive(f.frames, plan) : stitch_recursive(f.frames, plan);
        const double secs = seconds_since(start);
        if (run == 0 || secs < best.seconds) best = {std::move(o), secs};
    }
    return best;
}

const Timed& recursive_run() {
    static const Timed t = best_of_two(false);
    return t;
}

Outcome stitching_accuracy() {
    const auto& f = stitch_fixture();
    const auto& m = recursive_run().out.manifest;
    const auto& truth = f.sweep.truth.frames;
    const Point2 centre{(f.frames[0].image.width() - 1) / 2.0, (f.frames[0].image.height() - 1) / 2.0};
    double sum = 0, worst = 0;
    for (const auto& mem : m.transforms) {
        const Point2 p = truth[0].transform.apply(mem.transform.apply(centre));
        const Point2 t = truth[mem.seq_index].transform.apply(centre);
        const double e = std::hypot(p.x - t.x, p.y - t.y);
        sum += e;
        worst = std::max(worst, e);
    }
    const double mean = m.transforms.empty() ? 1e9 : sum / m.transforms.size();
    const bool all = m.transforms.size() == f.frames.size() && m.dropped.empty();
    return {all && mean < 3 && worst < 8,
            fmt("%zu/%zu placed, frame-centre error mean %.3f px, max %.3f px", m.transforms.size(), f.frames.size(),
                mean, worst)};
}

Outcome recursive_speedup() {
    const Timed& rec = recursive_run();
    const Timed naive = best_of_two(true);
    const auto& a = rec.out.manifest;
    const auto& b = naive.out.manifest;
    std::map<std::size_t, Transform2D> nb;
    for (const auto& mem : b.transforms) nb[mem.seq_index] = mem.transform;
    const auto& frame = stitch_fixture().frames[0].image;
    double worst = 0;
    std::size_t compared = 0;
    for (const auto& mem : a.transforms) {
        const auto it = nb.find(mem.seq_index);
        if (it == nb.end()) continue;
        ++compared;
        for (const Point2 p : {Point2{0, 0}, Point2{(frame.width() - 1) / 2.0, (frame.height() - 1) / 2.0}}) {
            const Point2 pa = mem.transform.apply(p), pb = it->second.apply(p);
            worst = std::max(worst, std::hypot(pa.x - pb.x, pa.y - pb.y));
        }
    }
    const double ratio = naive.seconds / rec.seconds;
    const bool ok = a.registration_calls <= 61 && b.registration_calls == 1770 && ratio >= 5 &&
                    compared == a.transforms.size() && compared == 60 && worst < 5;
    return {ok, fmt("calls recursive %zu (<=61), naive %zu (==1770); wall clock %.2f s vs %.2f s = %.1fx (>=5x); "
                    "max translation disagreement %.3f px over %zu frames",
                    a.registration_calls, b.registration_calls, rec.seconds, naive.seconds, ratio, worst, compared)};
}

// --- co-registration ------------------------------------------------------

Outcome coregistration() {
    constexpr int kScale = 4, kMargin = 96, kW = 1600, kH = 1280, kTile = 64;
    SweepSpec s;
    s.slide_width = kW + 2 * kMargin;
    s.slide_height = kH + 2 * kMargin;
    s.frame_width = 640;
    s.frame_height = 480;
    s.channels = 1;
    s.seed = 31;
    const Image slide = render_slide(s);
    // The scan sees the slide through a small affine and at 4x the resolution.
    const Transform2D a = Transform2D::affine(1.008, 0.015, -20, -0.012, 0.994, 15);
    const Image scan = upscale(warp(slide, a, {0, 0, slide.width(), slide.height()}).image, kScale);
    const Image stitched = crop(slide, {kMargin, kMargin, kW, kH});
    const double o = (kScale - 1) / 2.0;
    const Transform2D truth =
        compose(Transform2D::affine(kScale, 0, o, 0, kScale, o), compose(a, Transform2D::translation(kMargin, kMargin)));

    const CoregResult r = coregister(stitched, scan, kScale);
    const double rel = max_rel_diff(r.transform, truth);

    PairParams p;
    p.tile = p.stride = kTile;
    p.scale = kScale;
    const auto pairs = extract_pairs(stitched, scan, r, p);
    std::size_t violations = 0, train = 0, val = 0;
    for (const auto& t : pairs) {
        violations += t.lowq.width() != kTile || t.lowq.height() != kTile || t.highq.width() != kScale * kTile ||
                      t.highq.height() != kScale * kTile || t.lowq.channels() != t.highq.channels();
        train += t.split == Split::Train;
        val += t.split == Split::Val;
    }
    const double n = double(pairs.size());
    const double ftrain = train / n, fval = val / n;
    const bool ok = rel < 0.005 && violations == 0 && pairs.size() >= 500 && std::abs(ftrain - 0.75) <= 0.02 &&
                    std::abs(fval - 0.25) <= 0.02;
    return {ok, fmt("max relative elementwise error %.5f (<0.005); %zu pairs, %zu shape violations; "
                    "split %.4f/%.4f vs 0.75/0.25",
                    rel, pairs.size(), violations, ftrain, fval)};
}

// --- metrics --------------------------------------------------------------

double ssim_direct(const Image& a, const Image& b) {
    double g[11][11], gs = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) gs += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
    const double c1 = 6.5025, c2 = 58.5225;
    double total = 0;
    int count = 0;
    for (int y = 0; y + 11 <= a.height(); ++y)
        for (int x = 0; x + 11 <= a.width(); ++x) {
            double mx = 0, my = 0, vx = 0, vy = 0, cxy = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    mx += g[i][j] / gs * a.at(x + j, y + i);
                    my += g[i][j] / gs * b.at(x + j, y + i);
                }
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const double dx = a.at(x + j, y + i) - mx, dy = b.at(x + j, y + i) - my;
                    vx += g[i][j] / gs * dx * dx;
                    vy += g[i][j] / gs * dy * dy;
                    cxy += g[i][j] / gs * dx * dy;
                }
            total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return total / count;
}

Outcome metric_oracles() {
    std::mt19937 rng(2024);
    std::uniform_int_distribution<int> px(0, 255);
    std::normal_distribution<double> noise(0, 20);
    double worst_ssim = 0;
    for (int k = 0; k < 10; ++k) {
        Image a(64, 64, 1), b(64, 64, 1);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) a.at(x, y) = std::uint8_t(px(rng));
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                b.at(x, y) = k % 2 ? std::uint8_t(px(rng))
                                   : std::uint8_t(std::clamp(std::lround(a.at(x, y) + noise(rng)), 0L, 255L));
        worst_ssim = std::max(worst_ssim, std::abs(ssim(a, b) - ssim_direct(a, b)));
    }
    // Offset +10 without clipping: every pixel of a in [30, 220].
    Image a(80, 60, 1);
    for (int y = 0; y < 60; ++y)
        for (int x = 0; x < 80; ++x) a.at(x, y) = std::uint8_t(30 + (x * 7 + y * 13) % 191);
    const double p = psnr(a, add_constant(a, 10));
    const double self = ssim(a, a);

    // The non-bold rows of the paper's Table 2, regenerated from their numbers.
    struct Row {
        const char* label;
        double s, ss, p, ps;
        const char* latex;
    };
    const Row rows[] = {
        {"#1", 0.361, 0.033, 11.078, 1.079, "\\#1 & 0.361 $\\pm$ 0.033 & 11.078 $\\pm$ 1.079\\\\"},
        {"#2", 0.363, 0.034, 11.144, 1.546, "\\#2 & 0.363 $\\pm$ 0.034 & 11.144 $\\pm$ 1.546\\\\"},
        {"#3", 0.362, 0.039, 11.090, 1.445, "\\#3 & 0.362 $\\pm$ 0.039 & 11.090 $\\pm$ 1.445\\\\"},
        {"#4", 0.376, 0.044, 11.619, 1.604, "\\#4 & 0.376 $\\pm$ 0.044 & 11.619 $\\pm$ 1.604\\\\"},
        {"#6", 0.319, 0.064, 10.587, 1.431, "\\#6 & 0.319 $\\pm$ 0.064 & 10.587 $\\pm$ 1.431\\\\"},
        {"#7", 0.424, 0.041, 11.167, 1.450, "\\#7 & 0.424 $\\pm$ 0.041 & 11.167 $\\pm$ 1.450\\\\"},
    };
    int exact = 0;
    for (const auto& r : rows) {
        MetricsReport m;
        m.ssim_mean = r.s;
        m.ssim_std = r.ss;
        m.psnr_mean = r.p;
        m.psnr_std = r.ps;
        exact += format_latex_row(r.label, m) == r.latex;
    }
    MetricsReport five;
    five.ssim_mean = 0.317;
    five.ssim_std = 0.054;
    five.psnr_mean = 10.733;
    five.psnr_std = 1.221;
    const std::string table = format_table({{"#5", five}});
    const bool row5 = table.find("0.317 ± 0.054 | 10.733 ± 1.221") != std::string::npos;

    const bool ok = worst_ssim < 1e-6 && std::abs(p - 28.1308) <= 1e-3 && std::abs(self - 1) < 1e-9 && exact == 6 && row5;
    return {ok, fmt("SSIM vs direct formula max diff %.2e (<1e-6) on 10 pairs; PSNR offset 10 = %.4f dB; "
                    "SSIM(a,a)-1 = %.1e; Table 2 rows byte-identical %d/6, #5 row shape %s",
                    worst_ssim, p, self - 1, exact, row5 ? "ok" : "wrong")};
}

// --- pyramid --------------------------------------------------------------

Outcome pyramid_round_trip() {
    bool ok = true;
    std::string detail;
    struct Case {
        int w, h, tile;
    };
    for (const Case c : {Case{1000, 600, 256}, Case{256, 256, 256}, Case{777, 333, 100}}) {
        Image img(c.w, c.h, 3);
        std::mt19937 rng(c.w * 31 + c.h);
        for (auto& v : img.data()) v = std::uint8_t(rng() % 256);
        const fs::path dir = g_scratch / fmt("pyramid_%dx%d", c.w, c.h);
        PyramidParams p;
        p.tile_size = c.tile;
        const TilePyramid pyr = build_pyramid(img, dir, p);
        const bool base = reassemble(dir, pyr.level_count() - 1) == img;
        // Expected counts from the ceiling arithmetic alone, compared with files on disk.
        int levels = 1;
        while ((1 << levels) <= std::max(c.w, c.h)) ++levels;  // floor(log2(max)) + 1
        int top = 0;  // deep-zoom number of the full-size level, ceil(log2(max))
        while ((1 << top) < std::max(c.w, c.h)) ++top;
        bool counts = pyr.level_count() == levels;
        std::size_t total = 0;
        for (int l = 0; l < levels; ++l) {
            const int f = 1 << (levels - 1 - l);
            const int w = (c.w + f - 1) / f, h = (c.h + f - 1) / f;
            const std::size_t expect = std::size_t((w + c.tile - 1) / c.tile) * ((h + c.tile - 1) / c.tile);
            std::size_t found = 0;
            for (const auto& e : fs::directory_iterator(dir / "mosaic_files" / std::to_string(top - (levels - 1 - l)))) found += e.is_regular_file();
            counts = counts && found == expect;
            total += found;
        }
        ok = ok && base && counts;
        detail += fmt("%s%dx%d: %d levels, %zu tiles, base %s, counts %s", detail.empty() ? "" : "; ", c.w, c.h,
                      pyr.level_count(), total, base ? "identical" : "DIFFERENT", counts ? "match" : "MISMATCH");
    }
    return {ok, detail};
}

// --- determinism ----------------------------------------------------------

std::map<std::string, std::string> json_files(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().extension() == ".json")
            out[fs::relative(e.path(), root).string()] = slurp(e.path());
    return out;
}

Outcome determinism() {
    SweepSpec s;
    s.slide_width = 1400;
    s.slide_height = 1000;
    s.frame_width = 480;
    s.frame_height = 360;
    s.columns = 3;
    s.stops = 6;
    s.pause_frames = 30;
    s.travel_frames = 10;
    s.brightness_jitter = 0.05;
    s.seed = 41;
    const fs::path dir = g_scratch / "determinism";
    generate(s, dir / "frames");
    write_image(dir / "scan.png", upscale(render_slide(s), 2));
    PipelineConfig config;
    config.seed = 1234;
    config.scan_scale = 2;
    config.pairs.tile = config.pairs.stride = 128;
    RunOptions a, b;
    a.scan = b.scan = dir / "scan.png";
    a.threads = 1;
    b.threads = 2;
    run_pipeline(dir / "frames", dir / "run1", config, a);
    run_pipeline(dir / "frames", dir / "run2", config, b);
    const auto x = json_files(dir / "run1"), y = json_files(dir / "run2");
    std::size_t same = 0;
    for (const auto& [name, body] : x) {
        const auto it = y.find(name);
        same += it != y.end() && it->second == body;
    }
    const bool mosaic = slurp(dir / "run1" / "mosaic.png") == slurp(dir / "run2" / "mosaic.png");
    return {x.size() == y.size() && same == x.size() && x.size() >= 6 && mosaic,
            fmt("%zu/%zu manifests byte-identical (threads 1 vs 2, scan included), mosaic %s", same, x.size(),
                mosaic ? "identical" : "DIFFERENT")};
}

}  // namespace

int main() {
    g_scratch = fs::temp_directory_path() / ("vid2wsi_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(g_scratch);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"pause_frame_extraction", extraction},
        {"deduplication", deduplication},
        {"robust_estimation", robust_estimation},
        {"stitching_accuracy", stitching_accuracy},
        {"recursive_speedup", recursive_speedup},
        {"coregistration", coregistration},
        {"metric_oracles", metric_oracles},
        {"pyramid_round_trip", pyramid_round_trip},
        {"determinism", determinism},
    };

    int unexpected = 0, failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const auto known = kUnattainable.find(name);
        std::string note;
        if (!o.pass) {
            ++failed;
            if (known == kUnattainable.end()) ++unexpected;
            else note = " [unattainable: " + known->second + "]";
        }
        std::printf("%s %s: %s%s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), note.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu criteria, %zu passed, %d failed (%d unexpected)\n", criteria.size(), criteria.size() - failed,
                failed, unexpected);

    std::error_code ec;
    fs::remove_all(g_scratch, ec);
    return unexpected == 0 ? 0 : 1;
}
