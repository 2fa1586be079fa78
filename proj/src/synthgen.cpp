#include "vid2wsi/synthgen.hpp"

#include "rounding.hpp"

#include "vid2wsi/errors.hpp"
#include "vid2wsi/image_io.hpp"
#include "vid2wsi/registration.hpp"
#include "vid2wsi/warp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace vid2wsi {

void SweepSpec::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::SpecInfeasible, msg); };
    if (frame_width < 32 || frame_height < 32) fail("frames must be at least 32x32");
    if (frame_width > slide_width || frame_height > slide_height)
        fail("frame " + std::to_string(frame_width) + "x" + std::to_string(frame_height) + " is larger than slide " +
             std::to_string(slide_width) + "x" + std::to_string(slide_height));
    if (!(overlap_fraction >= 0.2 && overlap_fraction <= 0.3)) fail("overlap_fraction must lie in [0.2, 0.3]");
    if (pause_frames < 1) fail("pause_frames must be >= 1");
    if (travel_frames < 0) fail("travel_frames must be >= 0");
    if (columns < 0 || stops < 0 || revisits < 0) fail("columns, stops and revisits must be non-negative");
    if (!(brightness_jitter >= 0 && brightness_jitter < 1)) fail("brightness_jitter must lie in [0, 1)");
    if (!(blur_fraction >= 0 && blur_fraction <= 1)) fail("blur_fraction must lie in [0, 1]");
    if (!(blur_sigma >= 0)) fail("blur_sigma must be >= 0");
    if (!(rotation_jitter_deg >= 0 && rotation_jitter_deg <= 10)) fail("rotation_jitter_deg must lie in [0, 10]");
    if (channels != 1 && channels != 3) fail("channels must be 1 or 3");
}

nlohmann::json to_json(const SweepSpec& s) {
    return {{"slide_width", s.slide_width},
            {"slide_height", s.slide_height},
            {"frame_width", s.frame_width},
            {"frame_height", s.frame_height},
            {"overlap_fraction", s.overlap_fraction},
            {"columns", s.columns},
            {"stops", s.stops},
            {"pause_frames", s.pause_frames},
            {"travel_frames", s.travel_frames},
            {"brightness_jitter", s.brightness_jitter},
            {"blur_fraction", s.blur_fraction},
            {"blur_sigma", s.blur_sigma},
            {"rotation_jitter_deg", s.rotation_jitter_deg},
            {"revisits", s.revisits},
            {"channels", s.channels},
            {"seed", s.seed}};
}

SweepSpec sweep_spec_from_json(const nlohmann::json& j) {
    SweepSpec s;
    const nlohmann::json defaults = to_json(s);
    for (const auto& [key, value] : j.items())
        if (!defaults.contains(key)) throw Error(ErrorKind::ConfigError, "unknown sweep key '" + key + "'");
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
        };
        get("slide_width", s.slide_width);
        get("slide_height", s.slide_height);
        get("frame_width", s.frame_width);
        get("frame_height", s.frame_height);
        get("overlap_fraction", s.overlap_fraction);
        get("columns", s.columns);
        get("stops", s.stops);
        get("pause_frames", s.pause_frames);
        get("travel_frames", s.travel_frames);
        get("brightness_jitter", s.brightness_jitter);
        get("blur_fraction", s.blur_fraction);
        get("blur_sigma", s.blur_sigma);
        get("rotation_jitter_deg", s.rotation_jitter_deg);
        get("revisits", s.revisits);
        get("channels", s.channels);
        get("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("bad sweep spec: ") + e.what());
    }
    return s;
}

nlohmann::json to_json(const GroundTruth& gt) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& f : gt.frames)
        frames.push_back({{"index", f.index},
                          {"transform", to_json(f.transform)},
                          {"stop", f.stop},
                          {"pause", f.pause},
                          {"gain", f.gain},
                          {"blur_sigma", f.blur_sigma}});
    nlohmann::json pauses = nlohmann::json::array();
    for (const auto& p : gt.pauses)
        pauses.push_back({{"start", p.start}, {"end", p.end}, {"stop", p.stop}, {"revisit", p.revisit}});
    nlohmann::json stops = nlohmann::json::array();
    for (const auto& s : gt.stops) stops.push_back(to_json(s));
    return {{"spec", to_json(gt.spec)}, {"frames", frames}, {"pauses", pauses}, {"stops", stops}};
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
    GroundTruth gt;
    try {
        gt.spec = sweep_spec_from_json(j.at("spec"));
        for (const auto& f : j.at("frames"))
            gt.frames.push_back({f.at("index").get<std::size_t>(), transform_from_json(f.at("transform")),
                                 f.at("stop").get<int>(), f.at("pause").get<bool>(), f.at("gain").get<double>(),
                                 f.at("blur_sigma").get<double>()});
        for (const auto& p : j.at("pauses"))
            gt.pauses.push_back({p.at("start").get<std::size_t>(), p.at("end").get<std::size_t>(),
                                 p.at("stop").get<int>(), p.at("revisit").get<bool>()});
        for (const auto& s : j.at("stops")) gt.stops.push_back(transform_from_json(s));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("malformed ground truth: ") + e.what());
    }
    return gt;
}

namespace {

using Rng = std::mt19937_64;

// Uniform real in [lo, hi) from raw engine bits, identical on every standard library.
double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0));
}

// Smooth lattice noise in [-1, 1] with lattice spacing `scale`, accumulated into `out`.
void add_value_noise(std::vector<float>& out, int w, int h, double scale, float amplitude, Rng& rng) {
    const int gw = static_cast<int>(w / scale) + 2;
    const int gh = static_cast<int>(h / scale) + 2;
    std::vector<float> lattice(static_cast<std::size_t>(gw) * gh);
    for (auto& v : lattice) v = static_cast<float>(uniform(rng, -1, 1));
    std::vector<int> xi(w);
    std::vector<float> xf(w);
    for (int x = 0; x < w; ++x) {
        const double gx = x / scale;
        xi[x] = static_cast<int>(gx);
        const double f = gx - xi[x];
        xf[x] = static_cast<float>(f * f * (3 - 2 * f));
    }
    for (int y = 0; y < h; ++y) {
        const double gy = y / scale;
        const int yi = static_cast<int>(gy);
        const double fy0 = gy - yi;
        const float fy = static_cast<float>(fy0 * fy0 * (3 - 2 * fy0));
        const float* r0 = &lattice[static_cast<std::size_t>(yi) * gw];
        const float* r1 = r0 + gw;
        float* o = &out[static_cast<std::size_t>(y) * w];
        for (int x = 0; x < w; ++x) {
            const int i = xi[x];
            const float top = r0[i] + (r0[i + 1] - r0[i]) * xf[x];
            const float bot = r1[i] + (r1[i + 1] - r1[i]) * xf[x];
            o[x] += amplitude * (top + (bot - top) * fy);
        }
    }
}

constexpr float kBackgroundRgb[3] = {214, 188, 205};
constexpr float kStromaRgb[3] = {190, 120, 165};
constexpr float kNucleusRgb[3] = {88, 60, 135};
constexpr float kMaxValue = 225;

Image render_rgb_slide(int w, int h, std::uint64_t seed) {
    Rng rng(seed * 0x9e3779b97f4a7c15ULL + 0x51de);
    const std::size_t n = static_cast<std::size_t>(w) * h;

    std::vector<float> density(n, 0.0f);
    add_value_noise(density, w, h, 420, 1.0f, rng);
    std::vector<float> fibre(n, 0.0f);
    const double scales[] = {64, 28, 12, 6, 3};
    const float amps[] = {0.45f, 0.3f, 0.2f, 0.14f, 0.1f};
    for (int k = 0; k < 5; ++k) add_value_noise(fibre, w, h, scales[k], amps[k], rng);

    std::vector<float> rgb(n * 3);
    for (std::size_t i = 0; i < n; ++i) {
        const float d = std::clamp((density[i] + 0.4f) / 0.9f, 0.0f, 1.0f);
        density[i] = d;
        const float m = std::clamp(0.4f + 0.55f * fibre[i], 0.0f, 1.0f) * (0.35f + 0.65f * d);
        for (int c = 0; c < 3; ++c) rgb[i * 3 + c] = kBackgroundRgb[c] * (1 - m) + kStromaRgb[c] * m;
    }

    // Nuclei: soft-edged dark ellipses, denser where the tissue is.
    const std::size_t blobs = n / 420;
    for (std::size_t b = 0; b < blobs; ++b) {
        const double cx = uniform(rng, 0, w), cy = uniform(rng, 0, h);
        const double a = uniform(rng, 3.0, 9.0);
        const double e = a * uniform(rng, 0.55, 1.0);
        const double theta = uniform(rng, 0, M_PI);
        const double alpha = uniform(rng, 0.55, 0.95);
        const double keep = uniform(rng, 0, 1);
        const std::size_t centre = static_cast<std::size_t>(std::min<double>(cy, h - 1)) * w +
                                   static_cast<std::size_t>(std::min<double>(cx, w - 1));
        if (keep > 0.2 + 0.8 * density[centre]) continue;
        const double ct = std::cos(theta), st = std::sin(theta);
        const int x0 = std::max(0, static_cast<int>(cx - a - 2)), x1 = std::min(w - 1, static_cast<int>(cx + a + 2));
        const int y0 = std::max(0, static_cast<int>(cy - a - 2)), y1 = std::min(h - 1, static_cast<int>(cy + a + 2));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double u = (dx * ct + dy * st) / a, v = (-dx * st + dy * ct) / e;
                const double r = std::sqrt(u * u + v * v);
                // About one pixel of soft edge.
                const double cover = std::clamp((1.0 - r) * e + 0.5, 0.0, 1.0) * alpha;
                if (cover <= 0) continue;
                float* p = &rgb[(static_cast<std::size_t>(y) * w + x) * 3];
                for (int c = 0; c < 3; ++c) p[c] = static_cast<float>(p[c] * (1 - cover) + kNucleusRgb[c] * cover);
            }
    }

    Image out(w, h, 3);
    auto data = out.data();
    for (std::size_t i = 0; i < n * 3; ++i)
        data[i] = detail::saturate_u8(std::min(rgb[i], kMaxValue));
    return out;
}

Transform2D pose(double x, double y, double angle_rad, int fw, int fh) {
    if (angle_rad == 0) return Transform2D::translation(x, y);
    const double cx = (fw - 1) / 2.0, cy = (fh - 1) / 2.0;
    return compose(Transform2D::translation(x + cx, y + cy),
                   compose(Transform2D::similarity(1.0, angle_rad, 0, 0), Transform2D::translation(-cx, -cy)));
}

struct Stop {
    double x, y, angle;
};

}  // namespace

Image render_slide(const SweepSpec& spec) {
    spec.validate();
    Image rgb = render_rgb_slide(spec.slide_width, spec.slide_height, spec.seed);
    return spec.channels == 1 ? to_gray(rgb) : rgb;
}

Sweep synthesize(const SweepSpec& spec) {
    spec.validate();
    const int fw = spec.frame_width, fh = spec.frame_height;
    const int step_x = static_cast<int>(std::lround(fw * (1 - spec.overlap_fraction)));
    const int step_y = static_cast<int>(std::lround(fh * (1 - spec.overlap_fraction)));
    // Keep rotated frames inside the slide.
    const double max_angle = spec.rotation_jitter_deg * M_PI / 180.0;
    const int margin = max_angle > 0 ? static_cast<int>(std::ceil(0.5 * std::hypot(fw, fh) * std::sin(max_angle))) + 1 : 0;
    const int usable_w = spec.slide_width - 2 * margin, usable_h = spec.slide_height - 2 * margin;
    if (usable_w < fw || usable_h < fh) throw Error(ErrorKind::SpecInfeasible, "no room for rotated frames");
    const int fit_cols = (usable_w - fw) / step_x + 1;
    const int cols = spec.columns > 0 ? spec.columns : fit_cols;
    if (cols > fit_cols)
        throw Error(ErrorKind::SpecInfeasible, std::to_string(cols) + " columns do not fit; at most " + std::to_string(fit_cols));
    const int rows = (usable_h - fh) / step_y + 1;
    const int stops = spec.stops > 0 ? spec.stops : cols * rows;
    if (stops > cols * rows)
        throw Error(ErrorKind::SpecInfeasible, std::to_string(stops) + " stops exceed the " + std::to_string(cols) + "x" +
                                                   std::to_string(rows) + " grid");
    if (spec.revisits > stops) throw Error(ErrorKind::SpecInfeasible, "more revisits than stops");

    Rng rng(spec.seed);
    std::vector<Stop> plan;
    for (int k = 0; k < stops; ++k) {
        const int r = k / cols;
        const int c = r % 2 == 0 ? k % cols : cols - 1 - k % cols;
        const double angle = max_angle > 0 ? uniform(rng, -max_angle, max_angle) : 0.0;
        plan.push_back({double(margin + c * step_x), double(margin + r * step_y), angle});
    }
    std::vector<bool> revisit(stops, false);
    for (int i = 0; i < spec.revisits; ++i) revisit[static_cast<std::size_t>((i + 1) * stops / (spec.revisits + 1)) % stops] = true;

    Sweep out;
    GroundTruth& gt = out.truth;
    gt.spec = spec;
    for (const auto& s : plan) gt.stops.push_back(pose(s.x, s.y, s.angle, fw, fh));

    auto emit = [&](double x, double y, double angle, int stop, bool pause) {
        FrameTruth f;
        f.index = gt.frames.size();
        f.transform = pose(x, y, angle, fw, fh);
        f.stop = stop;
        f.pause = pause;
        gt.frames.push_back(f);
    };
    auto pause_at = [&](int k, bool again) {
        const std::size_t start = gt.frames.size();
        for (int p = 0; p < spec.pause_frames; ++p) emit(plan[k].x, plan[k].y, plan[k].angle, k, true);
        gt.pauses.push_back({start, gt.frames.size() - 1, k, again});
    };
    auto travel = [&](const Stop& a, const Stop& b) {
        for (int t = 1; t <= spec.travel_frames; ++t) {
            const double f = static_cast<double>(t) / (spec.travel_frames + 1);
            emit(std::round(a.x + (b.x - a.x) * f), std::round(a.y + (b.y - a.y) * f), a.angle + (b.angle - a.angle) * f, -1,
                 false);
        }
    };
    for (int k = 0; k < stops; ++k) {
        if (k > 0) travel(plan[k - 1], plan[k]);
        pause_at(k, false);
        if (revisit[k]) {
            // Short excursion a quarter frame sideways, then back to the same pose.
            Stop away = plan[k];
            away.x += (away.x + fw + fw / 4 <= spec.slide_width - margin) ? fw / 4 : -fw / 4;
            travel(plan[k], away);
            emit(away.x, away.y, away.angle, -1, false);
            travel(away, plan[k]);
            pause_at(k, true);
        }
    }

    // Per-frame photometric draws happen after geometry so they never shift the path.
    for (auto& f : gt.frames) {
        f.gain = spec.brightness_jitter > 0 ? uniform(rng, 1 - spec.brightness_jitter, 1 + spec.brightness_jitter) : 1.0;
        const double u = uniform(rng, 0, 1);
        f.blur_sigma = spec.blur_fraction > 0 && spec.blur_sigma > 0 && u < spec.blur_fraction ? spec.blur_sigma : 0.0;
    }

    const Image slide = render_slide(spec);
    out.frames.reserve(gt.frames.size());
    for (const auto& f : gt.frames) {
        Image img;
        const auto& m = f.transform.matrix();
        if (f.transform.model() == TransformModel::Translation && m[2] == std::floor(m[2]) && m[5] == std::floor(m[5]))
            img = crop(slide, {static_cast<int>(m[2]), static_cast<int>(m[5]), fw, fh});
        else
            img = warp(slide, f.transform.inverse(), {0, 0, fw, fh}).image;
        if (f.blur_sigma > 0) img = gaussian_blur(img, f.blur_sigma);
        if (f.gain != 1.0) img = apply_gain(img, f.gain);
        out.frames.push_back(std::move(img));
    }
    return out;
}

GroundTruth generate(const SweepSpec& spec, const std::filesystem::path& out_dir) {
    Sweep sweep = synthesize(spec);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
    char name[32];
    for (std::size_t i = 0; i < sweep.frames.size(); ++i) {
        std::snprintf(name, sizeof name, "frame_%06zu.png", i + 1);
        write_image(out_dir / name, sweep.frames[i]);
    }
    std::ofstream os(out_dir / "ground_truth.json");
    os << to_json(sweep.truth).dump(2) << '\n';
    if (!os) throw Error(ErrorKind::IoError, "cannot write ground_truth.json in " + out_dir.string());
    return std::move(sweep.truth);
}

}  // namespace vid2wsi
