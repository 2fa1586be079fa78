#include "vid2wsi/frame_extract.hpp"

#include "vid2wsi/errors.hpp"
#include "vid2wsi/image_io.hpp"
#include "vid2wsi/parallel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <tuple>

namespace vid2wsi {

namespace {

struct Candidate {
    int dx = 0;
    int dy = 0;
    double ncc = -2;
};

// Higher NCC wins; ties go to the smaller displacement, then lower (dy, dx).
bool better(const Candidate& c, const Candidate& best) {
    if (c.ncc != best.ncc) return c.ncc > best.ncc;
    const int mc = c.dx * c.dx + c.dy * c.dy;
    const int mb = best.dx * best.dx + best.dy * best.dy;
    if (mc != mb) return mc < mb;
    return std::tie(c.dy, c.dx) < std::tie(best.dy, best.dx);
}

struct BlockStats {
    std::int64_t sum = 0;
    std::int64_t sum_sq = 0;
};

BlockStats block_stats(const Image& img, int x0, int y0, int size) {
    BlockStats s;
    for (int y = y0; y < y0 + size; ++y) {
        const auto r = img.row(y);
        for (int x = x0; x < x0 + size; ++x) {
            s.sum += r[x];
            s.sum_sq += r[x] * r[x];
        }
    }
    return s;
}

double block_ncc(const Image& a, const Image& b, int ax, int ay, int bx, int by, int size, const BlockStats& sa) {
    std::int64_t sab = 0;
    std::int64_t sb = 0;
    std::int64_t sb2 = 0;
    for (int y = 0; y < size; ++y) {
        const std::uint8_t* ra = a.row(ay + y).data() + ax;
        const std::uint8_t* rb = b.row(by + y).data() + bx;
        std::int32_t ab = 0, s1 = 0, s2 = 0;
        for (int x = 0; x < size; ++x) {
            const std::int32_t vb = rb[x];
            ab += ra[x] * vb;
            s1 += vb;
            s2 += vb * vb;
        }
        sab += ab;
        sb += s1;
        sb2 += s2;
    }
    const double n = static_cast<double>(size) * size;
    const double va = n * static_cast<double>(sa.sum_sq) - static_cast<double>(sa.sum) * sa.sum;
    const double vb = n * static_cast<double>(sb2) - static_cast<double>(sb) * sb;
    if (va <= 0 || vb <= 0) return 0;
    return (n * static_cast<double>(sab) - static_cast<double>(sa.sum) * sb) / std::sqrt(va * vb);
}

Candidate search(const Image& a, const Image& b, int ax, int ay, int size, int dx_lo, int dx_hi, int dy_lo,
                 int dy_hi) {
    const BlockStats sa = block_stats(a, ax, ay, size);
    dx_lo = std::max(dx_lo, -ax);
    dy_lo = std::max(dy_lo, -ay);
    dx_hi = std::min(dx_hi, b.width() - size - ax);
    dy_hi = std::min(dy_hi, b.height() - size - ay);
    Candidate best;
    for (int dy = dy_lo; dy <= dy_hi; ++dy)
        for (int dx = dx_lo; dx <= dx_hi; ++dx) {
            const Candidate c{dx, dy, block_ncc(a, b, ax, ay, ax + dx, ay + dy, size, sa)};
            if (better(c, best)) best = c;
        }
    return best;
}

struct Pyramid {
    Image full;
    Image half;
};

Pyramid make_pyramid(const Image& img) {
    Pyramid p{to_gray(img), {}};
    p.half = downsample2x(p.full);
    return p;
}

std::vector<BlockVector> match_blocks(const Pyramid& a, const Pyramid& b, const BlockMatchParams& params) {
    const int w = a.full.width();
    const int h = a.full.height();
    const int size = params.block;
    const int radius = std::min({params.radius, (w - size) / 2, (h - size) / 2});
    std::vector<BlockVector> out;
    if (size < 4 || radius < 0 || params.grid_stride < 1) return out;

    const bool coarse = size >= 16 && radius >= 2;
    const double min_var = params.min_block_std * params.min_block_std;
    for (int by = radius; by + size + radius <= h; by += params.grid_stride) {
        for (int bx = radius; bx + size + radius <= w; bx += params.grid_stride) {
            const BlockStats st = block_stats(a.full, bx, by, size);
            const double n = static_cast<double>(size) * size;
            const double mean = st.sum / n;
            if (st.sum_sq / n - mean * mean < min_var) continue;

            Candidate best;
            if (coarse) {
                const int rc = (radius + 1) / 2;
                const Candidate c = search(a.half, b.half, bx / 2, by / 2, size / 2, -rc, rc, -rc, rc);
                best = search(a.full, b.full, bx, by, size, std::max(-radius, 2 * c.dx - 1),
                              std::min(radius, 2 * c.dx + 1), std::max(-radius, 2 * c.dy - 1),
                              std::min(radius, 2 * c.dy + 1));
            } else {
                best = search(a.full, b.full, bx, by, size, -radius, radius, -radius, radius);
            }
            out.push_back({bx, by, best.dx, best.dy, best.ncc});
        }
    }
    return out;
}

double mean_magnitude(const std::vector<BlockVector>& v) {
    double s = 0;
    for (const auto& b : v) s += std::hypot(b.dx, b.dy);
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

MotionScore motion_from_pyramids(const Pyramid& a, const Pyramid& b, const BlockMatchParams& params) {
    const auto fwd = match_blocks(a, b, params);
    const auto bwd = match_blocks(b, a, params);
    MotionScore m;
    m.blocks = static_cast<int>(std::min(fwd.size(), bwd.size()));
    if (fwd.empty() || bwd.empty()) {
        m.low_texture = true;
        return m;
    }
    m.value = 0.5 * (mean_magnitude(fwd) + mean_magnitude(bwd));
    return m;
}

void check_same_dims(const Image& a, const Image& b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw Error(ErrorKind::DimensionMismatch,
                    "frames differ in size: " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                        " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
}

}  // namespace

std::vector<BlockVector> block_motion(const Image& a, const Image& b, const BlockMatchParams& params) {
    check_same_dims(a, b);
    return match_blocks(make_pyramid(a), make_pyramid(b), params);
}

MotionScore motion_between(const Image& a, const Image& b, const BlockMatchParams& params) {
    check_same_dims(a, b);
    return motion_from_pyramids(make_pyramid(a), make_pyramid(b), params);
}

std::vector<PauseSegment> segment_from_scores(std::span<const double> pair_motion, std::span<const double> focus,
                                              double motion_threshold, std::size_t min_len) {
    if (motion_threshold <= 0) throw Error(ErrorKind::InvalidArgument, "motion threshold must be positive");
    if (focus.size() != pair_motion.size() + 1)
        throw Error(ErrorKind::InvalidArgument, "need one focus value per frame");
    std::vector<PauseSegment> out;
    std::size_t i = 0;
    while (i < pair_motion.size()) {
        if (pair_motion[i] >= motion_threshold) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < pair_motion.size() && pair_motion[j + 1] < motion_threshold) ++j;
        PauseSegment seg{i, j + 1, i};
        if (seg.length() >= min_len) {
            for (std::size_t k = seg.start_idx; k <= seg.end_idx; ++k)
                if (focus[k] > focus[seg.representative_idx]) seg.representative_idx = k;
            out.push_back(seg);
        }
        i = j + 1;
    }
    return out;
}

std::vector<PauseSegment> segment_pauses(std::span<const Image> frames, double motion_threshold, std::size_t min_len,
                                         const BlockMatchParams& params) {
    if (frames.size() < 2) return {};
    std::vector<Pyramid> pyr;
    pyr.reserve(frames.size());
    std::vector<double> focus;
    for (const auto& f : frames) {
        if (!pyr.empty()) check_same_dims(pyr.front().full, f);
        pyr.push_back(make_pyramid(f));
        focus.push_back(focus_score(pyr.back().full).value);
    }
    std::vector<double> motion(frames.size() - 1);
    for (std::size_t i = 0; i + 1 < frames.size(); ++i)
        motion[i] = motion_from_pyramids(pyr[i], pyr[i + 1], params).value;
    return segment_from_scores(motion, focus, motion_threshold, min_len);
}

double zncc(const Image& a, const Image& b) {
    check_same_dims(a, b);
    const Image ga = to_gray(a);
    const Image gb = to_gray(b);
    const auto da = ga.data();
    const auto db = gb.data();
    std::int64_t sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const std::int64_t x = da[i];
        const std::int64_t y = db[i];
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
    }
    const double n = static_cast<double>(da.size());
    const double va = n * static_cast<double>(saa) - static_cast<double>(sa) * sa;
    const double vb = n * static_cast<double>(sbb) - static_cast<double>(sb) * sb;
    if (va <= 0 || vb <= 0) return 0;
    return (n * static_cast<double>(sab) - static_cast<double>(sa) * sb) / std::sqrt(va * vb);
}

std::vector<FrameRecord> deduplicate(std::vector<FrameRecord> records, double sim_threshold) {
    if (!(sim_threshold > 0 && sim_threshold <= 1))
        throw Error(ErrorKind::InvalidArgument, "similarity threshold must lie in (0, 1]");
    std::vector<FrameRecord> kept;
    kept.reserve(records.size());
    for (auto& r : records) {
        if (!kept.empty() && kept.back().image.width() == r.image.width() &&
            kept.back().image.height() == r.image.height() && zncc(kept.back().image, r.image) >= sim_threshold)
            continue;
        kept.push_back(std::move(r));
    }
    for (std::size_t i = 0; i < kept.size(); ++i) kept[i].seq_index = i;
    return kept;
}

std::size_t ExtractionParams::effective_min_len() const {
    if (min_len) return *min_len;
    return static_cast<std::size_t>(std::ceil(0.5 * fps));
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error(ErrorKind::NoFramesFound, "not a directory: " + dir.string());
    std::vector<std::tuple<long long, std::string, fs::path>> found;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") continue;
        const std::string stem = entry.path().stem().string();
        std::size_t end = stem.size();
        while (end > 0 && !std::isdigit(static_cast<unsigned char>(stem[end - 1]))) --end;
        std::size_t begin = end;
        while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
        const long long number = begin < end ? std::stoll(stem.substr(begin, end - begin)) : -1;
        found.emplace_back(number, entry.path().filename().string(), entry.path());
    }
    std::sort(found.begin(), found.end());
    std::vector<fs::path> out;
    for (auto& f : found) out.push_back(std::get<2>(f));
    return out;
}

namespace {

struct PairScore {
    std::size_t first = 0;
    std::size_t second = 0;
    MotionScore motion;
    double per_frame = 0;
};

class FrameSource {
public:
    explicit FrameSource(std::vector<std::filesystem::path> paths) : paths_(std::move(paths)) {}

    std::size_t size() const { return paths_.size(); }
    const std::filesystem::path& path(std::size_t i) const { return paths_[i]; }

    Pyramid load(std::size_t i) const {
        Image img = read_image(paths_[i]);
        if (img.width() != dims_->first || img.height() != dims_->second)
            throw Error(ErrorKind::InconsistentDimensions,
                        paths_[i].filename().string() + " is " + std::to_string(img.width()) + "x" +
                            std::to_string(img.height()) + ", expected " + std::to_string(dims_->first) + "x" +
                            std::to_string(dims_->second));
        return make_pyramid(img);
    }

    void set_dims(int w, int h) { dims_ = std::pair{w, h}; }

private:
    std::vector<std::filesystem::path> paths_;
    std::optional<std::pair<int, int>> dims_;
};

}  // namespace

ExtractionResult extract_frames(const std::filesystem::path& frame_dir, const ExtractionParams& params) {
    if (params.stride < 1) throw Error(ErrorKind::InvalidArgument, "frame stride must be >= 1");
    if (params.motion_threshold <= 0) throw Error(ErrorKind::InvalidArgument, "motion threshold must be positive");

    FrameSource source(list_frames(frame_dir));
    const std::size_t n = source.size();
    if (n < 2)
        throw Error(ErrorKind::NoFramesFound,
                    "need at least 2 numbered frames in " + frame_dir.string() + ", found " + std::to_string(n));
    {
        const Image first = read_image(source.path(0));
        source.set_dims(first.width(), first.height());
    }

    const std::size_t stride = params.stride;
    const double threshold = params.motion_threshold;

    // Strided pairs (i, min(i + stride, n - 1)) with i a multiple of the stride.
    std::vector<PairScore> pairs;
    for (std::size_t i = 0; i + 1 < n; i += stride) pairs.push_back({i, std::min(i + stride, n - 1), {}, 0});

    // Frames are processed in chunks so memory stays bounded by the chunk, not the clip.
    std::vector<double> focus(n, 0.0);
    const std::size_t chunk = stride * std::max<std::size_t>(1, 64 / stride);
    std::optional<Pyramid> carry;
    for (std::size_t c0 = 0; c0 < n; c0 += chunk) {
        const std::size_t c1 = std::min(n - 1, c0 + chunk);  // inclusive
        std::vector<Pyramid> frames(c1 - c0 + 1);
        const std::size_t load_from = carry ? 1 : 0;
        if (carry) frames[0] = std::move(*carry);
        parallel_for(frames.size() - load_from, params.threads, [&](std::size_t k) {
            const std::size_t idx = c0 + load_from + k;
            frames[load_from + k] = source.load(idx);
            focus[idx] = focus_score(frames[load_from + k].full).value;
        });
        if (c0 == 0) focus[0] = focus_score(frames[0].full).value;

        std::vector<std::size_t> in_chunk;
        for (std::size_t p = c0 / stride; p < pairs.size() && pairs[p].first < c1; ++p) in_chunk.push_back(p);
        parallel_for(in_chunk.size(), params.threads, [&](std::size_t k) {
            auto& pr = pairs[in_chunk[k]];
            pr.motion = motion_from_pyramids(frames[pr.first - c0], frames[pr.second - c0], params.block);
            pr.per_frame = pr.motion.value / static_cast<double>(pr.second - pr.first);
        });
        if (c1 == n - 1) break;
        carry = std::move(frames.back());
    }

    // Runs of still strided pairs.
    struct Run {
        std::size_t start, end;
    };
    std::vector<Run> runs;
    for (std::size_t p = 0; p < pairs.size();) {
        if (pairs[p].per_frame >= threshold) {
            ++p;
            continue;
        }
        std::size_t q = p;
        while (q + 1 < pairs.size() && pairs[q + 1].per_frame < threshold) ++q;
        runs.push_back({pairs[p].first, pairs[q].second});
        p = q + 1;
    }

    // Boundary refinement with single-frame steps; a strided pair only localises a
    // boundary to within `stride` frames.
    std::map<std::size_t, Pyramid> cache;
    auto frame = [&](std::size_t i) -> const Pyramid& {
        auto it = cache.find(i);
        if (it == cache.end()) it = cache.emplace(i, source.load(i)).first;
        return it->second;
    };
    auto still = [&](std::size_t i) {
        return motion_from_pyramids(frame(i), frame(i + 1), params.block).value < threshold;
    };
    nlohmann::json refine_log = nlohmann::json::array();
    for (std::size_t r = 0; r < runs.size() && stride > 1; ++r) {
        const std::size_t floor_idx = r == 0 ? 0 : runs[r - 1].end + 1;
        const std::size_t ceil_idx = r + 1 < runs.size() ? runs[r + 1].start - 1 : n - 1;
        const std::size_t orig_start = runs[r].start;
        const std::size_t orig_end = runs[r].end;
        for (std::size_t k = 1; k < stride && runs[r].start > floor_idx; ++k) {
            if (!still(runs[r].start - 1)) break;
            --runs[r].start;
        }
        for (std::size_t k = 1; k < stride && runs[r].end < ceil_idx; ++k) {
            if (!still(runs[r].end)) break;
            ++runs[r].end;
        }
        if (runs[r].start != orig_start || runs[r].end != orig_end)
            refine_log.push_back({{"from", {orig_start, orig_end}}, {"to", {runs[r].start, runs[r].end}}});
        cache.clear();
    }

    const std::size_t min_len = params.effective_min_len();
    nlohmann::json seg_log = nlohmann::json::array();
    std::vector<FrameRecord> records;
    for (const Run& run : runs) {
        PauseSegment seg{run.start, run.end, run.start};
        nlohmann::json entry{{"start", seg.start_idx}, {"end", seg.end_idx}, {"length", seg.length()}};
        if (seg.length() < min_len) {
            entry["kept"] = false;
            entry["reason"] = "shorter than min_len";
            seg_log.push_back(entry);
            continue;
        }
        for (std::size_t k = seg.start_idx; k <= seg.end_idx; ++k)
            if (focus[k] > focus[seg.representative_idx]) seg.representative_idx = k;

        double motion_sum = 0;
        int motion_count = 0;
        for (const auto& pr : pairs)
            if (pr.first >= seg.start_idx && pr.second <= seg.end_idx) {
                motion_sum += pr.per_frame;
                ++motion_count;
            }
        FrameRecord rec;
        rec.image = read_image(source.path(seg.representative_idx));
        rec.seq_index = records.size();
        rec.source_first = seg.start_idx;
        rec.source_last = seg.end_idx;
        rec.source_index = seg.representative_idx;
        rec.motion.value = motion_count ? motion_sum / motion_count : 0.0;
        rec.motion.blocks = motion_count;
        rec.focus.value = focus[seg.representative_idx];

        entry["kept"] = true;
        entry["representative"] = seg.representative_idx;
        entry["representative_file"] = source.path(seg.representative_idx).filename().string();
        entry["focus"] = rec.focus.value;
        entry["mean_motion"] = rec.motion.value;
        seg_log.push_back(entry);
        records.push_back(std::move(rec));
    }

    nlohmann::json dedup_log = nlohmann::json::array();
    std::vector<std::size_t> before;
    for (const auto& r : records) before.push_back(r.source_index);
    records = deduplicate(std::move(records), params.dedup_threshold);
    {
        std::size_t k = 0;
        for (std::size_t src : before) {
            if (k < records.size() && records[k].source_index == src) {
                ++k;
                continue;
            }
            dedup_log.push_back({{"dropped_source_index", src},
                                 {"duplicate_of", k == 0 ? nlohmann::json(nullptr)
                                                         : nlohmann::json(records[k - 1].source_index)}});
        }
    }

    nlohmann::json pair_log = nlohmann::json::array();
    for (const auto& pr : pairs)
        pair_log.push_back({{"first", pr.first},
                            {"second", pr.second},
                            {"motion_per_frame", pr.per_frame},
                            {"low_texture", pr.motion.low_texture}});

    ExtractionResult result;
    result.records = std::move(records);
    result.log = {
        {"frame_count", n},
        {"frame_dir", frame_dir.filename().string()},
        {"params",
         {{"motion_threshold", params.motion_threshold},
          {"min_len", min_len},
          {"stride", params.stride},
          {"block", params.block.block},
          {"radius", params.block.radius},
          {"grid_stride", params.block.grid_stride},
          {"dedup_threshold", params.dedup_threshold}}},
        {"pairs", pair_log},
        {"refinements", refine_log},
        {"segments", seg_log},
        {"deduplicated", dedup_log},
        {"records", nlohmann::json::array()},
    };
    for (const auto& r : result.records)
        result.log["records"].push_back({{"seq_index", r.seq_index},
                                         {"source_first", r.source_first},
                                         {"source_last", r.source_last},
                                         {"source_index", r.source_index},
                                         {"file", source.path(r.source_index).filename().string()},
                                         {"focus", r.focus.value},
                                         {"motion", r.motion.value}});
    return result;
}

}  // namespace vid2wsi
