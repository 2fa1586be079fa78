#include "rounding.hpp"
#include "vid2wsi/stitcher.hpp"

#include "vid2wsi/errors.hpp"
#include "vid2wsi/parallel.hpp"
#include "vid2wsi/warp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <queue>

namespace vid2wsi {

void StitchPlan::validate() const {
    if (batch_size < 2 || batch_size > 200)
        throw Error(ErrorKind::InvalidArgument, "batch_size must lie in [2, 200], got " + std::to_string(batch_size));
    if (!(max_scale_change >= 1.0)) throw Error(ErrorKind::InvalidArgument, "max_scale_change must be >= 1");
    if (feature_levels < 1 || feature_levels > 4)
        throw Error(ErrorKind::InvalidArgument, "feature_levels must lie in [1, 4]");
}

nlohmann::json to_json(const StitchPlan& plan) {
    const auto& r = plan.registration;
    return {{"batch_size", plan.batch_size},
            {"blend", std::string(to_string(plan.blend))},
            {"gain_compensation", plan.gain_compensation},
            {"model", std::string(to_string(r.model))},
            {"ratio", r.ratio},
            {"max_scale_change", plan.max_scale_change},
            {"feature_levels", plan.feature_levels},
            {"refine", plan.refine},
            {"features",
             {{"max_keypoints", r.features.max_keypoints},
              {"fast_threshold", r.features.fast_threshold},
              {"cell_size", r.features.cell_size},
              {"per_cell_cap", r.features.per_cell_cap}}},
            {"ransac",
             {{"max_iterations", r.ransac.max_iterations},
              {"confidence", r.ransac.confidence},
              {"inlier_threshold", r.ransac.inlier_threshold},
              {"min_inliers", r.ransac.min_inliers},
              {"seed", r.ransac.seed}}}};
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// Something registration can run on: features plus the region where keypoints could exist.
struct Item {
    std::size_t id = 0;
    const FeatureSet* features = nullptr;
    const Image* gray = nullptr;
    int width = 0;
    int height = 0;
    const std::vector<std::uint8_t>* valid = nullptr;  // null: the whole raster is valid
    int margin = kFeatureMargin;                       // border band where no keypoint can sit
};

// Pixels far enough inside the valid region for the detector to fire there.
std::vector<std::uint8_t> featureable_mask(const std::vector<std::uint8_t>& valid, int w, int h) {
    std::vector<std::int32_t> bad(static_cast<std::size_t>(w + 1) * (h + 1), 0);
    for (int y = 0; y < h; ++y) {
        std::int32_t row = 0;
        for (int x = 0; x < w; ++x) {
            row += valid[static_cast<std::size_t>(y) * w + x] ? 0 : 1;
            bad[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] = bad[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
        }
    }
    const int r = kFeatureMargin - 1;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h, 0);
    for (int y = kFeatureMargin; y < h - kFeatureMargin; ++y)
        for (int x = kFeatureMargin; x < w - kFeatureMargin; ++x) {
            const int x0 = x - r, x1 = x + r + 1, y0 = y - r, y1 = y + r + 1;
            const auto at = [&](int xx, int yy) { return bad[static_cast<std::size_t>(yy) * (w + 1) + xx]; };
            out[static_cast<std::size_t>(y) * w + x] = at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0) == 0;
        }
    return out;
}

struct Placed {
    std::size_t index;  // into the group
    Transform2D transform;
    Transform2D inverse;
};

// Keypoints of everything placed so far, in canvas coordinates. A keypoint is only
// added where no earlier item could have produced it, so each scene point appears
// about once and the ratio test is not defeated by its own duplicates.
class CompositeFeatures {
public:
    void add(const Item& item, std::size_t index, const Transform2D& t,
             const std::vector<std::uint8_t>* featureable) {
        for (std::size_t k = 0; k < item.features->size(); ++k) {
            Keypoint kp = item.features->keypoints[k];
            const Point2 p = t.apply(kp.x, kp.y);
            if (covered(p)) continue;
            kp.x = p.x;
            kp.y = p.y;
            kps_.push_back(kp);
            desc_.push_back(item.features->descriptors[k]);
        }
        placed_.push_back({index, t, t.inverse()});
        items_.push_back(item);
        featureable_.push_back(featureable);
    }

    /// Subset inside `window`, order preserved.
    void select(const Rect& window, std::vector<Keypoint>& kps, std::vector<Descriptor>& desc) const {
        kps.clear();
        desc.clear();
        for (std::size_t i = 0; i < kps_.size(); ++i) {
            if (!window.contains(static_cast<int>(std::floor(kps_[i].x)), static_cast<int>(std::floor(kps_[i].y))))
                continue;
            kps.push_back(kps_[i]);
            desc.push_back(desc_[i]);
        }
    }

    /// Every placed item as a correlation target on the group canvas.
    std::vector<PatchTarget> targets() const {
        std::vector<PatchTarget> out;
        for (std::size_t j = 0; j < placed_.size(); ++j) out.push_back({items_[j].gray, items_[j].valid, placed_[j].transform});
        return out;
    }

    const Placed& last() const { return placed_.back(); }
    const Item& last_item() const { return items_.back(); }

private:
    bool covered(Point2 p) const {
        for (std::size_t j = 0; j < placed_.size(); ++j) {
            const Point2 q = placed_[j].inverse.apply(p);
            const int x = detail::iround(q.x);
            const int y = detail::iround(q.y);
            const Item& it = items_[j];
            if (x < it.margin || y < it.margin || x >= it.width - it.margin || y >= it.height - it.margin)
                continue;
            if (!featureable_[j] || (*featureable_[j])[static_cast<std::size_t>(y) * it.width + x]) return true;
        }
        return false;
    }

    std::vector<Keypoint> kps_;
    std::vector<Descriptor> desc_;
    std::vector<Placed> placed_;
    std::vector<Item> items_;
    std::vector<const std::vector<std::uint8_t>*> featureable_;
};

// Registration plus a plausibility check on the recovered scale.
RegistrationResult checked_estimate(const MatchSet& m, std::span<const Keypoint> kps_a,
                                    std::span<const Keypoint> kps_b, const StitchPlan& plan) {
    RegistrationResult r = estimate_transform(m, kps_a, kps_b, plan.registration.model, plan.registration.ransac);
    const double scale = std::sqrt(std::abs(r.transform.linear_det()));
    if (scale > plan.max_scale_change || scale < 1.0 / plan.max_scale_change)
        throw Error(ErrorKind::NoConsensus, "implausible scale " + std::to_string(scale));
    return r;
}

RegistrationResult checked_register(const FeatureSet& a, const FeatureSet& b, const StitchPlan& plan) {
    return checked_estimate(match(a, b, plan.registration.ratio), a.keypoints, b.keypoints, plan);
}

// Correlation polish of an accepted transform; keeps it when refinement finds too little.
Transform2D polish(const Item& item, const Transform2D& t, std::span<const PatchTarget> targets,
                   const StitchPlan& plan, RegistrationRecord& rec) {
    if (!plan.refine) return t;
    const RefineResult r = refine_by_correlation(*item.gray, item.valid, t, targets, plan.registration.model);
    if (r.points == 0) return t;
    const double scale = std::sqrt(std::abs(r.transform.linear_det()));
    if (scale > plan.max_scale_change || scale < 1.0 / plan.max_scale_change) return t;
    rec.refined_points = r.points;
    return r.transform;
}

struct GroupOutcome {
    std::vector<std::optional<Transform2D>> transforms;  // item -> group canvas
    std::vector<DroppedFrame> dropped;                   // seq_index holds the item id
    std::vector<RegistrationRecord> records;
    std::size_t calls = 0;
};

bool is_registration_failure(ErrorKind k) {
    return k == ErrorKind::NoConsensus || k == ErrorKind::InsufficientMatches || k == ErrorKind::SingularTransform;
}

GroupOutcome stitch_group(std::span<const Item> items, const StitchPlan& plan, int level) {
    GroupOutcome out;
    out.transforms.resize(items.size());
    if (items.empty()) return out;

    std::vector<std::vector<std::uint8_t>> featureable(items.size());
    for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].valid) featureable[i] = featureable_mask(*items[i].valid, items[i].width, items[i].height);
    auto mask_of = [&](std::size_t i) { return items[i].valid ? &featureable[i] : nullptr; };

    CompositeFeatures composite;
    out.transforms[0] = Transform2D::identity();
    composite.add(items[0], 0, Transform2D::identity(), mask_of(0));

    std::vector<Keypoint> win_kps;
    std::vector<Descriptor> win_desc;
    for (std::size_t i = 1; i < items.size(); ++i) {
        const Item& item = items[i];
        const Placed& last = composite.last();
        const Item& last_item = composite.last_item();
        Rect window = warped_bounds(last.transform, last_item.width, last_item.height);
        window = {window.x - last_item.width / 2, window.y - last_item.height / 2, window.width + last_item.width,
                  window.height + last_item.height};
        composite.select(window, win_kps, win_desc);

        RegistrationRecord rec{level, item.id, "composite", false, std::nullopt, 0, {}};
        std::optional<Transform2D> placed;
        std::string details;
        ++out.calls;
        try {
            const MatchSet m = match(win_desc, item.features->descriptors, plan.registration.ratio);
            rec.result = checked_estimate(m, win_kps, item.features->keypoints, plan);
            rec.ok = true;
            placed = polish(item, rec.result->transform, composite.targets(), plan, rec);
        } catch (const Error& e) {
            if (!is_registration_failure(e.kind())) throw;
            rec.error = e.what();
            details = "composite: " + rec.error;
        }
        out.records.push_back(std::move(rec));

        if (!placed) {
            RegistrationRecord retry{level, item.id, "previous:" + std::to_string(last_item.id), false, std::nullopt, 0, {}};
            ++out.calls;
            try {
                retry.result = checked_register(*last_item.features, *item.features, plan);
                retry.ok = true;
                placed = polish(item, compose(last.transform, retry.result->transform), composite.targets(), plan, retry);
            } catch (const Error& e) {
                if (!is_registration_failure(e.kind())) throw;
                retry.error = e.what();
                details += "; previous: " + retry.error;
            }
            out.records.push_back(std::move(retry));
        }

        if (!placed || !placed->invertible()) {
            out.dropped.push_back({item.id, std::string(to_string(ErrorKind::NoConsensus)), details});
            continue;
        }
        out.transforms[i] = *placed;
        composite.add(item, i, *placed, mask_of(i));
    }
    return out;
}

struct FrameData {
    FeatureSet features;
    Image gray;
};

// Features from each pyramid level, keypoints reported in full-resolution pixels.
std::vector<FrameData> frame_features(const std::vector<FrameRecord>& frames, const StitchPlan& plan) {
    std::vector<FrameData> data(frames.size());
    parallel_for(frames.size(), plan.threads, [&](std::size_t i) {
        data[i].gray = to_gray(frames[i].image);
        FeatureSet& fs = data[i].features;
        Image level = data[i].gray;
        for (int l = 0, s = 1; l < plan.feature_levels; ++l, s *= 2) {
            if (l > 0) level = downsample_box(level, 2);
            if (std::min(level.width(), level.height()) < 32) break;
            FeatureSet part = extract_features(level, plan.registration.features);
            for (auto& kp : part.keypoints) {
                kp.x = s * kp.x + (s - 1) / 2.0;
                kp.y = s * kp.y + (s - 1) / 2.0;
            }
            fs.keypoints.insert(fs.keypoints.end(), part.keypoints.begin(), part.keypoints.end());
            fs.descriptors.insert(fs.descriptors.end(), part.descriptors.begin(), part.descriptors.end());
        }
    });
    return data;
}

Item frame_item(const FrameRecord& f, const FrameData& d) {
    return {f.seq_index, &d.features, &d.gray, f.image.width(), f.image.height(), nullptr, kFeatureMargin};
}

RenderOptions render_options(const StitchPlan& plan) {
    return {plan.blend, plan.gain_compensation, 0.7, 1.4, plan.threads};
}

MosaicNode render_node(const std::vector<FrameRecord>& frames, const std::vector<std::size_t>& order,
                       std::vector<Member> members, const StitchPlan& plan, int level) {
    // `order[k]` is the frame index of members[k].
    std::vector<Placement> placements;
    for (std::size_t k = 0; k < members.size(); ++k) placements.push_back({&frames[order[k]].image, members[k].transform});
    Rendered r = render(placements, render_options(plan));
    MosaicNode node;
    node.image = std::move(r.image);
    node.valid = std::move(r.valid);
    node.bounds = r.bounds;
    node.members = std::move(members);
    node.level = level;
    return node;
}

void check_frames(const std::vector<FrameRecord>& frames, const StitchPlan& plan) {
    plan.validate();
    if (frames.empty()) throw Error(ErrorKind::EmptyInput, "no frames to stitch");
}

// Maps full-resolution canvas coordinates to a 1/s grid (pixel centres preserved).
Transform2D downscale_map(int s) {
    const double f = 1.0 / s, o = -(s - 1) / (2.0 * s);
    return Transform2D::from_matrix({f, 0, o, 0, f, o, 0, 0, 1}, TransformModel::Similarity);
}

Transform2D upscale_map(int s) {
    const double o = (s - 1) / 2.0;
    return Transform2D::from_matrix({double(s), 0, o, 0, double(s), o, 0, 0, 1}, TransformModel::Similarity);
}

}  // namespace

nlohmann::json to_json(const StitchManifest& m) {
    nlohmann::json regs = nlohmann::json::array();
    for (const auto& r : m.registrations) {
        nlohmann::json j{{"level", r.level}, {"item", r.item}, {"target", r.target}, {"ok", r.ok}};
        if (r.result) j["result"] = to_json(*r.result);
        if (r.refined_points > 0) j["refined_points"] = r.refined_points;
        if (!r.error.empty()) j["error"] = r.error;
        regs.push_back(std::move(j));
    }
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& t : m.transforms) frames.push_back({{"seq_index", t.seq_index}, {"transform", to_json(t.transform)}});
    nlohmann::json dropped = nlohmann::json::array();
    for (const auto& d : m.dropped) dropped.push_back({{"seq_index", d.seq_index}, {"reason", d.reason}, {"detail", d.detail}});
    return {{"method", m.method},
            {"plan", to_json(m.plan)},
            {"canvas", {{"x", m.canvas.x}, {"y", m.canvas.y}, {"width", m.canvas.width}, {"height", m.canvas.height}}},
            {"registration_calls", m.registration_calls},
            {"levels", m.levels},
            {"frames", frames},
            {"dropped", dropped},
            {"registrations", regs}};
}

nlohmann::json timing_json(const StitchManifest& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m.timing) j[k] = v;
    return j;
}

MosaicNode stitch_batch(const std::vector<FrameRecord>& frames, const StitchPlan& plan, StitchManifest* manifest) {
    check_frames(frames, plan);
    if (static_cast<int>(frames.size()) > plan.batch_size)
        throw Error(ErrorKind::InvalidArgument, std::to_string(frames.size()) + " frames exceed batch_size " +
                                                    std::to_string(plan.batch_size));
    const auto start = Clock::now();
    const std::vector<FrameData> feats = frame_features(frames, plan);
    std::vector<Item> items;
    for (std::size_t i = 0; i < frames.size(); ++i)
        items.push_back(frame_item(frames[i], feats[i]));
    GroupOutcome g = stitch_group(items, plan, 0);

    std::vector<Member> members;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < frames.size(); ++i)
        if (g.transforms[i]) {
            members.push_back({frames[i].seq_index, *g.transforms[i]});
            order.push_back(i);
        }
    MosaicNode node = render_node(frames, order, members, plan, 0);
    if (manifest) {
        manifest->method = "batch";
        manifest->plan = plan;
        manifest->registrations = std::move(g.records);
        std::vector<std::size_t> ids;
        for (const auto& f : frames) ids.push_back(f.seq_index);
        manifest->levels = {{ids}};
        manifest->transforms = node.members;
        manifest->dropped = std::move(g.dropped);
        manifest->registration_calls = g.calls;
        manifest->canvas = node.bounds;
        manifest->timing["total"] = seconds_since(start);
    }
    return node;
}

StitchOutput stitch_recursive(const std::vector<FrameRecord>& frames, const StitchPlan& plan) {
    check_frames(frames, plan);
    const auto start = Clock::now();
    StitchOutput out;
    StitchManifest& man = out.manifest;
    man.method = "recursive";
    man.plan = plan;

    auto t = Clock::now();
    const std::vector<FrameData> feats = frame_features(frames, plan);
    man.timing["features"] = seconds_since(t);

    // A node is a list of (frame index, transform into the node canvas).
    struct Node {
        std::vector<std::size_t> frames;
        std::vector<Transform2D> transforms;
    };
    const std::size_t bs = static_cast<std::size_t>(plan.batch_size);

    t = Clock::now();
    const std::size_t groups = (frames.size() + bs - 1) / bs;
    std::vector<GroupOutcome> outcomes(groups);
    parallel_for(groups, plan.threads, [&](std::size_t gi) {
        std::vector<Item> items;
        for (std::size_t i = gi * bs; i < std::min(frames.size(), (gi + 1) * bs); ++i)
            items.push_back(frame_item(frames[i], feats[i]));
        outcomes[gi] = stitch_group(items, plan, 0);
    });
    std::vector<Node> nodes;
    man.levels.emplace_back();
    for (std::size_t gi = 0; gi < groups; ++gi) {
        Node node;
        std::vector<std::size_t> ids;
        for (std::size_t k = 0; k < outcomes[gi].transforms.size(); ++k) {
            const std::size_t fi = gi * bs + k;
            ids.push_back(frames[fi].seq_index);
            if (!outcomes[gi].transforms[k]) continue;
            node.frames.push_back(fi);
            node.transforms.push_back(*outcomes[gi].transforms[k]);
        }
        man.levels.back().push_back(std::move(ids));
        man.registration_calls += outcomes[gi].calls;
        std::move(outcomes[gi].records.begin(), outcomes[gi].records.end(), std::back_inserter(man.registrations));
        std::move(outcomes[gi].dropped.begin(), outcomes[gi].dropped.end(), std::back_inserter(man.dropped));
        nodes.push_back(std::move(node));
    }
    man.timing["level_0"] = seconds_since(t);

    const int frame_px = frames[0].image.width() * frames[0].image.height();
    int level = 0;
    while (nodes.size() > 1) {
        ++level;
        t = Clock::now();
        const int s = 1 << level;
        const Transform2D down = downscale_map(s);

        // Node composites at 1/s resolution, rendered from the original frames.
        std::vector<Rendered> small(nodes.size());
        std::vector<FeatureSet> node_feats(nodes.size());
        std::vector<Image> node_gray(nodes.size());
        for (std::size_t j = 0; j < nodes.size(); ++j) {
            std::vector<Placement> pl;
            for (std::size_t k = 0; k < nodes[j].frames.size(); ++k)
                pl.push_back({&frames[nodes[j].frames[k]].image, compose(down, nodes[j].transforms[k])});
            small[j] = render(pl, render_options(plan));
            const auto valid_px = std::count(small[j].valid.begin(), small[j].valid.end(), 1);
            FeatureParams fp = plan.registration.features;
            const double ratio = static_cast<double>(valid_px) / frame_px;
            fp.max_keypoints = static_cast<int>(std::clamp(ratio, 1.0, 8.0) * fp.max_keypoints);
            node_gray[j] = to_gray(small[j].image);
            const Image& img = node_gray[j];
            if (std::min(img.width(), img.height()) >= 32) node_feats[j] = extract_features(img, fp, &small[j].valid);
        }

        const std::size_t ngroups = (nodes.size() + bs - 1) / bs;
        std::vector<Node> next;
        man.levels.emplace_back();
        for (std::size_t gi = 0; gi < ngroups; ++gi) {
            std::vector<Item> items;
            for (std::size_t j = gi * bs; j < std::min(nodes.size(), (gi + 1) * bs); ++j)
                items.push_back({j, &node_feats[j], &node_gray[j], small[j].image.width(), small[j].image.height(), &small[j].valid});
            GroupOutcome g = stitch_group(items, plan, level);
            man.registration_calls += g.calls;
            std::move(g.records.begin(), g.records.end(), std::back_inserter(man.registrations));

            std::vector<std::size_t> ids;
            Node merged;
            const std::size_t anchor = gi * bs;
            // small-image -> full canvas of node j: upscale after undoing the render offset.
            auto lift = [&](std::size_t j) {
                return compose(upscale_map(s), Transform2D::translation(small[j].bounds.x, small[j].bounds.y));
            };
            const Transform2D anchor_lift = lift(anchor);
            for (std::size_t k = 0; k < items.size(); ++k) {
                const std::size_t j = anchor + k;
                ids.push_back(j);
                if (!g.transforms[k]) {
                    const DroppedFrame& why = *std::find_if(g.dropped.begin(), g.dropped.end(),
                                                            [&](const DroppedFrame& d) { return d.seq_index == j; });
                    for (std::size_t fi : nodes[j].frames)
                        man.dropped.push_back({frames[fi].seq_index, why.reason,
                                               "level " + std::to_string(level) + " node " + std::to_string(j) + ": " +
                                                   why.detail});
                    continue;
                }
                const Transform2D to_parent =
                    k == 0 ? Transform2D::identity()
                           : compose(compose(anchor_lift, *g.transforms[k]), lift(j).inverse());
                for (std::size_t m = 0; m < nodes[j].frames.size(); ++m) {
                    merged.frames.push_back(nodes[j].frames[m]);
                    merged.transforms.push_back(k == 0 ? nodes[j].transforms[m] : compose(to_parent, nodes[j].transforms[m]));
                }
            }
            man.levels.back().push_back(std::move(ids));
            next.push_back(std::move(merged));
        }
        nodes = std::move(next);
        man.timing["level_" + std::to_string(level)] = seconds_since(t);
    }

    t = Clock::now();
    const Node& root = nodes.front();
    if (root.frames.empty()) throw Error(ErrorKind::StitchFailed, "no frame could be placed");
    std::vector<Member> members;
    for (std::size_t k = 0; k < root.frames.size(); ++k) members.push_back({frames[root.frames[k]].seq_index, root.transforms[k]});
    out.mosaic = render_node(frames, root.frames, members, plan, level);
    man.timing["render"] = seconds_since(t);

    man.transforms = out.mosaic.members;
    std::sort(man.dropped.begin(), man.dropped.end(),
              [](const DroppedFrame& a, const DroppedFrame& b) { return a.seq_index < b.seq_index; });
    man.canvas = out.mosaic.bounds;
    man.timing["total"] = seconds_since(start);
    return out;
}

StitchOutput stitch_naive(const std::vector<FrameRecord>& frames, const StitchPlan& plan) {
    check_frames(frames, plan);
    const auto start = Clock::now();
    StitchOutput out;
    StitchManifest& man = out.manifest;
    man.method = "naive";
    man.plan = plan;
    const std::size_t n = frames.size();

    auto t = Clock::now();
    const std::vector<FrameData> feats = frame_features(frames, plan);
    man.timing["features"] = seconds_since(t);

    struct Edge {
        std::size_t i, j;
        double confidence;
        Transform2D j_to_i;
    };
    t = Clock::now();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    std::vector<RegistrationRecord> records(pairs.size());
    parallel_for(pairs.size(), plan.threads, [&](std::size_t p) {
        const auto [i, j] = pairs[p];
        RegistrationRecord rec{0, frames[j].seq_index, "pair:" + std::to_string(frames[i].seq_index), false, std::nullopt, 0, {}};
        try {
            rec.result = checked_register(feats[i].features, feats[j].features, plan);
            rec.ok = true;
            const PatchTarget target{&feats[i].gray, nullptr, Transform2D::identity()};
            const Item item = frame_item(frames[j], feats[j]);
            rec.result->transform = polish(item, rec.result->transform, {&target, 1}, plan, rec);
        } catch (const Error& e) {
            if (!is_registration_failure(e.kind())) throw;
            rec.error = e.what();
        }
        records[p] = std::move(rec);
    });
    man.registration_calls = pairs.size();
    std::vector<Edge> edges;
    for (std::size_t p = 0; p < pairs.size(); ++p)
        if (records[p].ok) edges.push_back({pairs[p].first, pairs[p].second, records[p].result->confidence(), records[p].result->transform});
    man.timing["registration"] = seconds_since(t);

    // Kruskal on descending confidence; index order breaks ties.
    std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.confidence > b.confidence; });
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::vector<std::vector<std::pair<std::size_t, const Edge*>>> adj(n);
    for (const auto& e : edges) {
        const std::size_t a = find(e.i), b = find(e.j);
        if (a == b) continue;
        parent[a] = b;
        adj[e.i].push_back({e.j, &e});
        adj[e.j].push_back({e.i, &e});
    }
    std::size_t anchor = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (adj[i].size() > adj[anchor].size()) anchor = i;
    for (auto& a : adj) std::sort(a.begin(), a.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

    std::vector<std::optional<Transform2D>> global(n);
    global[anchor] = Transform2D::identity();
    std::queue<std::size_t> q;
    q.push(anchor);
    while (!q.empty()) {
        const std::size_t u = q.front();
        q.pop();
        for (const auto& [v, e] : adj[u]) {
            if (global[v]) continue;
            // e->j_to_i maps frame j into frame i.
            global[v] = v == e->j ? compose(*global[u], e->j_to_i) : compose(*global[u], e->j_to_i.inverse());
            q.push(v);
        }
    }

    std::size_t first = n;
    for (std::size_t i = 0; i < n && first == n; ++i)
        if (global[i]) first = i;
    const Transform2D rebase = global[first]->inverse();
    std::vector<Member> members;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < n; ++i) {
        if (!global[i]) {
            man.dropped.push_back({frames[i].seq_index, std::string(to_string(ErrorKind::NoConsensus)),
                                   "not connected to anchor frame " + std::to_string(frames[anchor].seq_index)});
            continue;
        }
        members.push_back({frames[i].seq_index, i == first ? Transform2D::identity() : compose(rebase, *global[i])});
        order.push_back(i);
    }

    t = Clock::now();
    out.mosaic = render_node(frames, order, members, plan, 0);
    man.timing["render"] = seconds_since(t);
    man.registrations = std::move(records);
    std::vector<std::size_t> ids;
    for (const auto& f : frames) ids.push_back(f.seq_index);
    man.levels = {{ids}};
    man.transforms = out.mosaic.members;
    man.canvas = out.mosaic.bounds;
    man.timing["total"] = seconds_since(start);
    return out;
}

}  // namespace vid2wsi
