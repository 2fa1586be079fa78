#include "doctest.h"
#include "testing/fixtures.hpp"

#include "vid2wsi/errors.hpp"
#include "vid2wsi/frame_extract.hpp"
#include "vid2wsi/image_io.hpp"

#include <cstdio>
#include <random>

using namespace vid2wsi;

namespace {

std::string frame_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06zu.png", i + 1);
    return buf;
}

FrameRecord record(const Image& img, std::size_t idx) {
    FrameRecord r;
    r.image = img;
    r.seq_index = idx;
    r.source_first = r.source_last = r.source_index = idx;
    return r;
}

}  // namespace

TEST_SUITE("motion") {
    TEST_CASE("identical frames have zero motion") {
        const Image f = testing::noise_texture(200, 160, 1);
        const MotionScore m = motion_between(f, f, {});
        CHECK(m.value == 0.0);
        CHECK_FALSE(m.low_texture);
        CHECK(m.blocks > 0);
    }

    TEST_CASE("known 6 px shift of a noise texture") {
        const Image a = testing::noise_texture(320, 240, 2);
        const Image b = testing::shifted(a, 6, 0);
        const auto field = block_motion(a, b);
        REQUIRE(!field.empty());
        int exact = 0;
        for (const auto& v : field) exact += (v.dx == 6 && v.dy == 0);
        CHECK(exact >= 0.9 * static_cast<double>(field.size()));
        const MotionScore m = motion_between(a, b);
        CHECK(m.value >= 5.0);
        CHECK(m.value <= 7.0);
    }

    TEST_CASE("uniform white frames are flagged low-texture") {
        const Image w(128, 128, 3, 255);
        const MotionScore m = motion_between(w, w);
        CHECK(m.value == 0.0);
        CHECK(m.low_texture);
    }

    TEST_CASE("dimension mismatch") {
        try {
            (void)motion_between(Image(64, 64, 1), Image(64, 65, 1));
            FAIL("expected DimensionMismatch");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::DimensionMismatch);
        }
    }

    TEST_CASE("motion is symmetric on random pairs") {
        std::mt19937_64 rng(3);
        for (int i = 0; i < 20; ++i) {
            const Image a = testing::noise_texture(160, 128, rng());
            const int dx = static_cast<int>(rng() % 21) - 10;
            const int dy = static_cast<int>(rng() % 21) - 10;
            const Image b = i % 4 == 0 ? testing::noise_texture(160, 128, rng()) : testing::shifted(a, dx, dy, 128);
            CHECK(std::abs(motion_between(a, b).value - motion_between(b, a).value) < 1e-6);
        }
    }
}

TEST_SUITE("segmentation") {
    TEST_CASE("identical frames form one segment") {
        const Image f = testing::noise_texture(128, 96, 4);
        const std::vector<Image> frames(30, f);
        const auto segs = segment_pauses(frames, 1.0, 3);
        REQUIRE(segs.size() == 1);
        CHECK(segs[0].start_idx == 0);
        CHECK(segs[0].end_idx == 29);
        CHECK(segs[0].representative_idx == 0);
    }

    TEST_CASE("planted pauses are recovered") {
        // Generator: a camera moving across a wide texture with 5 planted stops.
        const Image slide = testing::noise_texture(900, 140, 5);
        std::vector<Image> frames;
        std::vector<std::pair<std::size_t, std::size_t>> planted;
        int x = 0;
        for (int stop = 0; stop < 5; ++stop) {
            const std::size_t start = frames.size();
            for (int k = 0; k < 6; ++k) frames.push_back(crop(slide, {x, 10, 128, 96}));
            planted.emplace_back(start, frames.size() - 1);
            if (stop == 4) break;
            for (int k = 0; k < 4; ++k) {
                x += 9;
                frames.push_back(crop(slide, {x, 10, 128, 96}));
            }
            x += 9;
        }
        const auto segs = segment_pauses(frames, 1.5, 3);
        REQUIRE(segs.size() == planted.size());
        for (std::size_t i = 0; i < segs.size(); ++i) {
            CHECK(segs[i].start_idx == planted[i].first);
            CHECK(segs[i].end_idx == planted[i].second);
        }
    }

    TEST_CASE("two frames with a large shift give no segment") {
        const Image a = testing::noise_texture(256, 192, 6);
        const std::vector<Image> frames{a, testing::shifted(a, 12, 9, 100)};
        CHECK(segment_pauses(frames, 1.0, 2).empty());
    }

    TEST_CASE("representative is the sharpest frame, lowest index on ties") {
        const std::vector<double> motion{0, 0, 0, 0};
        const std::vector<double> focus{5, 9, 9, 1, 2};
        const auto segs = segment_from_scores(motion, focus, 1.0, 2);
        REQUIRE(segs.size() == 1);
        CHECK(segs[0].representative_idx == 1);
    }

    TEST_CASE("segments are disjoint, ordered, and respect min_len") {
        const std::vector<double> motion{0, 0, 5, 0, 5, 0, 0, 0};
        const std::vector<double> focus(9, 1.0);
        const auto segs = segment_from_scores(motion, focus, 1.0, 3);
        REQUIRE(segs.size() == 2);
        CHECK(segs[0] == PauseSegment{0, 2, 0});
        CHECK(segs[1] == PauseSegment{5, 8, 5});
    }
}

TEST_SUITE("dedup") {
    TEST_CASE("exact duplicate collapses") {
        const Image f = testing::noise_texture(64, 64, 7);
        auto out = deduplicate({record(f, 0), record(f, 1)});
        REQUIRE(out.size() == 1);
        CHECK(out[0].source_index == 0);
    }

    TEST_CASE("independent noise tiles are all kept") {
        std::vector<FrameRecord> recs;
        for (int i = 0; i < 10; ++i) recs.push_back(record(testing::noise_texture(96, 96, 100 + i), i));
        // Oracle: pairwise ZNCC of independent noise is near zero.
        for (int i = 0; i + 1 < 10; ++i) CHECK(std::abs(zncc(recs[i].image, recs[i + 1].image)) < 0.2);
        const auto out = deduplicate(recs, 0.995);
        CHECK(out.size() == 10);
    }

    TEST_CASE("empty input") { CHECK(deduplicate({}).empty()); }

    TEST_CASE("idempotent and repacks seq_index") {
        const Image a = testing::noise_texture(64, 64, 8), b = testing::noise_texture(64, 64, 9);
        std::vector<FrameRecord> recs{record(a, 0), record(a, 1), record(b, 2), record(b, 3), record(a, 4)};
        const auto once = deduplicate(recs);
        REQUIRE(once.size() == 3);
        for (std::size_t i = 0; i < once.size(); ++i) CHECK(once[i].seq_index == i);
        const auto twice = deduplicate(once);
        REQUIRE(twice.size() == once.size());
        for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i].source_index == once[i].source_index);
    }

    TEST_CASE("gain change does not defeat duplicate detection") {
        const Image a = testing::noise_texture(64, 64, 10);
        CHECK(zncc(a, apply_gain(a, 1.08)) > 0.995);
    }
}

TEST_SUITE("extract_frames") {
    TEST_CASE("thirty copies of one frame yield one record") {
        testing::TempDir dir;
        const Image f = testing::noise_texture(160, 120, 11, 3);
        for (std::size_t i = 0; i < 30; ++i) write_image(dir / frame_name(i), f);
        ExtractionParams p;
        p.fps = 10;
        const auto res = extract_frames(dir.path(), p);
        REQUIRE(res.records.size() == 1);
        CHECK(res.records[0].source_first == 0);
        CHECK(res.records[0].source_last == 29);
        CHECK(res.records[0].image == f);
        CHECK(res.log["segments"].size() == 1);
    }

    TEST_CASE("sharpest frame of a pause is chosen") {
        testing::TempDir dir;
        const Image sharp = testing::noise_texture(160, 120, 12, 3);
        const Image blurred = gaussian_blur(sharp, 1.5);
        const std::vector<Image> seq{blurred, blurred, sharp, blurred, blurred};
        for (std::size_t i = 0; i < seq.size(); ++i) write_image(dir / frame_name(i), seq[i]);
        // Direct check of the focus ordering this relies on.
        CHECK(focus_score(sharp).value > focus_score(blurred).value);
        ExtractionParams p;
        p.min_len = 3;
        p.stride = 1;
        const auto res = extract_frames(dir.path(), p);
        REQUIRE(res.records.size() == 1);
        CHECK(res.records[0].source_index == 2);
    }

    TEST_CASE("boundary refinement recovers exact bounds with stride 2") {
        testing::TempDir dir;
        const Image slide = testing::noise_texture(600, 140, 13);
        std::vector<Image> frames;
        int x = 0;
        for (int stop = 0; stop < 3; ++stop) {
            for (int k = 0; k < 7; ++k) frames.push_back(crop(slide, {x, 10, 128, 96}));
            if (stop == 2) break;
            for (int k = 0; k < 3; ++k) frames.push_back(crop(slide, {x += 10, 10, 128, 96}));
            x += 10;
        }
        for (std::size_t i = 0; i < frames.size(); ++i) write_image(dir / frame_name(i), frames[i]);
        ExtractionParams p;
        p.min_len = 4;
        p.stride = 2;
        const auto res = extract_frames(dir.path(), p);
        REQUIRE(res.records.size() == 3);
        CHECK(res.records[0].source_first == 0);
        CHECK(res.records[0].source_last == 6);
        CHECK(res.records[1].source_first == 10);
        CHECK(res.records[1].source_last == 16);
        CHECK(res.records[2].source_first == 20);
        CHECK(res.records[2].source_last == 26);
    }

    TEST_CASE("error paths") {
        testing::TempDir dir;
        try {
            (void)extract_frames(dir.path(), {});
            FAIL("expected NoFramesFound");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::NoFramesFound);
        }
        write_image(dir / frame_name(0), Image(64, 64, 1, 10));
        write_image(dir / frame_name(1), Image(64, 48, 1, 10));
        try {
            (void)extract_frames(dir.path(), {});
            FAIL("expected InconsistentDimensions");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::InconsistentDimensions);
        }
    }

    TEST_CASE("frames are ordered numerically") {
        testing::TempDir dir;
        for (int i : {10, 2, 1}) write_image(dir / ("f" + std::to_string(i) + ".png"), Image(8, 8, 1));
        const auto files = list_frames(dir.path());
        REQUIRE(files.size() == 3);
        CHECK(files[0].filename() == "f1.png");
        CHECK(files[1].filename() == "f2.png");
        CHECK(files[2].filename() == "f10.png");
    }
}
