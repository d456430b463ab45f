#include <doctest.h>

#include <cmath>
#include <sstream>

#include "herdpipe/clipgeom.hpp"

using namespace herdpipe;

namespace {

constexpr Timecode kHour{3600000};

Track straight_track(int cow, FrameIndex first, FrameIndex last) {
    return make_track(cow, {Keyframe{first, BBox{100, 100, 200, 150}},
                            Keyframe{last, BBox{700, 400, 200, 150}}});
}

}  // namespace

TEST_CASE("double_segment: symmetric expansion") {
    const auto out = double_segment({Timecode{60000}, Timecode{80000}}, kHour);
    CHECK(out == TimeInterval{Timecode{50000}, Timecode{90000}});
}

TEST_CASE("double_segment clamps at the video start") {
    const auto out = double_segment({Timecode{2000}, Timecode{10000}}, kHour);
    CHECK(out == TimeInterval{Timecode{0}, Timecode{14000}});
}

TEST_CASE("double_segment: the full video is a fixed point") {
    const auto out = double_segment({Timecode{0}, kHour}, kHour);
    CHECK(out == TimeInterval{Timecode{0}, kHour});
}

TEST_CASE("double_segment preserves the center exactly for even durations") {
    DeterministicRng rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        const std::int64_t d = 2 * (1 + static_cast<std::int64_t>(rng.uniform_u64(40000)));
        const std::int64_t s = static_cast<std::int64_t>(rng.uniform_u64(3600000 - 2 * d)) + d;
        const TimeInterval seg{Timecode{s}, Timecode{s + d}};
        const auto out = double_segment(seg, kHour);
        if (out.start.ms > 0 && out.end.ms < kHour.ms) {
            CHECK(out.start.ms + out.end.ms == seg.start.ms + seg.end.ms);  // same center
            CHECK(out.duration_ms() == 2 * d);
        }
        CHECK(out.start.ms >= 0);
        CHECK(out.end.ms <= kHour.ms);
    }
}

TEST_CASE("double_segment on an odd duration keeps the length exact") {
    // The extra millisecond goes to the end side; the center shifts 0.5 ms.
    const auto out = double_segment({Timecode{1000}, Timecode{1003}}, kHour);
    CHECK(out.duration_ms() == 6);
    CHECK(out.start.ms == 999);
    CHECK(out.end.ms == 1005);
}

TEST_CASE("square_box worked examples") {
    CHECK(square_box(BBox{10, 20, 40, 20}) == BBox{10, 10, 40, 40});
    CHECK(square_box(BBox{0, 0, 10, 10}) == BBox{0, 0, 10, 10});
    // Near the right edge of a 1920-wide frame: extending off-frame is fine.
    CHECK(square_box(BBox{1900, 100, 100, 40}) == BBox{1900, 70, 100, 100});
}

TEST_CASE("square_box preserves center and side, and is idempotent") {
    DeterministicRng rng(22);
    for (int trial = 0; trial < 500; ++trial) {
        const BBox b{rng.uniform_real(-100, 2000), rng.uniform_real(-100, 1100),
                     0.5 + rng.uniform_real(0, 500), 0.5 + rng.uniform_real(0, 500)};
        const BBox sq = square_box(b);
        CHECK(sq.w == std::max(b.w, b.h));
        CHECK(sq.h == sq.w);
        CHECK(std::abs(sq.cx() - b.cx()) <= 1e-9);
        CHECK(std::abs(sq.cy() - b.cy()) <= 1e-9);
        CHECK(square_box(sq) == sq);
    }
}

TEST_CASE("crop_pixel_map: identity and scale-2 maps") {
    const CropTransform unit{BBox{0, 0, 256, 256}, 256, 1920, 1080};
    for (int u : {0, 17, 255}) {
        const auto p = crop_pixel_map(unit, u, u);
        REQUIRE(p.has_value());
        CHECK(p->x == doctest::Approx(static_cast<double>(u)));
        CHECK(p->y == doctest::Approx(static_cast<double>(u)));
    }
    const CropTransform twice{BBox{0, 0, 512, 512}, 256, 1920, 1080};
    const auto p = crop_pixel_map(twice, 100, 7);
    REQUIRE(p.has_value());
    CHECK(p->x == doctest::Approx(200.0));
    CHECK(p->y == doctest::Approx(14.0));
}

TEST_CASE("crop_pixel_map pads exactly from output column 52 in the edge example") {
    const CropTransform t{BBox{1900, 70, 100, 100}, 256, 1920, 1080};
    CHECK(crop_pixel_map(t, 51, 128).has_value());
    CHECK_FALSE(crop_pixel_map(t, 52, 128).has_value());
    // Rows stay in frame over the whole box height.
    CHECK(crop_pixel_map(t, 0, 0).has_value());
    CHECK(crop_pixel_map(t, 0, 255).has_value());
}

TEST_CASE("crop_pixel_map affine consistency and zero padding for interior boxes") {
    DeterministicRng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const double side = 10 + rng.uniform_real(0, 500);
        const BBox sq{rng.uniform_real(0, 1920 - side), rng.uniform_real(0, 1080 - side), side,
                      side};
        const CropTransform t{sq, 256, 1920, 1080};
        for (int k = 0; k < 20; ++k) {
            const int u = static_cast<int>(rng.uniform_u64(256));
            const int v = static_cast<int>(rng.uniform_u64(256));
            const auto p = crop_pixel_map(t, u, v);
            REQUIRE(p.has_value());  // box fully inside the frame: no PAD
            // Inverting the map recovers the output coordinates.
            CHECK(std::abs((p->x - sq.x) * 256.0 / side - u) <= 1e-9 * 256.0);
            CHECK(std::abs((p->y - sq.y) * 256.0 / side - v) <= 1e-9 * 256.0);
        }
    }
}

TEST_CASE("tile_windows: exact tiling and tail anchoring") {
    const auto exact = tile_windows(5000, 7000, 1000, 1000);
    REQUIRE(exact.size() == 2);
    CHECK(exact[0] == TimeInterval{Timecode{5000}, Timecode{6000}});
    CHECK(exact[1] == TimeInterval{Timecode{6000}, Timecode{7000}});

    const auto tail = tile_windows(5000, 7500, 1000, 1000);
    REQUIRE(tail.size() == 3);
    CHECK(tail[2] == TimeInterval{Timecode{6500}, Timecode{7500}});

    const auto shorter = tile_windows(5000, 5400, 1000, 1000);
    REQUIRE(shorter.size() == 1);
    CHECK(shorter[0] == TimeInterval{Timecode{4400}, Timecode{5400}});

    CHECK(tile_windows(5000, 5000, 1000, 1000).empty());
}

TEST_CASE("plan_clips tiles a cue into full windows") {
    const Track track = straight_track(2, 0, 900);
    const std::vector<BehaviourCue> cues = {
        {2, "Drinking", Timecode{5000}, Timecode{7000}},
    };
    PlanParams params;
    params.frame_rate = 30.0;
    params.window_s = 1.0;
    params.stride_s = 1.0;
    params.frame_w = 1920;
    params.frame_h = 1080;
    params.video_ref = "cam1.mp4";

    const auto result = plan_clips(std::span(&track, 1), cues, params);
    CHECK(result.dropped.empty());
    REQUIRE(result.clips.size() == 2);
    for (const auto& clip : result.clips) {
        CHECK(clip.last_frame - clip.first_frame + 1 == 30);
        CHECK(clip.crops.size() == 30);
        CHECK(clip.label == "Drinking");
        CHECK(clip.cow_id == 2);
        for (const auto& c : clip.crops) CHECK(c.src_box.w == c.src_box.h);
    }
    CHECK(result.clips[0].first_frame == 150);
    CHECK(result.clips[1].first_frame == 180);
    CHECK(result.clips[0].id == "cam1.mp4_cow2_5000-6000");
}

TEST_CASE("plan_clips anchors the final window to the cue end") {
    const Track track = straight_track(2, 0, 900);
    const std::vector<BehaviourCue> cues = {
        {2, "Drinking", Timecode{5000}, Timecode{7500}},
    };
    PlanParams params;
    params.frame_rate = 30.0;
    params.frame_w = 1920;
    params.frame_h = 1080;
    params.video_ref = "v";

    const auto result = plan_clips(std::span(&track, 1), cues, params);
    REQUIRE(result.clips.size() == 3);
    CHECK(result.clips[2].start_ms == 6500);
    CHECK(result.clips[2].end_ms == 7500);
    CHECK(result.clips[2].first_frame == 195);
    CHECK(result.clips[2].last_frame == 224);
}

TEST_CASE("plan_clips drops windows outside the track span, with a report") {
    const Track track = straight_track(2, 150, 210);  // 5 s .. 7 s only
    const std::vector<BehaviourCue> cues = {
        {2, "Grazing", Timecode{5000}, Timecode{9000}},
    };
    PlanParams params;
    params.frame_rate = 30.0;
    params.frame_w = 1920;
    params.frame_h = 1080;

    const auto result = plan_clips(std::span(&track, 1), cues, params);
    CHECK(result.clips.size() == 2);   // [5,6) and [6,7)
    CHECK(result.dropped.size() == 2); // [7,8) and [8,9)
    CHECK(result.dropped[0].reason.find("outside the keyframe span") != std::string::npos);
}

TEST_CASE("plan_clips rejects cues whose cow has no track") {
    const Track track = straight_track(2, 0, 900);
    const std::vector<BehaviourCue> cues = {
        {5, "Other", Timecode{1000}, Timecode{3000}},
    };
    PlanParams params;
    params.frame_w = 1920;
    params.frame_h = 1080;
    CHECK_THROWS_WITH_AS(plan_clips(std::span(&track, 1), cues, params),
                         doctest::Contains("Cow 5"), ValidationError);
}

TEST_CASE("every planned clip has exactly round(window * fps) frames") {
    DeterministicRng rng(24);
    const Track track = straight_track(3, 0, 18000);
    for (int trial = 0; trial < 40; ++trial) {
        PlanParams params;
        params.frame_rate = 24.0 + rng.uniform_real(0, 36.0);
        params.window_s = 0.5 + rng.uniform_real(0, 2.0);
        params.stride_s = 0.25 + rng.uniform_real(0, 2.0);
        params.frame_w = 1920;
        params.frame_h = 1080;
        const std::int64_t start = 10000 + static_cast<std::int64_t>(rng.uniform_u64(100000));
        const std::int64_t len = 2000 + static_cast<std::int64_t>(rng.uniform_u64(30000));
        const std::vector<BehaviourCue> cues = {
            {3, "Other", Timecode{start}, Timecode{start + len}},
        };
        const auto result = plan_clips(std::span(&track, 1), cues, params);
        const auto expected = window_frame_count(params.window_s, params.frame_rate);
        for (const auto& clip : result.clips) {
            CHECK(clip.last_frame - clip.first_frame + 1 == expected);
        }
    }
}

TEST_CASE("plan documents round trip through jsonl") {
    const Track track = straight_track(2, 0, 900);
    const std::vector<BehaviourCue> cues = {
        {2, "Drinking", Timecode{5000}, Timecode{7000}},
    };
    PlanParams params;
    params.frame_w = 1920;
    params.frame_h = 1080;
    params.video_ref = "cam1.mp4";
    const auto planned = plan_clips(std::span(&track, 1), cues, params).clips;

    std::stringstream buf;
    write_plan_jsonl(buf, planned);
    const auto back = read_plan_jsonl(buf);
    CHECK(back == planned);
}
