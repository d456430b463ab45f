#include <doctest.h>

#include <cmath>

#include "herdpipe/tracks.hpp"

using namespace herdpipe;

namespace {

Track two_keyframes() {
    return make_track(1, {Keyframe{0, BBox{0, 0, 10, 10}}, Keyframe{9, BBox{90, 0, 10, 10}}});
}

// Pixel-rasterization IoU for integer boxes: count unit cells in the
// intersection and union directly.
double iou_rasterized(const BBox& a, const BBox& b) {
    long inter = 0, only_a = 0, only_b = 0;
    const long x0 = static_cast<long>(std::floor(std::min(a.x, b.x)));
    const long y0 = static_cast<long>(std::floor(std::min(a.y, b.y)));
    const long x1 = static_cast<long>(std::ceil(std::max(a.x + a.w, b.x + b.w)));
    const long y1 = static_cast<long>(std::ceil(std::max(a.y + a.h, b.y + b.h)));
    for (long x = x0; x < x1; ++x) {
        for (long y = y0; y < y1; ++y) {
            const bool in_a = x >= a.x && x < a.x + a.w && y >= a.y && y < a.y + a.h;
            const bool in_b = x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h;
            inter += in_a && in_b;
            only_a += in_a && !in_b;
            only_b += !in_a && in_b;
        }
    }
    const long uni = inter + only_a + only_b;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

BBox random_int_box(DeterministicRng& rng) {
    return BBox{static_cast<double>(rng.uniform_u64(90)), static_cast<double>(rng.uniform_u64(90)),
                static_cast<double>(1 + rng.uniform_u64(99)),
                static_cast<double>(1 + rng.uniform_u64(99))};
}

}  // namespace

TEST_CASE("make_track enforces the invariants") {
    CHECK_THROWS_AS(make_track(1, {}), ValidationError);
    CHECK_THROWS_AS(make_track(0, {Keyframe{0, BBox{0, 0, 1, 1}}}), ValidationError);
    CHECK_THROWS_AS(make_track(1, {Keyframe{0, BBox{0, 0, 0, 1}}}), ValidationError);
    CHECK_THROWS_AS(
        make_track(1, {Keyframe{5, BBox{0, 0, 1, 1}}, Keyframe{5, BBox{0, 0, 1, 1}}}),
        ValidationError);
    CHECK_THROWS_AS(
        make_track(1, {Keyframe{5, BBox{0, 0, 1, 1}}, Keyframe{4, BBox{0, 0, 1, 1}}}),
        ValidationError);
}

TEST_CASE("interpolate: linear arithmetic at t = 1/3") {
    const BBox b = interpolate(two_keyframes(), 3);
    CHECK(b.x == doctest::Approx(30.0));
    CHECK(b.y == 0.0);
    CHECK(b.w == 10.0);
    CHECK(b.h == 10.0);
}

TEST_CASE("interpolate is exact at keyframes and refuses extrapolation") {
    const Track track = two_keyframes();
    CHECK(interpolate(track, 9) == BBox{90, 0, 10, 10});
    CHECK(interpolate(track, 0) == BBox{0, 0, 10, 10});
    CHECK_THROWS_AS(interpolate(track, 10), ValidationError);
    CHECK_THROWS_AS(interpolate(track, -1), ValidationError);
}

TEST_CASE("densify walks every frame of the span") {
    const auto boxes = densify(two_keyframes(), 0, 9);
    REQUIRE(boxes.size() == 10);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        CHECK(boxes[i].frame == static_cast<FrameIndex>(i));
        CHECK(boxes[i].box.x == doctest::Approx(10.0 * static_cast<double>(i)));
    }
}

TEST_CASE("densify: singleton and empty ranges") {
    const Track track = two_keyframes();
    const auto one = densify(track, 9, 9);
    REQUIRE(one.size() == 1);
    CHECK(one[0].box == BBox{90, 0, 10, 10});
    CHECK(densify(track, 5, 4).empty());
}

TEST_CASE("iou worked examples") {
    const BBox a{0, 0, 10, 10};
    CHECK(iou(a, a) == doctest::Approx(1.0));
    CHECK(iou(a, BBox{5, 0, 10, 10}) == doctest::Approx(1.0 / 3.0));
    CHECK(iou(a, BBox{20, 20, 5, 5}) == 0.0);
}

TEST_CASE("iou is symmetric, bounded, and 1 only for identical boxes") {
    DeterministicRng rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        const BBox a = random_int_box(rng);
        const BBox b = random_int_box(rng);
        const double v = iou(a, b);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(v == iou(b, a));
        if (v == 1.0) CHECK(a == b);
    }
}

TEST_CASE("iou matches the pixel-rasterization oracle on integer boxes") {
    DeterministicRng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        const BBox a = random_int_box(rng);
        const BBox b = random_int_box(rng);
        CHECK(std::abs(iou(a, b) - iou_rasterized(a, b)) <= 1e-9);
    }
}

TEST_CASE("interpolate matches the closed form at every frame") {
    DeterministicRng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Keyframe> kfs;
        FrameIndex frame = 0;
        const std::size_t n = 2 + rng.uniform_u64(6);
        for (std::size_t i = 0; i < n; ++i) {
            kfs.push_back(Keyframe{frame, BBox{rng.uniform_real(0, 1800),
                                               rng.uniform_real(0, 1000),
                                               1 + rng.uniform_real(0, 300),
                                               1 + rng.uniform_real(0, 300)}});
            frame += 1 + static_cast<FrameIndex>(rng.uniform_u64(20));
        }
        const Track track = make_track(1, kfs);
        for (std::size_t i = 0; i + 1 < kfs.size(); ++i) {
            for (FrameIndex f = kfs[i].frame; f <= kfs[i + 1].frame; ++f) {
                const BBox got = interpolate(track, f);
                if (f == kfs[i].frame) {
                    CHECK(got == kfs[i].box);
                    continue;
                }
                if (f == kfs[i + 1].frame) {
                    CHECK(got == kfs[i + 1].box);
                    continue;
                }
                const double t = static_cast<double>(f - kfs[i].frame) /
                                 static_cast<double>(kfs[i + 1].frame - kfs[i].frame);
                CHECK(got.x == kfs[i].box.x + (kfs[i + 1].box.x - kfs[i].box.x) * t);
                CHECK(got.y == kfs[i].box.y + (kfs[i + 1].box.y - kfs[i].box.y) * t);
                CHECK(got.w == kfs[i].box.w + (kfs[i + 1].box.w - kfs[i].box.w) * t);
                CHECK(got.h == kfs[i].box.h + (kfs[i + 1].box.h - kfs[i].box.h) * t);
            }
        }
    }
}

TEST_CASE("second differences vanish between keyframes") {
    // Power-of-two strides with integer coordinates make the lerp exact in
    // binary floating point, so the second difference is exactly zero.
    DeterministicRng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const FrameIndex stride = FrameIndex{1} << (3 + rng.uniform_u64(4));  // 8..64
        std::vector<Keyframe> kfs;
        for (FrameIndex f = 0; f <= 4 * stride; f += stride) {
            kfs.push_back(Keyframe{f, BBox{static_cast<double>(rng.uniform_u64(1 << 20)),
                                           static_cast<double>(rng.uniform_u64(1 << 20)),
                                           static_cast<double>(1 + rng.uniform_u64(1 << 10)),
                                           static_cast<double>(1 + rng.uniform_u64(1 << 10))}});
        }
        const Track track = make_track(1, kfs);
        for (FrameIndex f = 1; f + 1 <= track.last_frame(); ++f) {
            if (f % stride == 0 || (f + 1) % stride == 0 || (f - 1) % stride == 0) continue;
            const BBox lo = interpolate(track, f - 1);
            const BBox mid = interpolate(track, f);
            const BBox hi = interpolate(track, f + 1);
            CHECK((hi.x - mid.x) - (mid.x - lo.x) == 0.0);
            CHECK((hi.y - mid.y) - (mid.y - lo.y) == 0.0);
            CHECK((hi.w - mid.w) - (mid.w - lo.w) == 0.0);
            CHECK((hi.h - mid.h) - (mid.h - lo.h) == 0.0);
        }
    }
}

TEST_CASE("tracks_from_coco groups by cow and sorts by frame") {
    CocoDocument doc;
    doc.images = {{0, "f0.jpg", 1920, 1080}, {9, "f9.jpg", 1920, 1080}};
    doc.categories = {{1, "cow_1"}, {2, "cow_2"}};
    doc.annotations = {
        {1, 9, 1, {90, 0, 10, 10}, 100, 0},
        {2, 0, 1, {0, 0, 10, 10}, 100, 0},
        {3, 0, 2, {50, 50, 20, 20}, 400, 0},
    };
    const auto tracks = tracks_from_coco(doc);
    REQUIRE(tracks.size() == 2);
    CHECK(tracks[0].cow_id == 1);
    REQUIRE(tracks[0].keyframes.size() == 2);
    CHECK(tracks[0].keyframes[0].frame == 0);
    CHECK(tracks[0].keyframes[1].frame == 9);
    CHECK(tracks[1].cow_id == 2);

    CocoDocument dup = doc;
    dup.annotations.push_back({4, 0, 1, {1, 1, 5, 5}, 25, 0});
    CHECK_THROWS_AS(tracks_from_coco(dup), ValidationError);
}
