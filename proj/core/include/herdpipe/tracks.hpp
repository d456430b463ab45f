#pragma once

#include <cstdint>
#include <vector>

#include "herdpipe/coco.hpp"
#include "herdpipe/common.hpp"

namespace herdpipe {

/// Axis-aligned rectangle in pixel space, top-left corner + size.
struct BBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    bool valid() const { return w > 0.0 && h > 0.0; }
    double cx() const { return x + w / 2.0; }
    double cy() const { return y + h / 2.0; }
    double area() const { return w * h; }

    bool operator==(const BBox&) const = default;
};

struct Keyframe {
    FrameIndex frame = 0;
    BBox box;

    bool operator==(const Keyframe&) const = default;
};

/// A cow's identity plus its time-ordered keyframe boxes. Immutable once
/// built; boxes between keyframes come from linear interpolation.
struct Track {
    int cow_id = 0;
    std::vector<Keyframe> keyframes;

    FrameIndex first_frame() const { return keyframes.front().frame; }
    FrameIndex last_frame() const { return keyframes.back().frame; }

    bool operator==(const Track&) const = default;
};

/// Validates the track invariants (>= 1 keyframe, strictly increasing frame
/// indices, positive cow id, valid boxes) and returns the track. Throws
/// ValidationError.
Track make_track(int cow_id, std::vector<Keyframe> keyframes);

/// Per-frame box by linear interpolation between the bracketing keyframes;
/// exact at keyframes. No extrapolation: frames outside the keyframe span
/// throw ValidationError.
BBox interpolate(const Track& track, FrameIndex frame);

/// One box per frame of the inclusive range [first, last]. An empty range
/// (first > last) yields an empty list; otherwise the range must lie within
/// the keyframe span.
std::vector<Keyframe> densify(const Track& track, FrameIndex first, FrameIndex last);

/// Intersection over union in [0, 1]; 0 when disjoint.
double iou(const BBox& a, const BBox& b);

/// Reconstruct per-cow tracks from a COCO document: annotations grouped by
/// category id (cow id) and sorted by image id (frame index). A dense export
/// (every frame annotated) round-trips bit-exactly. Two boxes for the same
/// cow on one frame are rejected.
std::vector<Track> tracks_from_coco(const CocoDocument& doc);

}  // namespace herdpipe
