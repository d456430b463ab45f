#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "herdpipe/common.hpp"
#include "herdpipe/tracks.hpp"
#include "herdpipe/vtt.hpp"

namespace herdpipe {

struct TimeInterval {
    Timecode start;
    Timecode end;

    std::int64_t duration_ms() const { return end.ms - start.ms; }

    bool operator==(const TimeInterval&) const = default;
};

/// Expand a segment to twice its duration about its center, then clamp to
/// [0, video_len]. Clamping may shorten the result. For odd-millisecond
/// durations the extra millisecond goes to the end side.
TimeInterval double_segment(TimeInterval seg, Timecode video_len);

/// Smallest square containing the box: side = max(w, h), same center.
/// May extend beyond the frame bounds; the pixel map pads those regions.
BBox square_box(const BBox& b);

/// Geometry of one output frame: a square source window resampled to
/// out_size x out_size, with zero padding outside the source image.
struct CropTransform {
    BBox src_box;       ///< square, may extend beyond the frame
    int out_size = 256;
    int frame_w = 0;
    int frame_h = 0;

    bool operator==(const CropTransform&) const = default;
};

struct SourcePixel {
    double x = 0.0;
    double y = 0.0;
};

/// Source location of output pixel (u, v), or nullopt when the location is
/// outside the source image (a PAD pixel, defined to be zero-valued).
std::optional<SourcePixel> crop_pixel_map(const CropTransform& t, int u, int v);

/// A fully resolved extraction plan for one action clip.
struct ClipSpec {
    std::string id;         ///< unique, filesystem-safe
    std::string video_ref;  ///< opaque source identifier
    int cow_id = 0;
    std::string label;
    std::int64_t cue_index = -1;     ///< ordinal of the source cue; -1 when none
    FrameIndex first_frame = 0;
    FrameIndex last_frame = 0;       ///< inclusive
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    std::vector<CropTransform> crops;  ///< one per frame

    bool operator==(const ClipSpec&) const = default;
};

/// Tile [start_ms, end_ms) with windows of window_ms at stride_ms spacing.
/// When the span is not a stride multiple a final window is anchored to the
/// end so the closing behaviour is always covered. A span shorter than one
/// window yields the single end-anchored window.
std::vector<TimeInterval> tile_windows(std::int64_t start_ms, std::int64_t end_ms,
                                       std::int64_t window_ms, std::int64_t stride_ms);

struct PlanParams {
    double frame_rate = 30.0;
    double window_s = 1.0;
    double stride_s = 1.0;  ///< dataset-export default; the pipeline uses 0.5
    int out_size = 256;
    int frame_w = 0;
    int frame_h = 0;
    std::string video_ref;
};

struct DroppedWindow {
    int cow_id = 0;
    std::string label;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    std::string reason;
};

struct PlanResult {
    std::vector<ClipSpec> clips;
    std::vector<DroppedWindow> dropped;
};

/// Resolve behaviour cues into extraction plans: each cue is tiled into
/// windows, and each window becomes a ClipSpec whose per-frame square crops
/// follow the cow's interpolated boxes. Windows that need interpolation
/// outside the cow's keyframe span are dropped with a report. A cue whose
/// cow has no track at all is a hard error. Output order is fixed by
/// (cue order, window index).
PlanResult plan_clips(std::span<const Track> tracks, std::span<const BehaviourCue> cues,
                      const PlanParams& params);

/// Number of frames in one window: round(window_s * frame_rate).
std::int64_t window_frame_count(double window_s, double frame_rate);

/// Plan document: one JSON record per clip, line-delimited.
void write_plan_jsonl(std::ostream& out, std::span<const ClipSpec> clips);
std::vector<ClipSpec> read_plan_jsonl(std::istream& in);

}  // namespace herdpipe
