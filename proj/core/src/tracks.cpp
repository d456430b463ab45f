#include "herdpipe/tracks.hpp"

#include <algorithm>
#include <map>

namespace herdpipe {

Track make_track(int cow_id, std::vector<Keyframe> keyframes) {
    if (cow_id <= 0) {
        throw ValidationError("track: cow id must be positive, got " + std::to_string(cow_id));
    }
    if (keyframes.empty()) {
        throw ValidationError("track: cow " + std::to_string(cow_id) + " has no keyframes");
    }
    for (std::size_t i = 0; i < keyframes.size(); ++i) {
        if (!keyframes[i].box.valid()) {
            throw ValidationError("track: cow " + std::to_string(cow_id) +
                                  " has an invalid box at frame " +
                                  std::to_string(keyframes[i].frame));
        }
        if (i > 0 && keyframes[i].frame <= keyframes[i - 1].frame) {
            throw ValidationError("track: cow " + std::to_string(cow_id) +
                                  " keyframes not strictly increasing at frame " +
                                  std::to_string(keyframes[i].frame));
        }
    }
    return Track{cow_id, std::move(keyframes)};
}

BBox interpolate(const Track& track, FrameIndex frame) {
    const auto& kfs = track.keyframes;
    if (kfs.empty()) throw ValidationError("interpolate: track has no keyframes");
    if (frame < kfs.front().frame || frame > kfs.back().frame) {
        throw ValidationError("interpolate: frame " + std::to_string(frame) +
                              " outside keyframe span [" + std::to_string(kfs.front().frame) +
                              ", " + std::to_string(kfs.back().frame) + "] of cow " +
                              std::to_string(track.cow_id));
    }
    // First keyframe with kf.frame >= frame.
    auto hi = std::lower_bound(kfs.begin(), kfs.end(), frame,
                               [](const Keyframe& kf, FrameIndex f) { return kf.frame < f; });
    if (hi->frame == frame) return hi->box;  // exact at keyframes, bit for bit
    auto lo = hi - 1;

    const double t = static_cast<double>(frame - lo->frame) /
                     static_cast<double>(hi->frame - lo->frame);
    auto lerp = [t](double a, double b) { return a + (b - a) * t; };
    return BBox{lerp(lo->box.x, hi->box.x), lerp(lo->box.y, hi->box.y),
                lerp(lo->box.w, hi->box.w), lerp(lo->box.h, hi->box.h)};
}

std::vector<Keyframe> densify(const Track& track, FrameIndex first, FrameIndex last) {
    if (first > last) return {};
    std::vector<Keyframe> boxes;
    boxes.reserve(static_cast<std::size_t>(last - first + 1));
    for (FrameIndex f = first; f <= last; ++f) {
        boxes.push_back(Keyframe{f, interpolate(track, f)});
    }
    return boxes;
}

double iou(const BBox& a, const BBox& b) {
    const double ix = std::max(a.x, b.x);
    const double iy = std::max(a.y, b.y);
    const double ix2 = std::min(a.x + a.w, b.x + b.w);
    const double iy2 = std::min(a.y + a.h, b.y + b.h);
    const double iw = ix2 - ix;
    const double ih = iy2 - iy;
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return inter / uni;
}

std::vector<Track> tracks_from_coco(const CocoDocument& doc) {
    std::map<int, std::vector<Keyframe>> by_cow;
    for (const auto& ann : doc.annotations) {
        by_cow[ann.category_id].push_back(
            Keyframe{ann.image_id, BBox{ann.bbox[0], ann.bbox[1], ann.bbox[2], ann.bbox[3]}});
    }
    std::vector<Track> tracks;
    tracks.reserve(by_cow.size());
    for (auto& [cow_id, kfs] : by_cow) {
        std::sort(kfs.begin(), kfs.end(),
                  [](const Keyframe& a, const Keyframe& b) { return a.frame < b.frame; });
        for (std::size_t i = 1; i < kfs.size(); ++i) {
            if (kfs[i].frame == kfs[i - 1].frame) {
                throw ValidationError("coco: cow " + std::to_string(cow_id) +
                                      " has two boxes on frame " + std::to_string(kfs[i].frame));
            }
        }
        tracks.push_back(make_track(cow_id, std::move(kfs)));
    }
    return tracks;
}

}  // namespace herdpipe
