#include "herdpipe/clipgeom.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

namespace herdpipe {

using nlohmann::json;

TimeInterval double_segment(TimeInterval seg, Timecode video_len) {
    if (seg.start >= seg.end) {
        throw ValidationError("double_segment: empty interval");
    }
    if (seg.start.ms < 0 || seg.end.ms > video_len.ms) {
        throw ValidationError("double_segment: segment outside [0, video_len]");
    }
    const std::int64_t d = seg.duration_ms();
    std::int64_t start = seg.start.ms - d / 2;
    std::int64_t end = seg.end.ms + (d - d / 2);
    start = std::max<std::int64_t>(start, 0);
    end = std::min(end, video_len.ms);
    return TimeInterval{Timecode{start}, Timecode{end}};
}

BBox square_box(const BBox& b) {
    if (!b.valid()) throw ValidationError("square_box: invalid box");
    const double side = std::max(b.w, b.h);
    return BBox{b.cx() - side / 2.0, b.cy() - side / 2.0, side, side};
}

std::optional<SourcePixel> crop_pixel_map(const CropTransform& t, int u, int v) {
    if (t.out_size <= 0) throw ValidationError("crop_pixel_map: out_size must be positive");
    if (u < 0 || u >= t.out_size || v < 0 || v >= t.out_size) {
        throw ValidationError("crop_pixel_map: output pixel outside [0, out_size)");
    }
    const double side = t.src_box.w;  // square by construction
    const double x = t.src_box.x + static_cast<double>(u) * side / t.out_size;
    const double y = t.src_box.y + static_cast<double>(v) * side / t.out_size;
    if (x < 0.0 || x >= t.frame_w || y < 0.0 || y >= t.frame_h) {
        return std::nullopt;  // PAD, zero-valued
    }
    return SourcePixel{x, y};
}

std::vector<TimeInterval> tile_windows(std::int64_t start_ms, std::int64_t end_ms,
                                       std::int64_t window_ms, std::int64_t stride_ms) {
    if (window_ms <= 0 || stride_ms <= 0) {
        throw ValidationError("tile_windows: window and stride must be positive");
    }
    if (start_ms >= end_ms) return {};
    std::vector<TimeInterval> windows;
    for (std::int64_t t = start_ms; t + window_ms <= end_ms; t += stride_ms) {
        windows.push_back(TimeInterval{Timecode{t}, Timecode{t + window_ms}});
    }
    // Tail-anchored final window so the end of the behaviour is covered.
    if (windows.empty() || windows.back().end.ms < end_ms) {
        windows.push_back(TimeInterval{Timecode{end_ms - window_ms}, Timecode{end_ms}});
    }
    return windows;
}

std::int64_t window_frame_count(double window_s, double frame_rate) {
    return std::llround(window_s * frame_rate);
}

namespace {

std::string sanitize_ref(std::string_view ref) {
    std::string out;
    out.reserve(ref.size());
    for (char c : ref) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
        out += ok ? c : '-';
    }
    return out;
}

}  // namespace

PlanResult plan_clips(std::span<const Track> tracks, std::span<const BehaviourCue> cues,
                      const PlanParams& params) {
    if (params.frame_w <= 0 || params.frame_h <= 0) {
        throw ValidationError("plan_clips: frame dimensions must be positive");
    }
    const std::int64_t window_ms = std::llround(params.window_s * 1000.0);
    const std::int64_t stride_ms = std::llround(params.stride_s * 1000.0);
    const std::int64_t n_frames = window_frame_count(params.window_s, params.frame_rate);
    if (n_frames <= 0) throw ValidationError("plan_clips: window shorter than one frame");

    std::map<int, std::vector<const Track*>> by_cow;
    for (const auto& t : tracks) by_cow[t.cow_id].push_back(&t);

    PlanResult result;
    for (std::size_t cue_index = 0; cue_index < cues.size(); ++cue_index) {
        const auto& cue = cues[cue_index];
        auto it = by_cow.find(cue.cow_id);
        if (it == by_cow.end()) {
            throw ValidationError("plan_clips: cue 'Cow " + std::to_string(cue.cow_id) + " " +
                                  cue.action + " " + format_timecode(cue.start) + " --> " +
                                  format_timecode(cue.end) + "' has no track for cow " +
                                  std::to_string(cue.cow_id));
        }
        for (const auto& win : tile_windows(cue.start.ms, cue.end.ms, window_ms, stride_ms)) {
            const FrameIndex first =
                round_half_down(static_cast<double>(win.start.ms) * params.frame_rate / 1000.0);
            const FrameIndex last = first + n_frames - 1;

            const Track* track = nullptr;
            for (const Track* cand : it->second) {
                if (first >= cand->first_frame() && last <= cand->last_frame()) {
                    track = cand;
                    break;
                }
            }
            if (track == nullptr) {
                result.dropped.push_back(DroppedWindow{
                    cue.cow_id, cue.action, win.start.ms, win.end.ms,
                    "frames [" + std::to_string(first) + ", " + std::to_string(last) +
                        "] outside the keyframe span of cow " + std::to_string(cue.cow_id)});
                continue;
            }

            ClipSpec clip;
            clip.video_ref = params.video_ref;
            clip.cow_id = cue.cow_id;
            clip.label = cue.action;
            clip.cue_index = static_cast<std::int64_t>(cue_index);
            clip.first_frame = first;
            clip.last_frame = last;
            clip.start_ms = win.start.ms;
            clip.end_ms = win.end.ms;
            clip.id = sanitize_ref(params.video_ref) + "_cow" + std::to_string(cue.cow_id) + "_" +
                      std::to_string(win.start.ms) + "-" + std::to_string(win.end.ms);
            clip.crops.reserve(static_cast<std::size_t>(n_frames));
            for (FrameIndex f = first; f <= last; ++f) {
                clip.crops.push_back(CropTransform{square_box(interpolate(*track, f)),
                                                   params.out_size, params.frame_w,
                                                   params.frame_h});
            }
            result.clips.push_back(std::move(clip));
        }
    }
    return result;
}

namespace {

json clip_to_json(const ClipSpec& clip) {
    json crops = json::array();
    for (const auto& c : clip.crops) {
        crops.push_back({c.src_box.x, c.src_box.y, c.src_box.w, c.src_box.h});
    }
    return json{{"id", clip.id},
                {"video_ref", clip.video_ref},
                {"cow_id", clip.cow_id},
                {"label", clip.label},
                {"cue_index", clip.cue_index},
                {"first_frame", clip.first_frame},
                {"last_frame", clip.last_frame},
                {"start_ms", clip.start_ms},
                {"end_ms", clip.end_ms},
                {"out_size", clip.crops.empty() ? 256 : clip.crops.front().out_size},
                {"frame_w", clip.crops.empty() ? 0 : clip.crops.front().frame_w},
                {"frame_h", clip.crops.empty() ? 0 : clip.crops.front().frame_h},
                {"crops", std::move(crops)}};
}

ClipSpec clip_from_json(const json& j) {
    ClipSpec clip;
    try {
        clip.id = j.at("id").get<std::string>();
        clip.video_ref = j.at("video_ref").get<std::string>();
        clip.cow_id = j.at("cow_id").get<int>();
        clip.label = j.at("label").get<std::string>();
        clip.cue_index = j.value("cue_index", std::int64_t{-1});
        clip.first_frame = j.at("first_frame").get<FrameIndex>();
        clip.last_frame = j.at("last_frame").get<FrameIndex>();
        clip.start_ms = j.at("start_ms").get<std::int64_t>();
        clip.end_ms = j.at("end_ms").get<std::int64_t>();
        const int out_size = j.at("out_size").get<int>();
        const int frame_w = j.at("frame_w").get<int>();
        const int frame_h = j.at("frame_h").get<int>();
        for (const auto& jc : j.at("crops")) {
            if (!jc.is_array() || jc.size() != 4) {
                throw ValidationError("plan: crop must be [x, y, w, h]");
            }
            clip.crops.push_back(CropTransform{
                BBox{jc[0].get<double>(), jc[1].get<double>(), jc[2].get<double>(),
                     jc[3].get<double>()},
                out_size, frame_w, frame_h});
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("plan: malformed clip record: ") + e.what());
    }
    return clip;
}

}  // namespace

void write_plan_jsonl(std::ostream& out, std::span<const ClipSpec> clips) {
    for (const auto& clip : clips) {
        out << clip_to_json(clip).dump() << '\n';
    }
}

std::vector<ClipSpec> read_plan_jsonl(std::istream& in) {
    std::vector<ClipSpec> clips;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError("plan: line " + std::to_string(line_no) + ": invalid json: " +
                                  e.what());
        }
        clips.push_back(clip_from_json(j));
    }
    return clips;
}

}  // namespace herdpipe
