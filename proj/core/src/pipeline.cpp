#include "herdpipe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "herdpipe/extproc.hpp"

namespace herdpipe {

using nlohmann::json;

std::pair<std::string, double> ActionScore::argmax(const LabelSet& labels) const {
    if (scores.empty()) throw ScorerError("score record '" + clip_id + "' has no scores");
    double sum = 0.0;
    int best = -1;
    int best_rank = 0;
    for (std::size_t k = 0; k < scores.size(); ++k) {
        const auto& [label, value] = scores[k];
        const int rank = labels.index_of(label);
        if (rank < 0) {
            throw ScorerError("score record '" + clip_id + "' has unknown label '" + label + "'");
        }
        if (!std::isfinite(value) || value < 0.0 || value > 1.0) {
            throw ScorerError("score record '" + clip_id + "' has score outside [0, 1] for '" +
                              label + "'");
        }
        sum += value;
        // Ties resolve to the earlier label in the configured set.
        if (best < 0 || value > scores[static_cast<std::size_t>(best)].second ||
            (value == scores[static_cast<std::size_t>(best)].second && rank < best_rank)) {
            best = static_cast<int>(k);
            best_rank = rank;
        }
    }
    if (normalized && std::abs(sum - 1.0) > 1e-6) {
        throw ScorerError("score record '" + clip_id + "' declared normalized but sums to " +
                          std::to_string(sum));
    }
    return scores[static_cast<std::size_t>(best)];
}

PrecomputedScorer::PrecomputedScorer(std::vector<ActionScore> scores) {
    for (auto& s : scores) {
        const std::string id = s.clip_id;
        if (!by_id_.emplace(id, std::move(s)).second) {
            throw ValidationError("precomputed scores: duplicate clip id '" + id + "'");
        }
    }
}

ActionScore PrecomputedScorer::score(const ClipSpec& clip) {
    auto it = by_id_.find(clip.id);
    if (it == by_id_.end()) {
        throw ScorerError("no precomputed score for clip '" + clip.id + "'");
    }
    return it->second;
}

ExternalCommandScorer::ExternalCommandScorer(ExternalScorerConfig config)
    : config_(std::move(config)) {
    if (config_.command_template.empty()) {
        throw ValidationError("external scorer: command template is required");
    }
    if (config_.workdir.empty()) {
        throw ValidationError("external scorer: workdir is required");
    }
    std::filesystem::create_directories(config_.workdir);
}

ActionScore ExternalCommandScorer::score(const ClipSpec& clip) {
    const auto request_path = config_.workdir / (clip.id + ".request.jsonl");
    const auto response_path = config_.workdir / (clip.id + ".response.jsonl");

    {
        json crops = json::array();
        for (const auto& c : clip.crops) {
            crops.push_back({c.src_box.x, c.src_box.y, c.src_box.w, c.src_box.h});
        }
        std::ofstream req(request_path);
        if (!req) throw IoError("cannot write " + request_path.string());
        req << json{{"clip_id", clip.id},
                    {"input", clip.video_ref},
                    {"first_frame", clip.first_frame},
                    {"last_frame", clip.last_frame},
                    {"start_ms", clip.start_ms},
                    {"end_ms", clip.end_ms},
                    {"out_size", clip.crops.empty() ? 256 : clip.crops.front().out_size},
                    {"crops", std::move(crops)}}
                   .dump()
            << '\n';
    }

    const std::string cmd =
        substitute_template(config_.command_template,
                            {{"request", request_path.string()},
                             {"response", response_path.string()},
                             {"clip_id", clip.id},
                             {"input", clip.video_ref},
                             {"first_frame", std::to_string(clip.first_frame)},
                             {"last_frame", std::to_string(clip.last_frame)},
                             {"start_ms", std::to_string(clip.start_ms)},
                             {"end_ms", std::to_string(clip.end_ms)}});

    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        const CommandResult r = run_command(cmd, config_.timeout_ms);
        if (r.timed_out) {
            last_error = "scorer timed out";
            continue;
        }
        if (r.exit_code != 0) {
            last_error = "scorer exited with code " + std::to_string(r.exit_code);
            continue;
        }
        std::ifstream resp(response_path);
        if (!resp) {
            last_error = "scorer wrote no response file";
            continue;
        }
        try {
            for (const auto& record : read_scores_jsonl(resp)) {
                if (record.clip_id == clip.id) return record;
            }
            last_error = "response has no record for clip '" + clip.id + "'";
        } catch (const ValidationError& e) {
            last_error = e.what();
        }
    }
    throw ScorerError("clip '" + clip.id + "': " + last_error);
}

std::vector<BehaviourEvent> merge_events(int cow_id, std::span<const WindowResult> windows,
                                         std::int64_t min_duration_ms) {
    std::vector<BehaviourEvent> events;
    std::size_t k = 0;
    while (k < windows.size()) {
        // Maximal run of one label.
        std::size_t run_end = k + 1;
        double score_sum = windows[k].score;
        while (run_end < windows.size() && windows[run_end].label == windows[k].label) {
            score_sum += windows[run_end].score;
            ++run_end;
        }
        events.push_back(BehaviourEvent{cow_id, windows[k].label, Timecode{windows[k].start_ms},
                                        Timecode{windows[run_end - 1].end_ms},
                                        score_sum / static_cast<double>(run_end - k)});
        k = run_end;
    }
    // Overlapping neighbours (stride < window) are cut at the midpoint.
    for (std::size_t i = 1; i < events.size(); ++i) {
        if (events[i - 1].end > events[i].start) {
            const std::int64_t mid = (events[i - 1].end.ms + events[i].start.ms) / 2;
            events[i - 1].end.ms = mid;
            events[i].start.ms = mid;
        }
    }
    std::erase_if(events, [&](const BehaviourEvent& e) {
        return e.end.ms - e.start.ms < min_duration_ms;
    });
    return events;
}

PipelineResult run_pipeline(std::span<const Detection> detections, const ClockMap& clock,
                            ActionScorer& scorer, const PipelineParams& params) {
    validate_clock(clock);
    if (params.frame_w <= 0 || params.frame_h <= 0) {
        throw ValidationError("run_pipeline: frame dimensions must be positive");
    }
    const double fps = clock.frame_rate;
    const std::int64_t window_ms = std::llround(params.window_s * 1000.0);
    const std::int64_t stride_ms = std::llround(params.stride_s * 1000.0);
    const std::int64_t gap_ms = std::llround(params.gap_tolerance_s * 1000.0);
    const std::int64_t min_duration_ms = std::llround(params.min_duration_s * 1000.0);
    const std::int64_t n_frames = window_frame_count(params.window_s, fps);
    if (window_ms <= 0 || stride_ms <= 0 || n_frames <= 0) {
        throw ValidationError("run_pipeline: window and stride must be positive");
    }

    // Per cow, one box per frame (highest score wins on duplicates).
    std::map<int, std::map<FrameIndex, const Detection*>> per_cow;
    for (const auto& det : detections) {
        auto& frames = per_cow[det.category];
        auto [it, inserted] = frames.emplace(det.frame_id, &det);
        if (!inserted && det.score > it->second->score) it->second = &det;
    }

    auto frame_ms = [&](FrameIndex f) {
        return std::llround(static_cast<double>(f) * 1000.0 / fps);
    };

    PipelineResult result;
    struct Job {
        int cow_id;
        std::size_t tracklet;  ///< per-cow tracklet ordinal
        ClipSpec clip;
    };
    std::vector<Job> jobs;

    for (const auto& [cow_id, frames] : per_cow) {
        // Split into tracklets on gaps beyond the tolerance.
        std::vector<std::vector<Keyframe>> tracklets;
        FrameIndex prev = -1;
        for (const auto& [frame, det] : frames) {
            if (prev < 0 || frame_ms(frame) - frame_ms(prev) > gap_ms) {
                tracklets.emplace_back();
            }
            tracklets.back().push_back(Keyframe{frame, det->box});
            prev = frame;
        }

        for (std::size_t tk = 0; tk < tracklets.size(); ++tk) {
            const Track track = make_track(cow_id, tracklets[tk]);
            const std::int64_t t0 = frame_ms(track.first_frame());
            const std::int64_t t1 = frame_ms(track.last_frame());
            for (const auto& win : tile_windows(t0, t1, window_ms, stride_ms)) {
                const FrameIndex first =
                    round_half_down(static_cast<double>(win.start.ms) * fps / 1000.0);
                const FrameIndex last = first + n_frames - 1;
                if (first < track.first_frame() || last > track.last_frame()) {
                    result.dropped.push_back(
                        DroppedWindow{cow_id, "", win.start.ms, win.end.ms,
                                      "window frames outside tracklet span"});
                    continue;
                }
                Job job;
                job.cow_id = cow_id;
                job.tracklet = tk;
                job.clip.video_ref = params.video_ref;
                job.clip.cow_id = cow_id;
                job.clip.first_frame = first;
                job.clip.last_frame = last;
                job.clip.start_ms = win.start.ms;
                job.clip.end_ms = win.end.ms;
                job.clip.id = params.video_ref + "_cow" + std::to_string(cow_id) + "_" +
                              std::to_string(win.start.ms) + "-" + std::to_string(win.end.ms);
                job.clip.crops.reserve(static_cast<std::size_t>(n_frames));
                for (FrameIndex f = first; f <= last; ++f) {
                    job.clip.crops.push_back(CropTransform{square_box(interpolate(track, f)),
                                                           params.out_size, params.frame_w,
                                                           params.frame_h});
                }
                jobs.push_back(std::move(job));
            }
        }
    }

    // Score windows, concurrently up to the worker limit; the reduction
    // below is index-ordered so the output is independent of scheduling.
    struct Scored {
        bool ok = false;
        std::string label;
        double score = 0.0;
        std::string error;
    };
    std::vector<Scored> scored(jobs.size());
    auto score_one = [&](std::size_t i) {
        try {
            const ActionScore s = scorer.score(jobs[i].clip);
            const auto [label, value] = s.argmax(params.labels);
            scored[i] = Scored{true, label, value, ""};
        } catch (const Error& e) {
            scored[i] = Scored{false, "", 0.0, e.what()};
        }
    };
    const int workers = std::max(1, params.workers);
    if (workers == 1 || jobs.size() <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) score_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
                    score_one(i);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    // Assemble per (cow, tracklet) window sequences in job order.
    std::map<std::pair<int, std::size_t>, std::vector<WindowResult>> sequences;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!scored[i].ok) {
            result.failures.push_back(WindowFailure{jobs[i].clip.id, scored[i].error});
            continue;
        }
        sequences[{jobs[i].cow_id, jobs[i].tracklet}].push_back(
            WindowResult{jobs[i].clip.start_ms, jobs[i].clip.end_ms, scored[i].label,
                         scored[i].score});
    }
    for (const auto& [key, windows] : sequences) {
        auto events = merge_events(key.first, windows, min_duration_ms);
        result.events.insert(result.events.end(), events.begin(), events.end());
    }
    std::stable_sort(result.events.begin(), result.events.end(),
                     [](const BehaviourEvent& a, const BehaviourEvent& b) {
                         if (a.cow_id != b.cow_id) return a.cow_id < b.cow_id;
                         return a.start < b.start;
                     });
    return result;
}

void write_events_jsonl(std::ostream& out, std::span<const BehaviourEvent> events) {
    for (const auto& e : events) {
        out << json{{"cow_id", e.cow_id},
                    {"label", e.label},
                    {"start_ms", e.start.ms},
                    {"end_ms", e.end.ms},
                    {"confidence", e.confidence}}
                   .dump()
            << '\n';
    }
}

std::vector<BehaviourEvent> read_events_jsonl(std::istream& in) {
    std::vector<BehaviourEvent> events;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            events.push_back(BehaviourEvent{j.at("cow_id").get<int>(),
                                            j.at("label").get<std::string>(),
                                            Timecode{j.at("start_ms").get<std::int64_t>()},
                                            Timecode{j.at("end_ms").get<std::int64_t>()},
                                            j.at("confidence").get<double>()});
        } catch (const json::exception& e) {
            throw ValidationError("events: line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return events;
}

std::string events_to_vtt(std::span<const BehaviourEvent> events) {
    std::vector<BehaviourCue> cues;
    cues.reserve(events.size());
    for (const auto& e : events) {
        cues.push_back(BehaviourCue{e.cow_id, e.label, e.start, e.end});
    }
    return serialize_vtt(cues);
}

void write_scores_jsonl(std::ostream& out, std::span<const ActionScore> scores) {
    for (const auto& s : scores) {
        json js = json::object();
        for (const auto& [label, value] : s.scores) js[label] = value;
        out << json{{"clip_id", s.clip_id}, {"scores", std::move(js)}, {"normalized", s.normalized}}
                   .dump()
            << '\n';
    }
}

std::vector<ActionScore> read_scores_jsonl(std::istream& in) {
    std::vector<ActionScore> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            ActionScore s;
            s.clip_id = j.at("clip_id").get<std::string>();
            for (const auto& [label, value] : j.at("scores").items()) {
                s.scores.emplace_back(label, value.get<double>());
            }
            std::sort(s.scores.begin(), s.scores.end());
            s.normalized = j.value("normalized", false);
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw ValidationError("scores: line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace herdpipe
