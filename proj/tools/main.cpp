// herdpipe: one binary, one subcommand per workflow. Exit codes: 0 success,
// 1 validation failure, 2 I/O or external-command failure.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "herdpipe/clipgeom.hpp"
#include "herdpipe/coco.hpp"
#include "herdpipe/dataset_export.hpp"
#include "herdpipe/eval_metrics.hpp"
#include "herdpipe/extproc.hpp"
#include "herdpipe/pipeline.hpp"
#include "herdpipe/synth.hpp"
#include "herdpipe/timesync.hpp"
#include "herdpipe/tracks.hpp"
#include "herdpipe/vtt.hpp"

using namespace herdpipe;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- helpers

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

LabelSet labels_from_csv(const std::string& csv) {
    std::vector<std::string> names;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) names.push_back(item);
    }
    return LabelSet(names);
}

SplitRatios ratios_from_string(const std::string& text) {
    double a, b, c;
    char sep1, sep2;
    std::istringstream ss(text);
    if (!(ss >> a >> sep1 >> b >> sep2 >> c) || sep1 != ':' || sep2 != ':') {
        throw ValidationError("ratios must look like 0.70:0.05:0.25, got '" + text + "'");
    }
    return SplitRatios{a, b, c};
}

std::pair<int, int> frame_size_from_string(const std::string& text) {
    int w, h;
    char sep;
    std::istringstream ss(text);
    if (!(ss >> w >> sep >> h) || sep != 'x' || w <= 0 || h <= 0) {
        throw ValidationError("frame size must look like 1920x1080, got '" + text + "'");
    }
    return {w, h};
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

// Labels for eval-action: plain text (one label per line) or .jsonl records
// joined by clip id.
struct LabelledSet {
    std::vector<std::string> ids;     // empty for plain files
    std::vector<std::string> labels;
};

LabelledSet read_label_file(const fs::path& path, const LabelSet& labels) {
    LabelledSet out;
    if (path.extension() != ".jsonl") {
        out.labels = read_lines(path);
        return out;
    }
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            out.ids.push_back(j.at("clip_id").get<std::string>());
            if (j.contains("label")) {
                out.labels.push_back(j.at("label").get<std::string>());
            } else {
                ActionScore score;
                score.clip_id = out.ids.back();
                for (const auto& [name, value] : j.at("scores").items()) {
                    score.scores.emplace_back(name, value.get<double>());
                }
                out.labels.push_back(score.argmax(labels).first);
            }
        } catch (const json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void align_by_clip_id(LabelledSet& gt, LabelledSet& pred) {
    if (gt.ids.empty() && pred.ids.empty()) return;  // plain mode, line-aligned
    if (gt.ids.empty() || pred.ids.empty()) {
        throw ValidationError("eval-action: mixing a plain label file with a jsonl file");
    }
    std::map<std::string, std::string> pred_by_id;
    for (std::size_t i = 0; i < pred.ids.size(); ++i) {
        if (!pred_by_id.emplace(pred.ids[i], pred.labels[i]).second) {
            throw ValidationError("eval-action: duplicate prediction for clip '" + pred.ids[i] +
                                  "'");
        }
    }
    std::vector<std::size_t> order(gt.ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return gt.ids[a] < gt.ids[b]; });
    LabelledSet gt2, pred2;
    for (std::size_t k : order) {
        auto it = pred_by_id.find(gt.ids[k]);
        if (it == pred_by_id.end()) {
            throw ValidationError("eval-action: no prediction for clip '" + gt.ids[k] + "'");
        }
        gt2.ids.push_back(gt.ids[k]);
        gt2.labels.push_back(gt.labels[k]);
        pred2.ids.push_back(it->first);
        pred2.labels.push_back(it->second);
    }
    gt = std::move(gt2);
    pred = std::move(pred2);
}

// ------------------------------------------------------------ subcommands

struct CommonOptions {
    double frame_rate = 30.0;
    std::string labels_csv = "Drinking,Grazing,Other";
    bool lenient = false;
};

int cmd_sync_fit(const fs::path& gps_path, double frame_rate, double max_rate_dev,
                 const GpsCsvSchema& schema, const std::string& out_path) {
    const auto parsed = parse_gps_csv(read_file(gps_path), schema);
    ClockFitOptions opts;
    opts.max_rate_deviation = max_rate_dev;
    const auto fit = fit_clock(parsed.samples, frame_rate, opts);

    std::cout << "samples:        " << fit.n_samples << "\n"
              << "malformed rows: " << parsed.malformed_rows << "\n"
              << "offset_ms:      " << std::setprecision(15) << fit.map.offset_ms << "\n"
              << "rate:           " << std::setprecision(12) << fit.map.rate << "\n"
              << "residual_rms:   " << std::setprecision(6) << fit.residual_rms_ms << " ms\n";
    for (const auto& err : parsed.row_errors) std::cerr << "warning: " << err << "\n";
    if (!out_path.empty()) {
        open_out(out_path) << clock_to_json(fit.map) << "\n";
    }
    return 0;
}

int cmd_sync_align(const fs::path& src_path, const fs::path& dst_path, FrameIndex frame,
                   FrameIndex range_end) {
    const ClockMap src = clock_from_json(read_file(src_path));
    const ClockMap dst = clock_from_json(read_file(dst_path));
    const FrameIndex last = range_end >= 0 ? range_end : frame;
    for (FrameIndex f = frame; f <= last; ++f) {
        std::cout << f << " -> " << align_frame(src, dst, f) << "\n";
    }
    return 0;
}

int cmd_vtt_check(const fs::path& path, const LabelSet& labels, bool lenient) {
    VttParseOptions opts;
    opts.labels = labels;
    opts.lenient = lenient;
    const auto parsed = parse_vtt(read_file(path), opts);
    for (const auto& warning : parsed.warnings) std::cerr << "warning: " << warning << "\n";

    const auto report = validate_cues(parsed.cues);
    std::cout << parsed.cues.size() << " cues, " << report.conflicts.size() << " conflicts, "
              << report.merge_candidates.size() << " merge candidates\n";
    for (const auto& [a, b] : report.conflicts) {
        const auto& ca = parsed.cues[a];
        const auto& cb = parsed.cues[b];
        std::cout << "conflict: Cow " << ca.cow_id << " " << ca.action << " ["
                  << format_timecode(ca.start) << ", " << format_timecode(ca.end) << ") overlaps "
                  << cb.action << " [" << format_timecode(cb.start) << ", "
                  << format_timecode(cb.end) << ")\n";
    }
    for (const auto& [a, b] : report.merge_candidates) {
        const auto& ca = parsed.cues[a];
        std::cout << "merge candidate: Cow " << ca.cow_id << " " << ca.action << " cues " << a
                  << " and " << b << "\n";
    }
    return report.ok() ? 0 : 1;
}

int cmd_interp(const fs::path& coco_path, int cow, FrameIndex frame, FrameIndex range_end) {
    const auto tracks = tracks_from_coco(read_coco_file(coco_path));
    const Track* track = nullptr;
    for (const auto& t : tracks) {
        if (t.cow_id == cow) track = &t;
    }
    if (track == nullptr) {
        throw ValidationError("no track for cow " + std::to_string(cow));
    }
    const FrameIndex last = range_end >= 0 ? range_end : frame;
    for (FrameIndex f = frame; f <= last; ++f) {
        const BBox box = interpolate(*track, f);
        std::cout << json{{"frame", f},
                          {"cow_id", cow},
                          {"bbox", {box.x, box.y, box.w, box.h}}}
                         .dump()
                  << "\n";
    }
    return 0;
}

int cmd_plan_clips(const fs::path& coco_path, const fs::path& vtt_path, const LabelSet& labels,
                   bool lenient, PlanParams params, bool double_segments, double video_len_s,
                   const std::string& out_path) {
    const auto tracks = tracks_from_coco(read_coco_file(coco_path));
    VttParseOptions vtt_opts;
    vtt_opts.labels = labels;
    vtt_opts.lenient = lenient;
    auto cues = parse_vtt(read_file(vtt_path), vtt_opts).cues;

    if (double_segments) {
        if (video_len_s <= 0) {
            throw ValidationError("--double-segments requires --video-len");
        }
        const Timecode video_len{std::llround(video_len_s * 1000.0)};
        for (auto& cue : cues) {
            const auto doubled = double_segment({cue.start, cue.end}, video_len);
            cue.start = doubled.start;
            cue.end = doubled.end;
        }
    }

    const auto result = plan_clips(tracks, cues, params);
    for (const auto& d : result.dropped) {
        std::cerr << "dropped: cow " << d.cow_id << " " << d.label << " [" << d.start_ms << ", "
                  << d.end_ms << ") -- " << d.reason << "\n";
    }
    std::cerr << result.clips.size() << " clips planned, " << result.dropped.size()
              << " windows dropped\n";
    if (out_path.empty() || out_path == "-") {
        write_plan_jsonl(std::cout, result.clips);
    } else {
        auto out = open_out(out_path);
        write_plan_jsonl(out, result.clips);
    }
    return 0;
}

int cmd_export_coco(const std::string& scene_path, const std::string& coco_path,
                    const std::string& file_pattern, const fs::path& out_path) {
    std::vector<Track> tracks;
    FrameMetadata meta;
    if (!scene_path.empty()) {
        const Scene scene = read_scene_file(scene_path);
        tracks = scene.tracks;
        for (const auto& track : tracks) {
            for (FrameIndex f = track.first_frame(); f <= track.last_frame(); ++f) {
                char name[256];
                std::snprintf(name, sizeof(name), file_pattern.c_str(),
                              static_cast<long long>(f));
                meta[f] = FrameMeta{name, scene.spec.frame_w, scene.spec.frame_h};
            }
        }
    } else {
        const CocoDocument doc = read_coco_file(coco_path);
        tracks = tracks_from_coco(doc);
        for (const auto& img : doc.images) {
            meta[img.id] = FrameMeta{img.file_name, img.width, img.height};
        }
        // Frames between keyframes need metadata too; reuse the pattern.
        for (const auto& track : tracks) {
            for (FrameIndex f = track.first_frame(); f <= track.last_frame(); ++f) {
                if (!meta.count(f)) {
                    char name[256];
                    std::snprintf(name, sizeof(name), file_pattern.c_str(),
                                  static_cast<long long>(f));
                    meta[f] = FrameMeta{name, doc.images.front().width,
                                        doc.images.front().height};
                }
            }
        }
    }
    const CocoDocument doc = export_coco(tracks, meta);
    write_coco_file(out_path, doc);
    std::cout << doc.annotations.size() << " annotations, " << doc.images.size() << " images, "
              << doc.categories.size() << " categories -> " << out_path.string() << "\n";
    return 0;
}

int cmd_split(const std::string& items_path, const std::string& plan_path,
              const std::string& manifest_path, std::int64_t count, const std::string& ratios_str,
              std::uint64_t seed, bool chronological, bool by_cue, const std::string& out_path) {
    const SplitRatios ratios = ratios_from_string(ratios_str);
    SplitAssignment split;

    if (by_cue) {
        // Leakage-aware mode: clips tiled from one cue are near-duplicates,
        // so whole cue groups are assigned together (ratios then apply to
        // cue groups, not clips).
        if (plan_path.empty()) throw ValidationError("--by-cue requires --from-plan");
        std::ifstream in(plan_path);
        if (!in) throw IoError("cannot open " + plan_path);
        const auto clips = read_plan_jsonl(in);
        std::map<std::string, std::vector<std::string>> groups;
        for (const auto& clip : clips) {
            if (clip.cue_index < 0) {
                throw ValidationError("--by-cue: clip '" + clip.id + "' carries no cue index");
            }
            groups["cue_" + std::to_string(clip.cue_index)].push_back(clip.id);
        }
        std::vector<std::string> group_ids;
        for (const auto& [gid, members] : groups) group_ids.push_back(gid);
        const SplitAssignment group_split =
            chronological ? split_items_chronological(group_ids, ratios)
                          : split_items(group_ids, ratios, seed);
        split.seed = seed;
        for (const auto& [gid, members] : groups) {
            for (const auto& id : members) split.assignment.emplace(id, group_split.at(gid));
        }
    } else {
        std::vector<std::string> ids;
        if (count > 0) {
            for (std::int64_t i = 0; i < count; ++i) ids.push_back("item_" + std::to_string(i));
        } else if (!items_path.empty()) {
            ids = read_lines(items_path);
        } else if (!plan_path.empty()) {
            std::ifstream in(plan_path);
            if (!in) throw IoError("cannot open " + plan_path);
            for (const auto& clip : read_plan_jsonl(in)) ids.push_back(clip.id);
        } else if (!manifest_path.empty()) {
            const auto lines = read_lines(manifest_path);
            for (std::size_t i = 1; i < lines.size(); ++i) {  // skip header
                const auto comma = lines[i].find(',');
                ids.push_back(lines[i].substr(0, comma));
            }
        } else {
            throw ValidationError("one of --count, --items, --from-plan, --n-from is required");
        }
        split = chronological ? split_items_chronological(ids, ratios)
                              : split_items(ids, ratios, seed);
    }

    const auto sizes = split.sizes();
    std::cerr << "train " << sizes[0] << ", val " << sizes[1] << ", test " << sizes[2] << "\n";
    if (out_path.empty() || out_path == "-") {
        write_split_csv(std::cout, split);
    } else {
        auto out = open_out(out_path);
        write_split_csv(out, split);
    }
    return 0;
}

int cmd_export_kinetics(const fs::path& plan_path, const std::string& split_path,
                        const std::string& ratios_str, std::uint64_t seed, const fs::path& root,
                        ExtractorConfig config, const std::string& split_out,
                        const std::string& manifest_out) {
    std::ifstream plan_in(plan_path);
    if (!plan_in) throw IoError("cannot open " + plan_path.string());
    const auto clips = read_plan_jsonl(plan_in);

    SplitAssignment split;
    if (!split_path.empty()) {
        std::ifstream in(split_path);
        if (!in) throw IoError("cannot open " + split_path);
        split = read_split_csv(in);
    } else {
        std::vector<std::string> ids;
        for (const auto& clip : clips) ids.push_back(clip.id);
        split = split_items(ids, ratios_from_string(ratios_str), seed);
    }
    if (!split_out.empty()) {
        auto out = open_out(split_out);
        write_split_csv(out, split);
    }

    const auto result = export_kinetics(clips, split, root, config);
    for (const auto& failure : result.failures) {
        std::cerr << "failed: " << failure.clip_id << " -- " << failure.reason << "\n";
    }
    std::cerr << result.manifest.size() << " clips exported, " << result.failures.size()
              << " failures\n";
    if (manifest_out.empty() || manifest_out == "-") {
        write_manifest_csv(std::cout, result.manifest);
    } else {
        auto out = open_out(manifest_out);
        write_manifest_csv(out, result.manifest);
    }
    return result.failures.empty() ? 0 : 2;
}

void print_det_report(const DetEvalResult& result, const ApParams& params,
                      const std::string& json_path) {
    std::cout << std::fixed << std::setprecision(4);
    std::cout << "category      AP        AR      #gt\n";
    for (const auto& m : result.per_class) {
        std::cout << std::left << std::setw(10) << ("cow_" + std::to_string(m.category))
                  << std::right << std::setw(8) << m.ap << "  " << std::setw(8) << m.ar << "  "
                  << std::setw(5) << m.gt_count << "\n";
    }
    std::cout << "mean AP " << result.mean_ap << ", mean AR " << result.mean_ar << " over "
              << params.iou_thresholds.size() << " IoU threshold(s)\n";
    if (!json_path.empty()) {
        json per_class = json::array();
        for (const auto& m : result.per_class) {
            per_class.push_back({{"category", m.category},
                                 {"ap", m.ap},
                                 {"ar", m.ar},
                                 {"gt_count", m.gt_count}});
        }
        open_out(json_path) << json{{"per_class", std::move(per_class)},
                                    {"mean_ap", result.mean_ap},
                                    {"mean_ar", result.mean_ar},
                                    {"iou_thresholds", params.iou_thresholds}}
                                   .dump(2)
                            << "\n";
    }
}

int cmd_eval_det(const fs::path& gt_path, const fs::path& pred_path,
                 const std::vector<double>& iou_thresholds, int recall_points, int max_det,
                 const std::string& json_path) {
    std::ifstream gt_in(gt_path), pred_in(pred_path);
    if (!gt_in) throw IoError("cannot open " + gt_path.string());
    if (!pred_in) throw IoError("cannot open " + pred_path.string());
    const auto gt = read_gt_jsonl(gt_in);
    const auto pred = read_detections_jsonl(pred_in);

    ApParams params;
    if (!iou_thresholds.empty()) params.iou_thresholds = iou_thresholds;
    params.recall_points = recall_points;
    params.max_detections_per_frame = max_det;
    print_det_report(average_precision(gt, pred, params), params, json_path);
    return 0;
}

int cmd_eval_action(const fs::path& gt_path, const fs::path& pred_path, const LabelSet& labels,
                    const std::string& json_path) {
    auto gt = read_label_file(gt_path, labels);
    auto pred = read_label_file(pred_path, labels);
    align_by_clip_id(gt, pred);

    const auto cm = confusion(gt.labels, pred.labels, labels);
    const auto acc = per_class_accuracy(cm);
    const auto sums = cm.row_sums();

    std::size_t width = 9;
    for (const auto& name : cm.labels) width = std::max(width, name.size() + 2);
    std::cout << std::setw(static_cast<int>(width)) << "";
    for (const auto& name : cm.labels) std::cout << std::setw(static_cast<int>(width)) << name;
    std::cout << std::setw(static_cast<int>(width)) << "#videos"
              << std::setw(static_cast<int>(width)) << "accuracy" << "\n";
    for (std::size_t i = 0; i < cm.labels.size(); ++i) {
        std::cout << std::setw(static_cast<int>(width)) << cm.labels[i];
        for (std::size_t j = 0; j < cm.labels.size(); ++j) {
            std::cout << std::setw(static_cast<int>(width)) << cm.counts[i][j];
        }
        std::cout << std::setw(static_cast<int>(width)) << sums[i];
        if (std::isnan(acc[i])) {
            std::cout << std::setw(static_cast<int>(width)) << "n/a";
        } else {
            std::ostringstream pct;
            pct << std::fixed << std::setprecision(1) << acc[i] * 100.0 << "%";
            std::cout << std::setw(static_cast<int>(width)) << pct.str();
        }
        std::cout << "\n";
    }
    std::cout << std::fixed << std::setprecision(4)
              << "micro accuracy (trace/total): " << overall_accuracy(cm) << "\n"
              << "macro accuracy (class mean):  " << macro_accuracy(cm) << "\n";

    if (!json_path.empty()) {
        open_out(json_path) << json{{"labels", cm.labels},
                                    {"counts", cm.counts},
                                    {"row_sums", sums},
                                    {"per_class_accuracy", acc},
                                    {"micro_accuracy", overall_accuracy(cm)},
                                    {"macro_accuracy", macro_accuracy(cm)},
                                    {"n", cm.total()}}
                                   .dump(2)
                            << "\n";
    }
    return 0;
}

int cmd_run_pipeline(const fs::path& det_path, const std::string& clock_path, double frame_rate,
                     const std::string& scorer_cmd, const std::string& scorer_workdir,
                     std::int64_t scorer_timeout_ms, int scorer_retries,
                     const std::string& scores_path, PipelineParams params,
                     const std::string& out_path, const std::string& vtt_path) {
    std::ifstream det_in(det_path);
    if (!det_in) throw IoError("cannot open " + det_path.string());
    const auto detections = read_detections_jsonl(det_in);

    ClockMap clock{0.0, 1.0, frame_rate};
    if (!clock_path.empty()) clock = clock_from_json(read_file(clock_path));

    std::unique_ptr<ActionScorer> scorer;
    if (!scores_path.empty()) {
        std::ifstream in(scores_path);
        if (!in) throw IoError("cannot open " + scores_path);
        scorer = std::make_unique<PrecomputedScorer>(read_scores_jsonl(in));
    } else if (!scorer_cmd.empty()) {
        ExternalScorerConfig config;
        config.command_template = scorer_cmd;
        config.workdir = scorer_workdir.empty() ? fs::temp_directory_path() / "herdpipe-scorer"
                                                : fs::path(scorer_workdir);
        config.timeout_ms = scorer_timeout_ms;
        config.retries = scorer_retries;
        scorer = std::make_unique<ExternalCommandScorer>(config);
    } else {
        throw ValidationError("one of --scorer or --scores is required");
    }

    const auto result = run_pipeline(detections, clock, *scorer, params);
    for (const auto& failure : result.failures) {
        std::cerr << "window failed: " << failure.clip_id << " -- " << failure.reason << "\n";
    }
    for (const auto& d : result.dropped) {
        std::cerr << "window dropped: cow " << d.cow_id << " [" << d.start_ms << ", " << d.end_ms
                  << ") -- " << d.reason << "\n";
    }
    std::cerr << result.events.size() << " events, " << result.failures.size() << " failures\n";

    if (out_path.empty() || out_path == "-") {
        write_events_jsonl(std::cout, result.events);
    } else {
        auto out = open_out(out_path);
        write_events_jsonl(out, result.events);
    }
    if (!vtt_path.empty()) {
        open_out(vtt_path) << events_to_vtt(result.events);
    }
    return 0;
}

int cmd_synth(const SceneSpec& spec, const std::string& out_path, const std::string& gt_coco,
              const std::string& det_out, const std::string& vtt_out,
              const std::string& scores_out, const std::string& file_pattern) {
    const Scene scene = generate(spec);
    if (!out_path.empty()) write_scene_file(out_path, scene);
    if (!gt_coco.empty()) {
        FrameMetadata meta;
        for (const auto& track : scene.tracks) {
            for (FrameIndex f = track.first_frame(); f <= track.last_frame(); ++f) {
                char name[256];
                std::snprintf(name, sizeof(name), file_pattern.c_str(),
                              static_cast<long long>(f));
                meta[f] = FrameMeta{name, spec.frame_w, spec.frame_h};
            }
        }
        write_coco_file(gt_coco, export_coco(scene.tracks, meta));
    }
    if (!det_out.empty()) {
        auto out = open_out(det_out);
        write_detections_jsonl(out, scene.detections);
    }
    if (!vtt_out.empty()) {
        open_out(vtt_out) << serialize_vtt(scene.cues);
    }
    if (!scores_out.empty()) {
        auto out = open_out(scores_out);
        write_scores_jsonl(out, scene.window_scores);
    }
    std::cerr << scene.tracks.size() << " tracks, " << scene.cues.size() << " cues, "
              << scene.detections.size() << " detections, " << scene.window_scores.size()
              << " window scores\n";
    return 0;
}

int cmd_render_overlays(const fs::path& coco_path, const std::string& vtt_path,
                        const LabelSet& labels, const fs::path& video, const fs::path& out_dir,
                        const std::string& extractor, double frame_rate, FrameIndex stride,
                        std::int64_t timeout_ms) {
    if (extractor.empty()) throw ValidationError("--extractor is required");
    const CocoDocument doc = read_coco_file(coco_path);
    const auto tracks = tracks_from_coco(doc);
    std::vector<BehaviourCue> cues;
    if (!vtt_path.empty()) {
        VttParseOptions opts;
        opts.labels = labels;
        cues = parse_vtt(read_file(vtt_path), opts).cues;
    }

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    FrameIndex first = std::numeric_limits<FrameIndex>::max();
    FrameIndex last = std::numeric_limits<FrameIndex>::min();
    for (const auto& track : tracks) {
        first = std::min(first, track.first_frame());
        last = std::max(last, track.last_frame());
    }
    if (tracks.empty()) throw ValidationError("no tracks to render");

    std::size_t emitted = 0, failed = 0;
    for (FrameIndex f = first; f <= last; f += stride) {
        // Box and label overlay expression for one frame (ffmpeg drawbox /
        // drawtext syntax).
        std::ostringstream boxes;
        bool any = false;
        const Timecode t{std::llround(static_cast<double>(f) * 1000.0 / frame_rate)};
        const auto active = active_cues(cues, t);
        for (const auto& track : tracks) {
            if (f < track.first_frame() || f > track.last_frame()) continue;
            const BBox box = interpolate(track, f);
            if (any) boxes << ",";
            any = true;
            boxes << "drawbox=x=" << std::llround(box.x) << ":y=" << std::llround(box.y)
                  << ":w=" << std::llround(box.w) << ":h=" << std::llround(box.h)
                  << ":color=yellow";
            std::string text = "Cow " + std::to_string(track.cow_id);
            for (const auto& cue : active) {
                if (cue.cow_id == track.cow_id) text += " " + cue.action;
            }
            boxes << ",drawtext=x=" << std::llround(box.x) << ":y="
                  << std::llround(box.y) - 24 << ":text='" << text << "':fontcolor=yellow";
        }
        if (!any) continue;

        const fs::path out_path = out_dir / ("frame_" + std::to_string(f) + ".png");
        const std::string cmd = substitute_template(
            extractor, {{"input", video.string()},
                        {"output", out_path.string()},
                        {"frame", std::to_string(f)},
                        {"fps", std::to_string(frame_rate)},
                        {"boxes", boxes.str()}});
        const auto r = run_command(cmd, timeout_ms);
        if (r.ok() && fs::exists(out_path)) {
            ++emitted;
            std::cout << out_path.string() << "\n";
        } else {
            ++failed;
            std::cerr << "failed: frame " << f << "\n";
        }
    }
    std::cerr << emitted << " frames rendered, " << failed << " failures\n";
    return failed == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cattle video annotation, dataset export, and evaluation toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "configuration file (ini/toml); sections per subcommand")
        ->envname("HERDPIPE_CONFIG");
    app.allow_config_extras(CLI::config_extras_mode::error);

    // ---- sync-fit ----
    auto* sync_fit = app.add_subcommand("sync-fit", "fit a stream-to-wall clock map from GPS CSV");
    fs::path sf_gps;
    double sf_fps = 30.0, sf_max_dev = 0.01;
    GpsCsvSchema sf_schema;
    std::string sf_out;
    sync_fit->add_option("--gps", sf_gps, "GPS CSV file")->required();
    sync_fit->add_option("--frame-rate", sf_fps, "camera frame rate (fps)");
    sync_fit->add_option("--max-rate-dev", sf_max_dev, "sanity bound on |rate-1|");
    sync_fit->add_option("--cts-col", sf_schema.stream_time, "stream-time column name");
    sync_fit->add_option("--date-col", sf_schema.date, "UTC date-time column name");
    sync_fit->add_option("--lat-col", sf_schema.lat, "latitude column name");
    sync_fit->add_option("--lon-col", sf_schema.lon, "longitude column name");
    sync_fit->add_option("-o,--out", sf_out, "write the clock map JSON here");

    // ---- sync-align ----
    auto* sync_align = app.add_subcommand("sync-align", "map frame indices between two cameras");
    fs::path sa_src, sa_dst;
    FrameIndex sa_frame = 0, sa_range_end = -1;
    sync_align->add_option("--src", sa_src, "source clock map JSON")->required();
    sync_align->add_option("--dst", sa_dst, "destination clock map JSON")->required();
    sync_align->add_option("--frame", sa_frame, "source frame index")->required();
    sync_align->add_option("--to", sa_range_end, "align the whole range [--frame, --to]");

    // ---- vtt-check ----
    auto* vtt_check = app.add_subcommand("vtt-check", "parse and validate behaviour annotations");
    fs::path vc_path;
    std::string vc_labels = "Drinking,Grazing,Other";
    bool vc_lenient = false;
    vtt_check->add_option("file", vc_path, "WebVTT annotation file")->required();
    vtt_check->add_option("--labels", vc_labels, "comma-separated closed label set");
    vtt_check->add_flag("--lenient", vc_lenient, "map unknown labels to Other with a warning");

    // ---- interp ----
    auto* interp_cmd = app.add_subcommand("interp", "interpolate a cow's box at given frames");
    fs::path in_coco;
    int in_cow = 0;
    FrameIndex in_frame = 0, in_to = -1;
    interp_cmd->add_option("--coco", in_coco, "COCO annotation document")->required();
    interp_cmd->add_option("--cow", in_cow, "cow id")->required();
    interp_cmd->add_option("--frame", in_frame, "frame index")->required();
    interp_cmd->add_option("--to", in_to, "interpolate the whole range [--frame, --to]");

    // ---- plan-clips ----
    auto* plan_cmd = app.add_subcommand("plan-clips", "resolve cues into clip extraction plans");
    fs::path pc_coco, pc_vtt;
    std::string pc_labels = "Drinking,Grazing,Other";
    bool pc_lenient = false, pc_double = false;
    double pc_video_len = 0.0;
    PlanParams pc_params;
    std::string pc_frame_size = "1920x1080";
    std::string pc_out;
    plan_cmd->add_option("--coco", pc_coco, "COCO annotation document")->required();
    plan_cmd->add_option("--vtt", pc_vtt, "behaviour annotation file")->required();
    plan_cmd->add_option("--video-ref", pc_params.video_ref, "source video reference")->required();
    plan_cmd->add_option("--frame-rate", pc_params.frame_rate, "frames per second");
    plan_cmd->add_option("--window", pc_params.window_s, "window length (s)");
    plan_cmd->add_option("--stride", pc_params.stride_s, "window stride (s)");
    plan_cmd->add_option("--out-size", pc_params.out_size, "output crop size in pixels");
    plan_cmd->add_option("--frame-size", pc_frame_size, "source frame size WxH");
    plan_cmd->add_option("--labels", pc_labels, "comma-separated closed label set");
    plan_cmd->add_flag("--lenient", pc_lenient, "lenient label parsing");
    plan_cmd->add_flag("--double-segments", pc_double,
                       "double each cue about its center before planning");
    plan_cmd->add_option("--video-len", pc_video_len, "video length (s), for --double-segments");
    plan_cmd->add_option("-o,--out", pc_out, "plan JSONL output path (default stdout)");

    // ---- export-coco ----
    auto* exco = app.add_subcommand("export-coco", "export dense identification ground truth");
    std::string ec_scene, ec_coco, ec_pattern = "frame_%06lld.jpg";
    fs::path ec_out;
    exco->add_option("--scene", ec_scene, "synthetic scene fixture as the track source");
    exco->add_option("--coco", ec_coco, "existing COCO document as the track source");
    exco->add_option("--file-pattern", ec_pattern, "printf pattern for frame file names");
    exco->add_option("-o,--out", ec_out, "output COCO JSON path")->required();

    // ---- split ----
    auto* split_cmd = app.add_subcommand("split", "deterministic train/val/test assignment");
    std::string sp_items, sp_plan, sp_manifest, sp_ratios = "0.70:0.05:0.25", sp_out;
    std::int64_t sp_count = 0;
    std::uint64_t sp_seed = 0;
    bool sp_chrono = false, sp_by_cue = false;
    split_cmd->add_option("--items", sp_items, "file with one item id per line");
    split_cmd->add_option("--from-plan", sp_plan, "take item ids from a plan JSONL");
    split_cmd->add_option("--n-from", sp_manifest, "take item ids from a CSV's first column");
    split_cmd->add_option("--count", sp_count, "generate item_0..item_N-1 synthetic ids");
    split_cmd->add_option("--ratios", sp_ratios, "train:val:test ratios");
    split_cmd->add_option("--seed", sp_seed, "shuffle seed");
    split_cmd->add_flag("--chronological", sp_chrono, "order-preserving split, no shuffle");
    split_cmd->add_flag("--by-cue", sp_by_cue,
                        "leakage-aware: keep all clips of one cue in the same split "
                        "(requires --from-plan)");
    split_cmd->add_option("-o,--out", sp_out, "split CSV output path (default stdout)");

    // ---- export-kinetics ----
    auto* exki = app.add_subcommand("export-kinetics",
                                    "materialize clips into <split>/<label>/<clip> layout");
    fs::path ek_plan, ek_root;
    std::string ek_split, ek_ratios = "0.70:0.05:0.25", ek_split_out, ek_manifest;
    std::uint64_t ek_seed = 0;
    ExtractorConfig ek_config;
    exki->add_option("--plan", ek_plan, "plan JSONL")->required();
    exki->add_option("--root", ek_root, "export root directory")->required();
    exki->add_option("--split-file", ek_split, "existing split CSV");
    exki->add_option("--ratios", ek_ratios, "ratios when computing the split here");
    exki->add_option("--seed", ek_seed, "seed when computing the split here");
    exki->add_option("--split-out", ek_split_out, "also write the computed split CSV here");
    exki->add_option("--extractor", ek_config.command_template,
                     "extractor template; placeholders {input} {output} {first_frame} "
                     "{last_frame} {start_ms} {end_ms} {fps} {crop}")
        ->required();
    exki->add_option("--ext", ek_config.extension, "clip file extension");
    exki->add_option("--frame-rate", ek_config.frame_rate, "frames per second");
    exki->add_option("--workers", ek_config.workers, "parallel extraction processes");
    exki->add_option("--timeout-ms", ek_config.timeout_ms, "per-clip extractor timeout");
    exki->add_option("--retries", ek_config.retries, "extractor retries");
    exki->add_option("-o,--out", ek_manifest, "manifest CSV output path (default stdout)");

    // ---- eval-det ----
    auto* evd = app.add_subcommand("eval-det", "detection AP/AR against ground truth");
    fs::path ed_gt, ed_pred;
    std::vector<double> ed_ious;
    int ed_recall_points = 101, ed_max_det = 100;
    std::string ed_json;
    evd->add_option("--gt", ed_gt, "ground-truth JSONL")->required();
    evd->add_option("--pred", ed_pred, "prediction JSONL")->required();
    evd->add_option("--iou", ed_ious,
                    "IoU threshold(s); e.g. --iou 0.5 for the single-threshold mode "
                    "(default: COCO 0.50:0.05:0.95)");
    evd->add_option("--recall-points", ed_recall_points, "interpolation points");
    evd->add_option("--max-det", ed_max_det, "detections kept per frame");
    evd->add_option("--json", ed_json, "also write a JSON report here");

    // ---- eval-action ----
    auto* eva = app.add_subcommand("eval-action", "confusion matrix and accuracies");
    fs::path ea_gt, ea_pred;
    std::string ea_labels = "Drinking,Grazing,Other", ea_json;
    eva->add_option("--gt", ea_gt, "true labels (text lines or jsonl)")->required();
    eva->add_option("--pred", ea_pred, "predicted labels (text lines or jsonl)")->required();
    eva->add_option("--labels", ea_labels, "comma-separated closed label set");
    eva->add_option("--json", ea_json, "also write a JSON report here");

    // ---- run-pipeline ----
    auto* rp = app.add_subcommand("run-pipeline",
                                  "detections -> crop windows -> scorer -> behaviour timeline");
    fs::path rp_det;
    std::string rp_clock, rp_scorer, rp_workdir, rp_scores, rp_out, rp_vtt;
    std::string rp_frame_size = "1920x1080";
    double rp_fps = 30.0;
    std::int64_t rp_timeout = 30000;
    int rp_retries = 0;
    PipelineParams rp_params;
    std::string rp_labels = "Drinking,Grazing,Other";
    rp->add_option("--detections", rp_det, "detection JSONL")->required();
    rp->add_option("--clock", rp_clock, "clock map JSON (default: identity at --frame-rate)");
    rp->add_option("--frame-rate", rp_fps, "frames per second when no clock map given");
    rp->add_option("--scorer", rp_scorer,
                   "scorer command template; placeholders {request} {response} {clip_id} "
                   "{input} {first_frame} {last_frame} {start_ms} {end_ms}");
    rp->add_option("--scorer-workdir", rp_workdir, "directory for request/response files");
    rp->add_option("--scorer-timeout-ms", rp_timeout, "per-window scorer timeout");
    rp->add_option("--scorer-retries", rp_retries, "scorer retries");
    rp->add_option("--scores", rp_scores, "precomputed score JSONL instead of a command");
    rp->add_option("--window", rp_params.window_s, "window length (s)");
    rp->add_option("--stride", rp_params.stride_s, "window stride (s)");
    rp->add_option("--gap-tol", rp_params.gap_tolerance_s, "tracklet gap tolerance (s)");
    rp->add_option("--min-duration", rp_params.min_duration_s, "drop events shorter than this (s)");
    rp->add_option("--out-size", rp_params.out_size, "crop size in pixels");
    rp->add_option("--frame-size", rp_frame_size, "source frame size WxH");
    rp->add_option("--workers", rp_params.workers, "concurrent scorer invocations");
    rp->add_option("--video-ref", rp_params.video_ref, "source video reference");
    rp->add_option("--labels", rp_labels, "comma-separated closed label set");
    rp->add_option("-o,--out", rp_out, "event JSONL output path (default stdout)");
    rp->add_option("--vtt", rp_vtt, "also render the events as WebVTT here");

    // ---- synth ----
    auto* sy = app.add_subcommand("synth", "generate a synthetic scene with known ground truth");
    SceneSpec sy_spec;
    double sy_duration_s = 120.0, sy_mean_event_s = 8.0;
    std::string sy_labels = "Drinking,Grazing,Other";
    std::string sy_out, sy_gt_coco, sy_det, sy_vtt, sy_scores, sy_pattern = "frame_%06lld.jpg";
    std::string sy_frame_size = "1920x1080";
    sy->add_option("--seed", sy_spec.seed, "PRNG seed");
    sy->add_option("--cows", sy_spec.n_cows, "number of cows");
    sy->add_option("--duration", sy_duration_s, "scene length (s)");
    sy->add_option("--fps", sy_spec.frame_rate, "frames per second");
    sy->add_option("--frame-size", sy_frame_size, "frame size WxH");
    sy->add_option("--keyframe-stride", sy_spec.keyframe_stride, "frames between keyframes");
    sy->add_option("--mean-event", sy_mean_event_s, "mean behaviour length (s)");
    sy->add_option("--jitter", sy_spec.box_jitter_px, "detection jitter sigma (px)");
    sy->add_option("--drop", sy_spec.drop_rate, "detection drop rate [0,1]");
    sy->add_option("--temperature", sy_spec.score_temperature, "score softening temperature");
    sy->add_option("--labels", sy_labels, "comma-separated label set");
    sy->add_option("--video-ref", sy_spec.video_ref, "video reference recorded in clip ids");
    sy->add_option("-o,--out", sy_out, "scene fixture JSON path");
    sy->add_option("--gt-coco", sy_gt_coco, "also export dense ground truth as COCO");
    sy->add_option("--det", sy_det, "also write the detections JSONL");
    sy->add_option("--vtt", sy_vtt, "also write the cues as WebVTT");
    sy->add_option("--scores", sy_scores, "also write the window scores JSONL");
    sy->add_option("--file-pattern", sy_pattern, "frame file-name pattern for --gt-coco");

    // ---- render-overlays ----
    auto* ro = app.add_subcommand("render-overlays",
                                  "emit annotated still frames via the external extractor");
    fs::path ro_coco, ro_video, ro_out;
    std::string ro_vtt, ro_labels = "Drinking,Grazing,Other", ro_extractor;
    double ro_fps = 30.0;
    FrameIndex ro_stride = 30;
    std::int64_t ro_timeout = 30000;
    ro->add_option("--coco", ro_coco, "COCO annotation document")->required();
    ro->add_option("--vtt", ro_vtt, "behaviour annotations to overlay");
    ro->add_option("--labels", ro_labels, "comma-separated label set");
    ro->add_option("--video", ro_video, "source video path")->required();
    ro->add_option("--out", ro_out, "output directory")->required();
    ro->add_option("--extractor", ro_extractor,
                   "frame renderer template; placeholders {input} {output} {frame} {fps} {boxes}")
        ->required();
    ro->add_option("--frame-rate", ro_fps, "frames per second");
    ro->add_option("--stride", ro_stride, "render every Nth annotated frame");
    ro->add_option("--timeout-ms", ro_timeout, "per-frame renderer timeout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        // Help and version exit 0; every parse problem is a validation error.
        return code == 0 ? 0 : 1;
    }

    try {
        if (*sync_fit) return cmd_sync_fit(sf_gps, sf_fps, sf_max_dev, sf_schema, sf_out);
        if (*sync_align) return cmd_sync_align(sa_src, sa_dst, sa_frame, sa_range_end);
        if (*vtt_check) return cmd_vtt_check(vc_path, labels_from_csv(vc_labels), vc_lenient);
        if (*interp_cmd) return cmd_interp(in_coco, in_cow, in_frame, in_to);
        if (*plan_cmd) {
            const auto [w, h] = frame_size_from_string(pc_frame_size);
            pc_params.frame_w = w;
            pc_params.frame_h = h;
            return cmd_plan_clips(pc_coco, pc_vtt, labels_from_csv(pc_labels), pc_lenient,
                                  pc_params, pc_double, pc_video_len, pc_out);
        }
        if (*exco) {
            if (ec_scene.empty() == ec_coco.empty()) {
                throw ValidationError("exactly one of --scene or --coco is required");
            }
            return cmd_export_coco(ec_scene, ec_coco, ec_pattern, ec_out);
        }
        if (*split_cmd) {
            return cmd_split(sp_items, sp_plan, sp_manifest, sp_count, sp_ratios, sp_seed,
                             sp_chrono, sp_by_cue, sp_out);
        }
        if (*exki) {
            return cmd_export_kinetics(ek_plan, ek_split, ek_ratios, ek_seed, ek_root, ek_config,
                                       ek_split_out, ek_manifest);
        }
        if (*evd) {
            return cmd_eval_det(ed_gt, ed_pred, ed_ious, ed_recall_points, ed_max_det, ed_json);
        }
        if (*eva) return cmd_eval_action(ea_gt, ea_pred, labels_from_csv(ea_labels), ea_json);
        if (*rp) {
            const auto [w, h] = frame_size_from_string(rp_frame_size);
            rp_params.frame_w = w;
            rp_params.frame_h = h;
            rp_params.labels = labels_from_csv(rp_labels);
            return cmd_run_pipeline(rp_det, rp_clock, rp_fps, rp_scorer, rp_workdir, rp_timeout,
                                    rp_retries, rp_scores, rp_params, rp_out, rp_vtt);
        }
        if (*sy) {
            const auto [w, h] = frame_size_from_string(sy_frame_size);
            sy_spec.frame_w = w;
            sy_spec.frame_h = h;
            sy_spec.duration_ms = std::llround(sy_duration_s * 1000.0);
            sy_spec.mean_event_ms = std::llround(sy_mean_event_s * 1000.0);
            sy_spec.labels = labels_from_csv(sy_labels);
            return cmd_synth(sy_spec, sy_out, sy_gt_coco, sy_det, sy_vtt, sy_scores, sy_pattern);
        }
        if (*ro) {
            return cmd_render_overlays(ro_coco, ro_vtt, labels_from_csv(ro_labels), ro_video,
                                       ro_out, ro_extractor, ro_fps, ro_stride, ro_timeout);
        }
        throw ValidationError("no subcommand selected");
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ExternalCommandError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
