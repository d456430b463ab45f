#include "herdpipe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace herdpipe {

using nlohmann::json;

namespace {

void validate_spec(const SceneSpec& spec) {
    if (spec.n_cows < 1) throw ValidationError("scene: need at least one cow");
    if (spec.frame_w <= 0 || spec.frame_h <= 0) {
        throw ValidationError("scene: frame dimensions must be positive");
    }
    if (spec.duration_ms <= 0) throw ValidationError("scene: duration must be positive");
    if (!(spec.frame_rate > 0.0)) throw ValidationError("scene: frame rate must be positive");
    if (spec.keyframe_stride < 1) throw ValidationError("scene: keyframe stride must be >= 1");
    if (spec.drop_rate < 0.0 || spec.drop_rate > 1.0) {
        throw ValidationError("scene: drop rate must be in [0, 1]");
    }
    if (spec.box_jitter_px < 0.0 || spec.score_temperature < 0.0) {
        throw ValidationError("scene: noise parameters must be non-negative");
    }
    if (!(spec.min_box_px > 0.0) || spec.max_box_px < spec.min_box_px) {
        throw ValidationError("scene: bad box size range");
    }
    if (spec.max_box_px > spec.frame_w || spec.max_box_px > spec.frame_h) {
        throw ValidationError("scene: cows cannot fit the frame");
    }
    if (!spec.label_probs.empty()) {
        if (spec.label_probs.size() != spec.labels.size()) {
            throw ValidationError("scene: label_probs size must match the label set");
        }
        double sum = 0.0;
        for (double p : spec.label_probs) {
            if (p < 0.0) throw ValidationError("scene: label probabilities must be >= 0");
            sum += p;
        }
        if (!(sum > 0.0)) throw ValidationError("scene: label probabilities sum to zero");
    }
    if (std::llround(spec.window_s * 1000.0) <= 0 || std::llround(spec.stride_s * 1000.0) <= 0) {
        throw ValidationError("scene: window and stride must be positive");
    }
}

// One-hot for `index` softened by temperature: softmax(onehot / T) computed
// in the overflow-free form. T = 0 degenerates to the exact one-hot.
std::vector<double> soften_one_hot(std::size_t index, std::size_t k, double temperature) {
    std::vector<double> scores(k, 0.0);
    if (temperature == 0.0) {
        scores[index] = 1.0;
        return scores;
    }
    const double e = std::exp(-1.0 / temperature);  // underflows to 0 for tiny T
    const double denom = 1.0 + static_cast<double>(k - 1) * e;
    for (std::size_t i = 0; i < k; ++i) {
        scores[i] = (i == index ? 1.0 : e) / denom;
    }
    return scores;
}

int sample_label(DeterministicRng& rng, const std::vector<double>& probs, int exclude) {
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (static_cast<int>(i) != exclude) total += probs[i];
    }
    const double draw = rng.uniform_real() * total;
    double cum = 0.0;
    int last = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (static_cast<int>(i) == exclude) continue;
        cum += probs[i];
        last = static_cast<int>(i);
        if (draw < cum) return last;
    }
    return last;
}

constexpr std::int64_t kMinEventMs = 3000;  // keeps >= 2 window midpoints per cue

}  // namespace

Scene generate(const SceneSpec& spec) {
    validate_spec(spec);
    DeterministicRng rng(spec.seed);

    Scene scene;
    scene.spec = spec;

    const std::int64_t total_frames =
        std::llround(static_cast<double>(spec.duration_ms) * spec.frame_rate / 1000.0);
    const FrameIndex last_frame = total_frames - 1;
    const FrameIndex last_kf = last_frame - (last_frame % spec.keyframe_stride);
    if (last_kf < spec.keyframe_stride) {
        throw ValidationError("scene: duration too short for two keyframes");
    }
    auto frame_ms = [&](FrameIndex f) {
        return std::llround(static_cast<double>(f) * 1000.0 / spec.frame_rate);
    };
    const std::int64_t track_end_ms = frame_ms(last_kf);

    std::vector<double> probs = spec.label_probs;
    if (probs.empty()) probs.assign(spec.labels.size(), 1.0);

    // Tracks: constant-size boxes on a clamped random walk, keyframes every
    // stride frames. Motion is piecewise linear by construction.
    for (int cow = 1; cow <= spec.n_cows; ++cow) {
        const double w = rng.uniform_real(spec.min_box_px, spec.max_box_px);
        const double h = rng.uniform_real(spec.min_box_px, spec.max_box_px);
        const double max_step = 2.0 * spec.keyframe_stride;  // px per keyframe interval
        double x = rng.uniform_real(0.0, spec.frame_w - w);
        double y = rng.uniform_real(0.0, spec.frame_h - h);

        std::vector<Keyframe> kfs;
        for (FrameIndex f = 0; f <= last_kf; f += spec.keyframe_stride) {
            kfs.push_back(Keyframe{f, BBox{x, y, w, h}});
            x = std::clamp(x + rng.uniform_real(-max_step, max_step), 0.0, spec.frame_w - w);
            y = std::clamp(y + rng.uniform_real(-max_step, max_step), 0.0, spec.frame_h - h);
        }
        scene.tracks.push_back(make_track(cow, std::move(kfs)));
    }

    // Cues: a gap-free schedule per cow over [0, track_end_ms), adjacent
    // labels always distinct so events and cues correspond one to one.
    for (const auto& track : scene.tracks) {
        std::int64_t t = 0;
        int prev_label = -1;
        while (t < track_end_ms) {
            std::int64_t len = std::max<std::int64_t>(
                kMinEventMs,
                std::llround(rng.uniform_real(0.5, 1.5) *
                             static_cast<double>(spec.mean_event_ms)));
            if (track_end_ms - (t + len) < kMinEventMs) len = track_end_ms - t;  // absorb tail
            const int label = sample_label(rng, probs, probs.size() > 1 ? prev_label : -1);
            scene.cues.push_back(BehaviourCue{track.cow_id, spec.labels.at(
                                                  static_cast<std::size_t>(label)),
                                              Timecode{t}, Timecode{t + len}});
            prev_label = label;
            t += len;
        }
    }

    // Detections: the interpolated boxes, optionally jittered and dropped.
    // Noise draws happen only when the corresponding parameter is non-zero,
    // so a zero-noise scene is the exact dense ground truth.
    for (FrameIndex f = 0; f <= last_kf; ++f) {
        for (const auto& track : scene.tracks) {
            if (spec.drop_rate > 0.0 && rng.uniform_real() < spec.drop_rate) continue;
            BBox box = interpolate(track, f);
            if (spec.box_jitter_px > 0.0) {
                box.x += rng.normal() * spec.box_jitter_px;
                box.y += rng.normal() * spec.box_jitter_px;
                box.w = std::max(1.0, box.w + rng.normal() * spec.box_jitter_px);
                box.h = std::max(1.0, box.h + rng.normal() * spec.box_jitter_px);
            }
            scene.detections.push_back(Detection{f, box, track.cow_id, 1.0});
        }
    }

    // Window scores for the canonical tiling, the same tiling the pipeline
    // derives from gap-free detections.
    const std::int64_t window_ms = std::llround(spec.window_s * 1000.0);
    const std::int64_t stride_ms = std::llround(spec.stride_s * 1000.0);
    for (const auto& track : scene.tracks) {
        for (const auto& win : tile_windows(0, track_end_ms, window_ms, stride_ms)) {
            const std::int64_t mid = (win.start.ms + win.end.ms) / 2;
            int label_index = spec.labels.index_of("Other") >= 0 ? spec.labels.index_of("Other") : 0;
            for (const auto& cue : scene.cues) {
                if (cue.cow_id == track.cow_id && cue.start.ms <= mid && mid < cue.end.ms) {
                    label_index = spec.labels.index_of(cue.action);
                    break;
                }
            }
            const auto values = soften_one_hot(static_cast<std::size_t>(label_index),
                                               spec.labels.size(), spec.score_temperature);
            ActionScore score;
            score.clip_id = spec.video_ref + "_cow" + std::to_string(track.cow_id) + "_" +
                            std::to_string(win.start.ms) + "-" + std::to_string(win.end.ms);
            for (std::size_t i = 0; i < spec.labels.size(); ++i) {
                score.scores.emplace_back(spec.labels.at(i), values[i]);
            }
            score.normalized = true;
            scene.window_scores.push_back(std::move(score));
        }
    }
    return scene;
}

std::vector<GroundTruthBox> scene_ground_truth(const Scene& scene) {
    std::vector<GroundTruthBox> gt;
    for (const auto& track : scene.tracks) {
        for (const auto& [frame, box] : densify(track, track.first_frame(), track.last_frame())) {
            gt.push_back(GroundTruthBox{frame, box, track.cow_id});
        }
    }
    return gt;
}

ActionScore OracleScorer::score(const ClipSpec& clip) {
    const auto& spec = scene_.spec;
    const std::int64_t mid = (clip.start_ms + clip.end_ms) / 2;
    int label_index = spec.labels.index_of("Other") >= 0 ? spec.labels.index_of("Other") : 0;
    for (const auto& cue : scene_.cues) {
        if (cue.cow_id == clip.cow_id && cue.start.ms <= mid && mid < cue.end.ms) {
            label_index = spec.labels.index_of(cue.action);
            break;
        }
    }
    const auto values = soften_one_hot(static_cast<std::size_t>(label_index), spec.labels.size(),
                                       spec.score_temperature);
    ActionScore score;
    score.clip_id = clip.id;
    for (std::size_t i = 0; i < spec.labels.size(); ++i) {
        score.scores.emplace_back(spec.labels.at(i), values[i]);
    }
    score.normalized = true;
    return score;
}

namespace {

// The oracle's own IoU, written from corner coordinates; shares nothing
// with tracks::iou.
double iou_naive(const BBox& a, const BBox& b) {
    const double ax2 = a.x + a.w, ay2 = a.y + a.h;
    const double bx2 = b.x + b.w, by2 = b.y + b.h;
    const double ow = std::min(ax2, bx2) - std::max(a.x, b.x);
    const double oh = std::min(ay2, by2) - std::max(a.y, b.y);
    if (ow <= 0.0 || oh <= 0.0) return 0.0;
    const double inter = ow * oh;
    return inter / (a.w * a.h + b.w * b.h - inter);
}

}  // namespace

OracleDetMetrics oracle_detection_metrics(std::span<const GroundTruthBox> gt,
                                          std::span<const Detection> pred,
                                          const ApParams& params, const OracleLimits& limits) {
    if (gt.empty()) throw ValidationError("oracle: empty ground truth");

    std::map<std::pair<std::int64_t, int>, std::size_t> gt_counts, pred_counts;
    for (const auto& g : gt) gt_counts[{g.frame_id, g.category}]++;
    for (const auto& d : pred) pred_counts[{d.frame_id, d.category}]++;
    for (const auto& [key, n] : gt_counts) {
        if (n > limits.max_gt_per_frame_class) {
            throw ValidationError("oracle: instance too large (> " +
                                  std::to_string(limits.max_gt_per_frame_class) +
                                  " GT boxes in one frame-class)");
        }
    }
    for (const auto& [key, n] : pred_counts) {
        if (n > limits.max_pred_per_frame_class) {
            throw ValidationError("oracle: instance too large (> " +
                                  std::to_string(limits.max_pred_per_frame_class) +
                                  " predictions in one frame-class)");
        }
    }

    std::set<int> categories;
    for (const auto& g : gt) categories.insert(g.category);

    OracleDetMetrics result;
    for (int category : categories) {
        std::vector<std::size_t> gt_idx;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (gt[i].category == category) gt_idx.push_back(i);
        }

        // Per-frame cap by repeated max-scan, then a global ranking by
        // repeated next-best selection (score desc, frame asc, input order).
        std::vector<std::size_t> candidates;
        {
            std::set<std::int64_t> frames;
            for (std::size_t i = 0; i < pred.size(); ++i) {
                if (pred[i].category == category) frames.insert(pred[i].frame_id);
            }
            for (std::int64_t frame : frames) {
                std::vector<std::size_t> in_frame;
                for (std::size_t i = 0; i < pred.size(); ++i) {
                    if (pred[i].category == category && pred[i].frame_id == frame) {
                        in_frame.push_back(i);
                    }
                }
                std::vector<bool> taken(in_frame.size(), false);
                const std::size_t cap = params.max_detections_per_frame > 0
                                            ? static_cast<std::size_t>(
                                                  params.max_detections_per_frame)
                                            : in_frame.size();
                for (std::size_t k = 0; k < in_frame.size() && k < cap; ++k) {
                    std::size_t best = in_frame.size();
                    for (std::size_t j = 0; j < in_frame.size(); ++j) {
                        if (taken[j]) continue;
                        if (best == in_frame.size() ||
                            pred[in_frame[j]].score > pred[in_frame[best]].score) {
                            best = j;
                        }
                    }
                    taken[best] = true;
                    candidates.push_back(in_frame[best]);
                }
            }
        }
        std::vector<std::size_t> ranking;
        {
            std::vector<bool> picked(candidates.size(), false);
            for (std::size_t k = 0; k < candidates.size(); ++k) {
                std::size_t best = candidates.size();
                for (std::size_t j = 0; j < candidates.size(); ++j) {
                    if (picked[j]) continue;
                    if (best == candidates.size()) {
                        best = j;
                        continue;
                    }
                    const Detection& a = pred[candidates[j]];
                    const Detection& b = pred[candidates[best]];
                    if (a.score > b.score ||
                        (a.score == b.score &&
                         (a.frame_id < b.frame_id ||
                          (a.frame_id == b.frame_id && candidates[j] < candidates[best])))) {
                        best = j;
                    }
                }
                picked[best] = true;
                ranking.push_back(candidates[best]);
            }
        }

        OracleClassMetrics metrics;
        metrics.category = category;
        for (double threshold : params.iou_thresholds) {
            // Greedy matching by exhaustive scan.
            std::vector<bool> gt_matched(gt_idx.size(), false);
            std::vector<bool> is_tp(ranking.size(), false);
            for (std::size_t k = 0; k < ranking.size(); ++k) {
                const Detection& det = pred[ranking[k]];
                double best_iou = 0.0;
                std::size_t best = gt_idx.size();
                for (std::size_t g = 0; g < gt_idx.size(); ++g) {
                    if (gt_matched[g] || gt[gt_idx[g]].frame_id != det.frame_id) continue;
                    const double v = iou_naive(det.box, gt[gt_idx[g]].box);
                    if (v >= threshold && v > best_iou) {
                        best_iou = v;
                        best = g;
                    }
                }
                if (best < gt_idx.size()) {
                    gt_matched[best] = true;
                    is_tp[k] = true;
                }
            }

            // Raw staircase.
            std::vector<double> precision(ranking.size()), recall(ranking.size());
            std::size_t tp = 0;
            for (std::size_t k = 0; k < ranking.size(); ++k) {
                if (is_tp[k]) ++tp;
                precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
                recall[k] = static_cast<double>(tp) / static_cast<double>(gt_idx.size());
            }

            // Interpolated precision point by point: at recall threshold r,
            // the best precision anywhere at recall >= r.
            double ap_sum = 0.0;
            for (int i = 0; i < params.recall_points; ++i) {
                const double r = static_cast<double>(i) /
                                 static_cast<double>(params.recall_points - 1);
                double best_precision = 0.0;
                for (std::size_t k = 0; k < ranking.size(); ++k) {
                    if (recall[k] >= r) best_precision = std::max(best_precision, precision[k]);
                }
                ap_sum += best_precision;
            }
            metrics.ap += ap_sum / static_cast<double>(params.recall_points);
            metrics.ar += ranking.empty() ? 0.0 : recall.back();
        }
        metrics.ap /= static_cast<double>(params.iou_thresholds.size());
        metrics.ar /= static_cast<double>(params.iou_thresholds.size());
        result.per_class.push_back(metrics);
    }

    for (const auto& m : result.per_class) {
        result.mean_ap += m.ap;
        result.mean_ar += m.ar;
    }
    result.mean_ap /= static_cast<double>(result.per_class.size());
    result.mean_ar /= static_cast<double>(result.per_class.size());
    return result;
}

double oracle_accuracy(std::span<const std::string> gt_labels,
                       std::span<const std::string> pred_labels) {
    if (gt_labels.size() != pred_labels.size() || gt_labels.empty()) {
        throw ValidationError("oracle_accuracy: label lists must be equal-length and non-empty");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < gt_labels.size(); ++i) {
        if (gt_labels[i] == pred_labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(gt_labels.size());
}

std::string scene_to_json(const Scene& scene) {
    const auto& spec = scene.spec;
    json j;
    j["format"] = "herdpipe-scene/1";
    j["prng"] = {{"algorithm", DeterministicRng::kAlgorithm}, {"seed", spec.seed}};
    j["spec"] = {{"seed", spec.seed},
                 {"n_cows", spec.n_cows},
                 {"frame_w", spec.frame_w},
                 {"frame_h", spec.frame_h},
                 {"duration_ms", spec.duration_ms},
                 {"frame_rate", spec.frame_rate},
                 {"keyframe_stride", spec.keyframe_stride},
                 {"labels", spec.labels.names()},
                 {"label_probs", spec.label_probs},
                 {"mean_event_ms", spec.mean_event_ms},
                 {"box_jitter_px", spec.box_jitter_px},
                 {"drop_rate", spec.drop_rate},
                 {"score_temperature", spec.score_temperature},
                 {"min_box_px", spec.min_box_px},
                 {"max_box_px", spec.max_box_px},
                 {"window_s", spec.window_s},
                 {"stride_s", spec.stride_s},
                 {"video_ref", spec.video_ref}};
    j["tracks"] = json::array();
    for (const auto& track : scene.tracks) {
        json kfs = json::array();
        for (const auto& kf : track.keyframes) {
            kfs.push_back({kf.frame, kf.box.x, kf.box.y, kf.box.w, kf.box.h});
        }
        j["tracks"].push_back({{"cow_id", track.cow_id}, {"keyframes", std::move(kfs)}});
    }
    j["cues"] = json::array();
    for (const auto& cue : scene.cues) {
        j["cues"].push_back({{"cow_id", cue.cow_id},
                             {"action", cue.action},
                             {"start_ms", cue.start.ms},
                             {"end_ms", cue.end.ms}});
    }
    j["detections"] = json::array();
    for (const auto& det : scene.detections) {
        j["detections"].push_back({{"frame", det.frame_id},
                                   {"bbox", {det.box.x, det.box.y, det.box.w, det.box.h}},
                                   {"category", det.category},
                                   {"score", det.score}});
    }
    j["window_scores"] = json::array();
    for (const auto& score : scene.window_scores) {
        json values = json::object();
        for (const auto& [label, value] : score.scores) values[label] = value;
        j["window_scores"].push_back({{"clip_id", score.clip_id},
                                      {"scores", std::move(values)},
                                      {"normalized", score.normalized}});
    }
    return j.dump(2);
}

Scene scene_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scene: invalid json: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "herdpipe-scene/1") {
            throw ValidationError("scene: unknown format tag");
        }
        if (j.at("prng").at("algorithm").get<std::string>() != DeterministicRng::kAlgorithm) {
            throw ValidationError("scene: fixture generated with an unknown PRNG");
        }
        Scene scene;
        const json& s = j.at("spec");
        scene.spec.seed = s.at("seed").get<std::uint64_t>();
        scene.spec.n_cows = s.at("n_cows").get<int>();
        scene.spec.frame_w = s.at("frame_w").get<int>();
        scene.spec.frame_h = s.at("frame_h").get<int>();
        scene.spec.duration_ms = s.at("duration_ms").get<std::int64_t>();
        scene.spec.frame_rate = s.at("frame_rate").get<double>();
        scene.spec.keyframe_stride = s.at("keyframe_stride").get<int>();
        scene.spec.labels = LabelSet(s.at("labels").get<std::vector<std::string>>());
        scene.spec.label_probs = s.at("label_probs").get<std::vector<double>>();
        scene.spec.mean_event_ms = s.at("mean_event_ms").get<std::int64_t>();
        scene.spec.box_jitter_px = s.at("box_jitter_px").get<double>();
        scene.spec.drop_rate = s.at("drop_rate").get<double>();
        scene.spec.score_temperature = s.at("score_temperature").get<double>();
        scene.spec.min_box_px = s.at("min_box_px").get<double>();
        scene.spec.max_box_px = s.at("max_box_px").get<double>();
        scene.spec.window_s = s.at("window_s").get<double>();
        scene.spec.stride_s = s.at("stride_s").get<double>();
        scene.spec.video_ref = s.at("video_ref").get<std::string>();

        for (const auto& jt : j.at("tracks")) {
            std::vector<Keyframe> kfs;
            for (const auto& jk : jt.at("keyframes")) {
                kfs.push_back(Keyframe{jk[0].get<FrameIndex>(),
                                       BBox{jk[1].get<double>(), jk[2].get<double>(),
                                            jk[3].get<double>(), jk[4].get<double>()}});
            }
            scene.tracks.push_back(make_track(jt.at("cow_id").get<int>(), std::move(kfs)));
        }
        for (const auto& jc : j.at("cues")) {
            scene.cues.push_back(BehaviourCue{jc.at("cow_id").get<int>(),
                                              jc.at("action").get<std::string>(),
                                              Timecode{jc.at("start_ms").get<std::int64_t>()},
                                              Timecode{jc.at("end_ms").get<std::int64_t>()}});
        }
        for (const auto& jd : j.at("detections")) {
            const auto& box = jd.at("bbox");
            scene.detections.push_back(Detection{jd.at("frame").get<std::int64_t>(),
                                                 BBox{box[0].get<double>(), box[1].get<double>(),
                                                      box[2].get<double>(), box[3].get<double>()},
                                                 jd.at("category").get<int>(),
                                                 jd.at("score").get<double>()});
        }
        for (const auto& js : j.at("window_scores")) {
            ActionScore score;
            score.clip_id = js.at("clip_id").get<std::string>();
            for (const auto& [label, value] : js.at("scores").items()) {
                score.scores.emplace_back(label, value.get<double>());
            }
            std::sort(score.scores.begin(), score.scores.end());
            score.normalized = js.value("normalized", false);
            scene.window_scores.push_back(std::move(score));
        }
        return scene;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scene: malformed fixture: ") + e.what());
    }
}

Scene read_scene_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return scene_from_json(buf.str());
}

void write_scene_file(const std::filesystem::path& path, const Scene& scene) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << scene_to_json(scene) << '\n';
}

}  // namespace herdpipe
