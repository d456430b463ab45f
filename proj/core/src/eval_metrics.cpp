#include "herdpipe/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

namespace herdpipe {

using nlohmann::json;

MatchResult match_detections(std::span<const GroundTruthBox> gt, std::span<const Detection> pred,
                             double iou_threshold) {
    if (!(iou_threshold > 0.0) || iou_threshold > 1.0) {
        throw ValidationError("match_detections: iou threshold must be in (0, 1]");
    }

    using Key = std::pair<std::int64_t, int>;  // frame, category
    std::map<Key, std::vector<std::size_t>> gt_groups, pred_groups;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        gt_groups[{gt[i].frame_id, gt[i].category}].push_back(i);
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pred_groups[{pred[i].frame_id, pred[i].category}].push_back(i);
    }

    MatchResult result;
    std::vector<bool> gt_matched(gt.size(), false);
    std::vector<bool> pred_matched(pred.size(), false);

    for (auto& [key, pred_idx] : pred_groups) {
        // Descending score, input order on ties: deterministic.
        std::stable_sort(pred_idx.begin(), pred_idx.end(), [&](std::size_t a, std::size_t b) {
            return pred[a].score > pred[b].score;
        });
        auto git = gt_groups.find(key);
        if (git == gt_groups.end()) continue;
        const auto& gt_idx = git->second;

        for (std::size_t pi : pred_idx) {
            double best_iou = 0.0;
            std::size_t best_gt = gt.size();
            for (std::size_t gi : gt_idx) {
                if (gt_matched[gi]) continue;
                const double v = iou(pred[pi].box, gt[gi].box);
                if (v >= iou_threshold && v > best_iou) {  // IoU tie keeps the lower gt index
                    best_iou = v;
                    best_gt = gi;
                }
            }
            if (best_gt < gt.size()) {
                gt_matched[best_gt] = true;
                pred_matched[pi] = true;
                result.matches.push_back(DetectionMatch{pi, best_gt, best_iou});
            }
        }
    }
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!gt_matched[i]) result.unmatched_gt.push_back(i);
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!pred_matched[i]) result.unmatched_pred.push_back(i);
    }
    return result;
}

std::vector<double> coco_iou_thresholds() {
    std::vector<double> out;
    for (int i = 0; i <= 9; ++i) out.push_back(0.5 + 0.05 * i);
    return out;
}

namespace {

// One class, one IoU threshold: greedy matching in global score order with a
// per-frame detection cap, then the 101-point interpolated AP and the max
// recall.
struct ClassThresholdMetrics {
    double ap = 0.0;
    double recall = 0.0;
};

ClassThresholdMetrics evaluate_class_at_threshold(
    const std::map<std::int64_t, std::vector<const GroundTruthBox*>>& gt_by_frame,
    std::span<const Detection*> ranked_preds,  // already score-ordered and capped
    std::size_t n_gt, double threshold, int recall_points) {
    std::map<std::int64_t, std::vector<bool>> gt_used;
    for (const auto& [frame, boxes] : gt_by_frame) {
        gt_used[frame] = std::vector<bool>(boxes.size(), false);
    }

    std::vector<bool> is_tp(ranked_preds.size(), false);
    for (std::size_t k = 0; k < ranked_preds.size(); ++k) {
        const Detection* det = ranked_preds[k];
        auto git = gt_by_frame.find(det->frame_id);
        if (git == gt_by_frame.end()) continue;
        const auto& boxes = git->second;
        auto& used = gt_used[det->frame_id];
        double best_iou = 0.0;
        std::size_t best = boxes.size();
        for (std::size_t g = 0; g < boxes.size(); ++g) {
            if (used[g]) continue;
            const double v = iou(det->box, boxes[g]->box);
            if (v >= threshold && v > best_iou) {
                best_iou = v;
                best = g;
            }
        }
        if (best < boxes.size()) {
            used[best] = true;
            is_tp[k] = true;
        }
    }

    // Precision/recall staircase over the global ranking.
    std::vector<double> precision(ranked_preds.size());
    std::vector<double> recall(ranked_preds.size());
    std::size_t tp = 0;
    for (std::size_t k = 0; k < ranked_preds.size(); ++k) {
        if (is_tp[k]) ++tp;
        precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
        recall[k] = static_cast<double>(tp) / static_cast<double>(n_gt);
    }
    // Monotone envelope from the right.
    for (std::size_t k = precision.size(); k-- > 1;) {
        precision[k - 1] = std::max(precision[k - 1], precision[k]);
    }

    ClassThresholdMetrics out;
    out.recall = recall.empty() ? 0.0 : recall.back();

    double ap_sum = 0.0;
    for (int i = 0; i < recall_points; ++i) {
        const double r = static_cast<double>(i) / static_cast<double>(recall_points - 1);
        // First rank reaching recall r; zero precision beyond the staircase.
        auto it = std::lower_bound(recall.begin(), recall.end(), r);
        if (it != recall.end()) {
            ap_sum += precision[static_cast<std::size_t>(it - recall.begin())];
        }
    }
    out.ap = ap_sum / static_cast<double>(recall_points);
    return out;
}

}  // namespace

DetEvalResult average_precision(std::span<const GroundTruthBox> gt,
                                std::span<const Detection> pred, const ApParams& params) {
    if (gt.empty()) throw ValidationError("average_precision: empty ground truth");
    if (params.iou_thresholds.empty()) {
        throw ValidationError("average_precision: no IoU thresholds");
    }
    for (double t : params.iou_thresholds) {
        if (!(t > 0.0) || t > 1.0) {
            throw ValidationError("average_precision: IoU threshold " + std::to_string(t) +
                                  " outside (0, 1]");
        }
    }
    if (params.recall_points < 2) {
        throw ValidationError("average_precision: need at least 2 recall points");
    }

    std::set<int> categories;
    for (const auto& g : gt) categories.insert(g.category);

    DetEvalResult result;
    for (int category : categories) {
        std::map<std::int64_t, std::vector<const GroundTruthBox*>> gt_by_frame;
        std::size_t n_gt = 0;
        for (const auto& g : gt) {
            if (g.category == category) {
                gt_by_frame[g.frame_id].push_back(&g);
                ++n_gt;
            }
        }

        // Cap detections per frame (top scores), then rank globally by
        // score; ties resolve by frame then input order, deterministically.
        std::map<std::int64_t, std::vector<const Detection*>> pred_by_frame;
        for (const auto& d : pred) {
            if (d.category == category) pred_by_frame[d.frame_id].push_back(&d);
        }
        std::vector<const Detection*> ranked;
        for (auto& [frame, dets] : pred_by_frame) {
            std::stable_sort(dets.begin(), dets.end(),
                             [](const Detection* a, const Detection* b) {
                                 return a->score > b->score;
                             });
            const std::size_t cap = params.max_detections_per_frame > 0
                                        ? static_cast<std::size_t>(params.max_detections_per_frame)
                                        : dets.size();
            for (std::size_t k = 0; k < dets.size() && k < cap; ++k) ranked.push_back(dets[k]);
        }
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const Detection* a, const Detection* b) { return a->score > b->score; });

        ClassDetMetrics metrics;
        metrics.category = category;
        metrics.gt_count = n_gt;
        for (double threshold : params.iou_thresholds) {
            const auto m = evaluate_class_at_threshold(gt_by_frame, ranked, n_gt, threshold,
                                                       params.recall_points);
            metrics.ap += m.ap;
            metrics.ar += m.recall;
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

std::int64_t ConfusionMatrix::total() const {
    std::int64_t t = 0;
    for (const auto& row : counts) {
        for (std::int64_t v : row) t += v;
    }
    return t;
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t t = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
    return t;
}

std::vector<std::int64_t> ConfusionMatrix::row_sums() const {
    std::vector<std::int64_t> sums(counts.size(), 0);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        for (std::int64_t v : counts[i]) sums[i] += v;
    }
    return sums;
}

ConfusionMatrix confusion(std::span<const std::string> gt_labels,
                          std::span<const std::string> pred_labels, const LabelSet& labels) {
    if (gt_labels.size() != pred_labels.size()) {
        throw ValidationError("confusion: label lists differ in length (" +
                              std::to_string(gt_labels.size()) + " vs " +
                              std::to_string(pred_labels.size()) + ")");
    }
    ConfusionMatrix cm;
    cm.labels = labels.names();
    cm.counts.assign(labels.size(), std::vector<std::int64_t>(labels.size(), 0));
    for (std::size_t k = 0; k < gt_labels.size(); ++k) {
        const int i = labels.index_of(gt_labels[k]);
        const int j = labels.index_of(pred_labels[k]);
        if (i < 0) throw ValidationError("confusion: unknown true label '" + gt_labels[k] + "'");
        if (j < 0) {
            throw ValidationError("confusion: unknown predicted label '" + pred_labels[k] + "'");
        }
        cm.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]++;
    }
    return cm;
}

std::vector<double> per_class_accuracy(const ConfusionMatrix& cm) {
    const auto sums = cm.row_sums();
    std::vector<double> acc(cm.counts.size());
    for (std::size_t i = 0; i < cm.counts.size(); ++i) {
        acc[i] = sums[i] > 0 ? static_cast<double>(cm.counts[i][i]) / static_cast<double>(sums[i])
                             : std::numeric_limits<double>::quiet_NaN();
    }
    return acc;
}

double overall_accuracy(const ConfusionMatrix& cm) {
    const std::int64_t total = cm.total();
    if (total == 0) throw ValidationError("overall_accuracy: all-zero confusion matrix");
    return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

double macro_accuracy(const ConfusionMatrix& cm) {
    const auto acc = per_class_accuracy(cm);
    double sum = 0.0;
    std::size_t defined = 0;
    for (double a : acc) {
        if (!std::isnan(a)) {
            sum += a;
            ++defined;
        }
    }
    if (defined == 0) throw ValidationError("macro_accuracy: all-zero confusion matrix");
    return sum / static_cast<double>(defined);
}

void write_gt_jsonl(std::ostream& out, std::span<const GroundTruthBox> gt) {
    for (const auto& g : gt) {
        out << json{{"frame", g.frame_id},
                    {"bbox", {g.box.x, g.box.y, g.box.w, g.box.h}},
                    {"category", g.category}}
                   .dump()
            << '\n';
    }
}

namespace {

json parse_record(const std::string& line, std::size_t line_no) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw ValidationError("detections: line " + std::to_string(line_no) +
                              ": invalid json: " + e.what());
    }
}

BBox bbox_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw ValidationError("bbox must be [x, y, w, h]");
    return BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

std::vector<GroundTruthBox> read_gt_jsonl(std::istream& in) {
    std::vector<GroundTruthBox> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = parse_record(line, line_no);
        try {
            out.push_back(GroundTruthBox{j.at("frame").get<std::int64_t>(),
                                         bbox_from_json(j.at("bbox")),
                                         j.at("category").get<int>()});
        } catch (const json::exception& e) {
            throw ValidationError("detections: line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_detections_jsonl(std::ostream& out, std::span<const Detection> dets) {
    for (const auto& d : dets) {
        out << json{{"frame", d.frame_id},
                    {"bbox", {d.box.x, d.box.y, d.box.w, d.box.h}},
                    {"category", d.category},
                    {"score", d.score}}
                   .dump()
            << '\n';
    }
}

std::vector<Detection> read_detections_jsonl(std::istream& in) {
    std::vector<Detection> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = parse_record(line, line_no);
        try {
            Detection d{j.at("frame").get<std::int64_t>(), bbox_from_json(j.at("bbox")),
                        j.at("category").get<int>(), j.at("score").get<double>()};
            if (!(d.score >= 0.0) || !(d.score <= 1.0)) {
                throw ValidationError("detections: line " + std::to_string(line_no) +
                                      ": score must be in [0, 1]");
            }
            out.push_back(d);
        } catch (const json::exception& e) {
            throw ValidationError("detections: line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace herdpipe
