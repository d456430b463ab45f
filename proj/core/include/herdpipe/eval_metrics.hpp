#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "herdpipe/common.hpp"
#include "herdpipe/tracks.hpp"
#include "herdpipe/vtt.hpp"

namespace herdpipe {

/// A ground-truth box on one frame.
struct GroundTruthBox {
    std::int64_t frame_id = 0;
    BBox box;
    int category = 0;  ///< cow id

    bool operator==(const GroundTruthBox&) const = default;
};

/// A detector output. score in [0, 1].
struct Detection {
    std::int64_t frame_id = 0;
    BBox box;
    int category = 0;
    double score = 1.0;

    bool operator==(const Detection&) const = default;
};

struct DetectionMatch {
    std::size_t pred_index = 0;  ///< into the input prediction list
    std::size_t gt_index = 0;    ///< into the input ground-truth list
    double iou = 0.0;
};

struct MatchResult {
    std::vector<DetectionMatch> matches;
    std::vector<std::size_t> unmatched_gt;
    std::vector<std::size_t> unmatched_pred;
};

/// Greedy score-ordered matching per frame and category: each prediction, in
/// descending score order, claims the unmatched ground-truth box of highest
/// IoU >= threshold; each GT is matched at most once. Ties on score keep
/// input order, ties on IoU take the lower GT index.
MatchResult match_detections(std::span<const GroundTruthBox> gt, std::span<const Detection> pred,
                             double iou_threshold);

/// IoU thresholds 0.50:0.05:0.95 (the COCO convention).
std::vector<double> coco_iou_thresholds();

struct ApParams {
    std::vector<double> iou_thresholds = coco_iou_thresholds();
    int recall_points = 101;
    int max_detections_per_frame = 100;
};

struct ClassDetMetrics {
    int category = 0;
    double ap = 0.0;
    double ar = 0.0;  ///< mean over thresholds of the max recall
    std::size_t gt_count = 0;
};

struct DetEvalResult {
    std::vector<ClassDetMetrics> per_class;  ///< categories present in GT, ascending
    double mean_ap = 0.0;
    double mean_ar = 0.0;
};

/// COCO-style average precision / average recall: per class and IoU
/// threshold, the precision envelope is sampled at recall_points evenly
/// spaced recall values and averaged; AR is the max recall with at most
/// max_detections_per_frame top-scoring detections per frame. Classes absent
/// from the ground truth are excluded from the means. Empty ground truth is
/// an error.
DetEvalResult average_precision(std::span<const GroundTruthBox> gt,
                                std::span<const Detection> pred, const ApParams& params = {});

/// K x K confusion counts; rows = true label, columns = predicted label,
/// in the label set's order.
struct ConfusionMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<std::int64_t>> counts;

    std::int64_t total() const;
    std::int64_t trace() const;
    std::vector<std::int64_t> row_sums() const;
};

/// counts[i][j] = #(true label i, predicted label j). Label lists must have
/// equal length and every label must belong to the set.
ConfusionMatrix confusion(std::span<const std::string> gt_labels,
                          std::span<const std::string> pred_labels, const LabelSet& labels);

/// Diagonal over row sum, one value per class; rows summing to zero are
/// undefined and come back as NaN.
std::vector<double> per_class_accuracy(const ConfusionMatrix& cm);

/// Micro accuracy: trace / total. Throws on an all-zero matrix.
double overall_accuracy(const ConfusionMatrix& cm);

/// Macro accuracy: unweighted mean of the defined per-class accuracies.
double macro_accuracy(const ConfusionMatrix& cm);

/// Line-delimited detection records:
///   {"frame": i, "bbox": [x,y,w,h], "category": c}            (ground truth)
///   {"frame": i, "bbox": [x,y,w,h], "category": c, "score": s} (predictions)
void write_gt_jsonl(std::ostream& out, std::span<const GroundTruthBox> gt);
std::vector<GroundTruthBox> read_gt_jsonl(std::istream& in);
void write_detections_jsonl(std::ostream& out, std::span<const Detection> dets);
std::vector<Detection> read_detections_jsonl(std::istream& in);

}  // namespace herdpipe
