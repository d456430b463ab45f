#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "herdpipe/common.hpp"
#include "herdpipe/eval_metrics.hpp"
#include "herdpipe/pipeline.hpp"
#include "herdpipe/tracks.hpp"
#include "herdpipe/vtt.hpp"

namespace herdpipe {

/// Parameters of a synthetic scene with known ground truth.
struct SceneSpec {
    std::uint64_t seed = 1;
    int n_cows = 3;
    int frame_w = 1920;
    int frame_h = 1080;
    std::int64_t duration_ms = 120000;
    double frame_rate = 30.0;
    int keyframe_stride = 9;

    LabelSet labels = LabelSet::defaults();
    std::vector<double> label_probs;  ///< empty = uniform
    std::int64_t mean_event_ms = 8000;

    double box_jitter_px = 0.0;   ///< detection noise, sigma in pixels
    double drop_rate = 0.0;       ///< probability a detection is missing
    double score_temperature = 0.0;  ///< 0 = exact one-hot window scores

    double min_box_px = 120.0;
    double max_box_px = 320.0;

    double window_s = 1.0;   ///< canonical scoring-window tiling
    double stride_s = 0.5;
    std::string video_ref = "synth";
};

/// A generated scene: piecewise-linear in-frame tracks, a gap-free
/// alternating-label cue schedule per cow, detections derived from the
/// interpolated boxes (optionally jittered/dropped), and per-window scores
/// for the canonical tiling (one-hot ground truth softened by temperature).
/// Fully deterministic in the seed.
struct Scene {
    SceneSpec spec;
    std::vector<Track> tracks;
    std::vector<BehaviourCue> cues;
    std::vector<Detection> detections;
    std::vector<ActionScore> window_scores;
};

Scene generate(const SceneSpec& spec);

/// Dense per-frame ground-truth boxes over every track's span.
std::vector<GroundTruthBox> scene_ground_truth(const Scene& scene);

/// Scores a window by the cue active at its midpoint, one-hot softened by
/// the scene's temperature. Stands in for the neural scorer in closure
/// tests.
class OracleScorer : public ActionScorer {
public:
    explicit OracleScorer(const Scene& scene) : scene_(scene) {}
    ActionScore score(const ClipSpec& clip) override;

private:
    const Scene& scene_;
};

/// Size limits under which the exhaustive oracle is willing to run.
struct OracleLimits {
    std::size_t max_gt_per_frame_class = 5;
    std::size_t max_pred_per_frame_class = 8;
};

struct OracleClassMetrics {
    int category = 0;
    double ap = 0.0;
    double ar = 0.0;
};

struct OracleDetMetrics {
    std::vector<OracleClassMetrics> per_class;
    double mean_ap = 0.0;
    double mean_ar = 0.0;
};

/// Exact AP/AR by direct enumeration: naive next-best selection for the
/// ranking, exhaustive scans for the greedy matching, and interpolated
/// precision computed point by point from the raw staircase. Shares no code
/// with eval_metrics (including IoU). Throws ValidationError when the
/// instance exceeds the limits.
OracleDetMetrics oracle_detection_metrics(std::span<const GroundTruthBox> gt,
                                          std::span<const Detection> pred,
                                          const ApParams& params = {},
                                          const OracleLimits& limits = {});

/// Exact classification accuracy by direct counting.
double oracle_accuracy(std::span<const std::string> gt_labels,
                       std::span<const std::string> pred_labels);

/// Scene fixtures: a single JSON document bundling the spec, the PRNG
/// header (algorithm + seed), and all four outputs.
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);
Scene read_scene_file(const std::filesystem::path& path);
void write_scene_file(const std::filesystem::path& path, const Scene& scene);

}  // namespace herdpipe
