#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "herdpipe/clipgeom.hpp"
#include "herdpipe/common.hpp"
#include "herdpipe/eval_metrics.hpp"
#include "herdpipe/timesync.hpp"
#include "herdpipe/vtt.hpp"

namespace herdpipe {

/// Per-label scores for one clip window.
struct ActionScore {
    std::string clip_id;
    std::vector<std::pair<std::string, double>> scores;
    bool normalized = false;  ///< when declared, scores must sum to 1 within 1e-6

    /// Highest-scoring label; ties resolve to the earlier entry. Validates
    /// scores against the label set: finite, within [0, 1], known labels,
    /// and the normalization claim.
    std::pair<std::string, double> argmax(const LabelSet& labels) const;
};

/// A scorer failure for one window; the pipeline skips the window and
/// reports it.
class ScorerError : public Error {
public:
    using Error::Error;
};

/// The action-scorer contract: given a fully resolved clip window, return
/// per-label scores. Implementations may call an external process, read a
/// precomputed score file, or consult synthetic ground truth. Must be safe
/// to call from multiple threads.
class ActionScorer {
public:
    virtual ~ActionScorer() = default;
    virtual ActionScore score(const ClipSpec& clip) = 0;
};

/// Scores served from a precomputed file keyed by clip id.
class PrecomputedScorer : public ActionScorer {
public:
    explicit PrecomputedScorer(std::vector<ActionScore> scores);
    ActionScore score(const ClipSpec& clip) override;

private:
    std::map<std::string, ActionScore> by_id_;
};

struct ExternalScorerConfig {
    /// Placeholders: {request} {response} plus the clip fields {clip_id}
    /// {input} {first_frame} {last_frame} {start_ms} {end_ms}.
    std::string command_template;
    std::filesystem::path workdir;
    std::int64_t timeout_ms = 30000;
    int retries = 0;
};

/// Writes one request record per window, runs the configured command, and
/// reads the response record back. Request and response are line-delimited
/// JSON; see the scorer contract in the README.
class ExternalCommandScorer : public ActionScorer {
public:
    explicit ExternalCommandScorer(ExternalScorerConfig config);
    ActionScore score(const ClipSpec& clip) override;

private:
    ExternalScorerConfig config_;
};

/// One merged behaviour observation on the output timeline.
struct BehaviourEvent {
    int cow_id = 0;
    std::string label;
    Timecode start;
    Timecode end;
    double confidence = 0.0;

    bool operator==(const BehaviourEvent&) const = default;
};

/// One scored window before merging.
struct WindowResult {
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    std::string label;
    double score = 0.0;
};

/// Merge time-ordered per-window results for one cow: maximal runs of the
/// same label become events with mean confidence; overlapping neighbours are
/// cut at the midpoint of their overlap; events shorter than min_duration
/// are dropped (anti-flicker). Events never overlap afterwards.
std::vector<BehaviourEvent> merge_events(int cow_id, std::span<const WindowResult> windows,
                                         std::int64_t min_duration_ms);

struct PipelineParams {
    double window_s = 1.0;
    double stride_s = 0.5;
    double gap_tolerance_s = 0.5;  ///< detection gaps longer than this split tracklets
    double min_duration_s = 0.0;
    int out_size = 256;
    int frame_w = 0;
    int frame_h = 0;
    int workers = 1;
    LabelSet labels = LabelSet::defaults();
    std::string video_ref = "stream";
};

struct WindowFailure {
    std::string clip_id;
    std::string reason;
};

struct PipelineResult {
    std::vector<BehaviourEvent> events;      ///< ordered by (cow, start)
    std::vector<WindowFailure> failures;     ///< scorer failures, windows skipped
    std::vector<DroppedWindow> dropped;      ///< windows not coverable by detections
};

/// The two-stage pipeline: identity-carrying detections are grouped into
/// per-cow tracklets (gaps beyond the tolerance split them), each tracklet
/// is tiled into 1-second windows, every window is cropped along the
/// detected boxes and scored, and per-window winners are merged into a
/// behaviour timeline. Deterministic for fixed inputs and scorer responses,
/// regardless of worker count. Timecodes are stream time via the clock's
/// frame rate.
PipelineResult run_pipeline(std::span<const Detection> detections, const ClockMap& clock,
                            ActionScorer& scorer, const PipelineParams& params);

/// Event records, line-delimited JSON:
///   {"cow_id": k, "label": l, "start_ms": a, "end_ms": b, "confidence": c}
void write_events_jsonl(std::ostream& out, std::span<const BehaviourEvent> events);
std::vector<BehaviourEvent> read_events_jsonl(std::istream& in);

/// Events rendered as behaviour cues so results are viewable as subtitles.
std::string events_to_vtt(std::span<const BehaviourEvent> events);

/// Score records, line-delimited JSON:
///   {"clip_id": id, "scores": {"<label>": s, ...}, "normalized": bool}
void write_scores_jsonl(std::ostream& out, std::span<const ActionScore> scores);
std::vector<ActionScore> read_scores_jsonl(std::istream& in);

}  // namespace herdpipe
