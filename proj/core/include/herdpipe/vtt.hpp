#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "herdpipe/common.hpp"

namespace herdpipe {

/// Milliseconds since the start of a video. Serializes as H:MM:SS.mmm.
struct Timecode {
    std::int64_t ms = 0;

    auto operator<=>(const Timecode&) const = default;
};

/// Render as H:MM:SS.mmm (hours unpadded, matching the annotation files).
std::string format_timecode(Timecode t);

/// Parse H:MM:SS.mmm with 1-2 hour digits. Throws ValidationError.
Timecode parse_timecode(std::string_view text);

/// Closed, ordered set of behaviour labels. Defaults to the three-label set
/// Drinking / Grazing / Other.
class LabelSet {
public:
    explicit LabelSet(std::vector<std::string> names);

    static const LabelSet& defaults();

    bool contains(std::string_view name) const;
    /// Index of the label, or -1 when absent.
    int index_of(std::string_view name) const;
    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }
    const std::string& at(std::size_t i) const { return names_.at(i); }

    bool operator==(const LabelSet&) const = default;

private:
    std::vector<std::string> names_;
};

/// One behaviour annotation: "Cow <id> <label>" over [start, end).
struct BehaviourCue {
    int cow_id = 0;
    std::string action;
    Timecode start;
    Timecode end;

    bool operator==(const BehaviourCue&) const = default;
};

struct VttParseOptions {
    LabelSet labels = LabelSet::defaults();
    /// Lenient mode maps unknown labels to "Other" with a warning instead of
    /// failing; annotation typos are the expected cause.
    bool lenient = false;
};

struct VttParseResult {
    std::vector<BehaviourCue> cues;
    std::vector<std::string> warnings;
};

/// Parse the WebVTT subset used for behaviour annotation: optional WEBVTT
/// header, blank-line separated cues of one timing line and one payload line
/// matching `Cow <int> <label>`. Cues come back in document order with
/// millisecond precision. Structural problems throw ValidationError with the
/// offending line number.
VttParseResult parse_vtt(std::string_view text, const VttParseOptions& opts = {});

/// Serialize cues to a WebVTT document; parse_vtt(serialize_vtt(x)) == x.
std::string serialize_vtt(const std::vector<BehaviourCue>& cues);

/// All cues active at t, i.e. start <= t < end, in document order.
std::vector<BehaviourCue> active_cues(const std::vector<BehaviourCue>& cues, Timecode t);

/// A pair of same-cow cues whose intervals overlap. Indices refer to the
/// input order.
struct CuePair {
    std::size_t first = 0;
    std::size_t second = 0;

    bool operator==(const CuePair&) const = default;
};

/// Same-cow overlaps: different actions are conflicts (a cow cannot do two
/// things at once), identical actions are merge candidates. Overlapping cues
/// for different cows are legal. Validation reports, it never throws.
struct CueValidationReport {
    std::vector<CuePair> conflicts;
    std::vector<CuePair> merge_candidates;

    bool ok() const { return conflicts.empty(); }
};

CueValidationReport validate_cues(const std::vector<BehaviourCue>& cues);

}  // namespace herdpipe
