#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "herdpipe/clipgeom.hpp"
#include "herdpipe/coco.hpp"
#include "herdpipe/common.hpp"
#include "herdpipe/tracks.hpp"

namespace herdpipe {

enum class Split { train = 0, val = 1, test = 2 };

std::string_view to_string(Split s);
Split split_from_string(std::string_view name);

struct SplitRatios {
    double train = 0.70;
    double val = 0.05;
    double test = 0.25;

    /// Throws ValidationError unless all ratios are positive and sum to 1
    /// within 1e-9.
    void validate() const;
};

/// Every item assigned to exactly one split; sizes follow the
/// largest-remainder rule for the ratios.
struct SplitAssignment {
    std::uint64_t seed = 0;
    std::map<std::string, Split> assignment;

    std::array<std::size_t, 3> sizes() const;
    Split at(const std::string& item_id) const;
};

/// Split sizes by largest remainder: floor each quota, then hand out the
/// leftover items by descending fractional remainder, ties broken in split
/// order train < val < test (remainders within 1e-9 count as tied).
std::array<std::size_t, 3> largest_remainder_sizes(std::size_t n, const SplitRatios& ratios);

/// Deterministic seeded-random split. Item ids are canonicalized (sorted)
/// before shuffling, so the assignment is invariant to input order; the
/// same seed always produces the same assignment. Duplicate ids and an
/// empty item list are errors.
SplitAssignment split_items(std::vector<std::string> item_ids, const SplitRatios& ratios,
                            std::uint64_t seed);

/// Chronological mode: items keep their given order, the first block goes
/// to train, then val, then test (sizes by largest remainder).
SplitAssignment split_items_chronological(const std::vector<std::string>& item_ids_in_order,
                                          const SplitRatios& ratios);

void write_split_csv(std::ostream& out, const SplitAssignment& split);
SplitAssignment read_split_csv(std::istream& in);

/// Per-frame image metadata required by the COCO export.
struct FrameMeta {
    std::string file_name;
    int width = 0;
    int height = 0;
};

using FrameMetadata = std::map<FrameIndex, FrameMeta>;

/// Export identification ground truth to COCO: one annotation per
/// (frame, cow) dense box over each track's keyframe span (keyframes plus
/// interpolation), categories are the cow ids. The result passes
/// CocoDocument::validate(). A frame without metadata is an error.
CocoDocument export_coco(std::span<const Track> tracks, const FrameMetadata& frames);

/// Configuration of the external pixel extractor. The command template is
/// substituted per clip with {input} {output} {first_frame} {last_frame}
/// {start_ms} {end_ms} {fps} {crop} and run through /bin/sh. The toolkit
/// validates the exit code and that the output file exists, never pixels.
struct ExtractorConfig {
    std::string command_template;
    std::string extension = ".mp4";
    double frame_rate = 30.0;
    std::int64_t timeout_ms = 0;
    int retries = 0;
    int workers = 1;
};

struct KineticsManifestRow {
    std::string path;  ///< relative to the export root
    std::string label;
    int cow_id = 0;
    std::string video_ref;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    Split split = Split::train;
};

struct ExtractionFailure {
    std::string clip_id;
    std::string reason;
};

struct KineticsExport {
    std::vector<KineticsManifestRow> manifest;  ///< successful clips, plan order
    std::vector<ExtractionFailure> failures;
};

/// Materialize clips into a Kinetics-style layout
/// `<root>/<split>/<label>/<clip_id><ext>` using the external extractor.
/// Extraction failures are reported per clip and the export continues;
/// duplicate clip ids and clips missing a split assignment are errors.
/// Safe to re-run: the layout is rewritten deterministically.
KineticsExport export_kinetics(std::span<const ClipSpec> clips, const SplitAssignment& split,
                               const std::filesystem::path& root, const ExtractorConfig& config);

/// Manifest CSV: header `path,label,cow_id,video_ref,start_ms,end_ms,split`.
void write_manifest_csv(std::ostream& out, std::span<const KineticsManifestRow> rows);
std::vector<KineticsManifestRow> read_manifest_csv(std::istream& in);

}  // namespace herdpipe
