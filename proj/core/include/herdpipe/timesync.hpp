#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "herdpipe/common.hpp"

namespace herdpipe {

/// One GPS telemetry row: camera stream time against GPS wall clock.
struct GpsSample {
    std::int64_t stream_time_ms = 0;  ///< ms since recording start, >= 0
    std::int64_t wall_clock_ms = 0;   ///< UTC epoch ms
    double latitude = 0.0;            ///< carried through, unused by sync
    double longitude = 0.0;

    bool operator==(const GpsSample&) const = default;
};

/// Column names of the GPS CSV (gpmd2csv-style output). Configurable; these
/// are the documented defaults.
struct GpsCsvSchema {
    std::string stream_time = "cts";
    std::string date = "date";
    std::string lat = "lat";
    std::string lon = "lon";
};

struct GpsParseResult {
    std::vector<GpsSample> samples;
    std::size_t malformed_rows = 0;
    std::vector<std::string> row_errors;  ///< one entry per malformed row
};

/// Parse a GPS CSV document. Rows rejected by the row grammar (wrong field
/// count, unparseable number or timestamp) are counted and reported, not
/// fatal. Throws ValidationError when the header lacks a required column,
/// no valid rows remain, or stream times are not strictly increasing.
GpsParseResult parse_gps_csv(std::string_view text, const GpsCsvSchema& schema = {});

/// Parse an ISO-8601 UTC timestamp ("2020-03-18T01:00:00.000Z") to epoch ms.
std::int64_t parse_iso8601_utc_ms(std::string_view text);

/// Affine map from camera stream time to GPS wall clock:
///   wall_ms = offset_ms + rate * stream_ms
/// plus the camera frame rate to move between frames and stream time.
/// Immutable after construction; safe to share across threads.
struct ClockMap {
    double offset_ms = 0.0;
    double rate = 1.0;        ///< drift factor, > 0
    double frame_rate = 30.0; ///< frames per second, > 0
};

/// Throws ValidationError unless rate and frame_rate are positive and finite.
void validate_clock(const ClockMap& map);

struct ClockFitOptions {
    /// Sanity bound: |rate - 1| above this fails the fit (defaults from the
    /// hardware reality that camera clocks drift far less than 1%).
    double max_rate_deviation = 0.01;
};

struct ClockFitResult {
    ClockMap map;
    double residual_rms_ms = 0.0;
    std::size_t n_samples = 0;
};

/// Least-squares affine fit wall = offset + rate * stream over all samples.
/// Throws ValidationError on fewer than 2 samples, degenerate stream times,
/// or a rate outside the sanity bound.
ClockFitResult fit_clock(std::span<const GpsSample> samples, double frame_rate,
                         const ClockFitOptions& opts = {});

/// Wall clock of a frame, exact (unrounded). frame must be >= 0.
double frame_to_wall_exact(const ClockMap& map, FrameIndex frame);

/// Wall clock of a frame, rounded to the nearest millisecond.
std::int64_t frame_to_wall(const ClockMap& map, FrameIndex frame);

/// The dst frame whose wall clock is nearest the src frame's wall clock
/// (ties toward the earlier frame). Throws ValidationError when the source
/// frame predates the destination recording (negative index).
FrameIndex align_frame(const ClockMap& src, const ClockMap& dst, FrameIndex frame);

/// Clock files: {"offset_ms": o, "rate": r, "frame_rate": f}.
std::string clock_to_json(const ClockMap& map);
ClockMap clock_from_json(const std::string& text);

}  // namespace herdpipe
