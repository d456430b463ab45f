#include "herdpipe/timesync.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include <nlohmann/json.hpp>

#include "text_util.hpp"

namespace herdpipe {

namespace {

using detail::split_csv_row;
using detail::trim;

bool parse_i64(std::string_view s, std::int64_t& out) {
    s = trim(s);
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

bool parse_f64(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's algorithm).
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace

std::int64_t parse_iso8601_utc_ms(std::string_view text) {
    // YYYY-MM-DD[T ]hh:mm:ss[.fff][Z]
    text = trim(text);
    auto bad = [&]() -> std::int64_t {
        throw ValidationError("unparseable timestamp '" + std::string(text) + "'");
    };
    if (text.size() < 19) return bad();
    auto digits = [&](std::size_t pos, std::size_t n, std::int64_t& out) {
        for (std::size_t i = pos; i < pos + n; ++i) {
            if (i >= text.size() || !std::isdigit(static_cast<unsigned char>(text[i]))) return false;
        }
        return parse_i64(text.substr(pos, n), out);
    };
    std::int64_t year, month, day, hour, minute, second;
    if (!digits(0, 4, year) || text[4] != '-' || !digits(5, 2, month) || text[7] != '-' ||
        !digits(8, 2, day) || (text[10] != 'T' && text[10] != ' ') || !digits(11, 2, hour) ||
        text[13] != ':' || !digits(14, 2, minute) || text[16] != ':' || !digits(17, 2, second)) {
        return bad();
    }
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) {
        return bad();
    }
    std::size_t pos = 19;
    std::int64_t millis = 0;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        std::size_t start = pos;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
        std::size_t n = pos - start;
        if (n == 0) return bad();
        std::int64_t frac = 0;
        parse_i64(text.substr(start, n), frac);
        // Scale an arbitrary-length fraction to milliseconds, truncating
        // beyond ms precision.
        if (n >= 3) {
            for (std::size_t i = 3; i < n; ++i) frac /= 10;
            millis = frac;
        } else {
            millis = frac;
            for (std::size_t i = n; i < 3; ++i) millis *= 10;
        }
    }
    if (pos < text.size()) {
        if (text.substr(pos) != "Z") return bad();  // naive timestamps are treated as UTC
    }
    std::int64_t days = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
    return (((days * 24 + hour) * 60 + minute) * 60 + second) * 1000 + millis;
}

GpsParseResult parse_gps_csv(std::string_view text, const GpsCsvSchema& schema) {
    GpsParseResult result;

    auto lines = detail::split_lines(text);
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) throw ValidationError("gps csv: empty file");

    auto header = split_csv_row(lines[0]);
    auto find_col = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (std::string(trim(header[i])) == name) return static_cast<std::ptrdiff_t>(i);
        }
        throw ValidationError("gps csv: missing column '" + name + "'");
    };
    const std::size_t col_cts = static_cast<std::size_t>(find_col(schema.stream_time));
    const std::size_t col_date = static_cast<std::size_t>(find_col(schema.date));
    const std::size_t col_lat = static_cast<std::size_t>(find_col(schema.lat));
    const std::size_t col_lon = static_cast<std::size_t>(find_col(schema.lon));
    const std::size_t need = std::max({col_cts, col_date, col_lat, col_lon}) + 1;

    for (std::size_t row = 1; row < lines.size(); ++row) {
        if (trim(lines[row]).empty()) continue;
        auto reject = [&](const std::string& why) {
            ++result.malformed_rows;
            result.row_errors.push_back("row " + std::to_string(row + 1) + ": " + why);
        };
        auto fields = split_csv_row(lines[row]);
        if (fields.size() < need) {
            reject("expected at least " + std::to_string(need) + " fields, got " +
                   std::to_string(fields.size()));
            continue;
        }
        GpsSample sample;
        if (!parse_i64(fields[col_cts], sample.stream_time_ms) || sample.stream_time_ms < 0) {
            reject("bad stream time '" + fields[col_cts] + "'");
            continue;
        }
        try {
            sample.wall_clock_ms = parse_iso8601_utc_ms(fields[col_date]);
        } catch (const ValidationError& e) {
            reject(e.what());
            continue;
        }
        if (!parse_f64(fields[col_lat], sample.latitude) ||
            !parse_f64(fields[col_lon], sample.longitude)) {
            reject("bad coordinate");
            continue;
        }
        result.samples.push_back(sample);
    }

    if (result.samples.empty()) {
        throw ValidationError("gps csv: no valid samples (" +
                              std::to_string(result.malformed_rows) + " malformed rows)");
    }
    for (std::size_t i = 1; i < result.samples.size(); ++i) {
        if (result.samples[i].stream_time_ms <= result.samples[i - 1].stream_time_ms) {
            throw ValidationError("gps csv: stream time not strictly increasing at sample " +
                                  std::to_string(i + 1));
        }
    }
    return result;
}

void validate_clock(const ClockMap& map) {
    if (!(map.rate > 0.0) || !std::isfinite(map.rate)) {
        throw ValidationError("clock map: rate must be positive and finite");
    }
    if (!(map.frame_rate > 0.0) || !std::isfinite(map.frame_rate)) {
        throw ValidationError("clock map: frame rate must be positive and finite");
    }
    if (!std::isfinite(map.offset_ms)) {
        throw ValidationError("clock map: offset must be finite");
    }
}

ClockFitResult fit_clock(std::span<const GpsSample> samples, double frame_rate,
                         const ClockFitOptions& opts) {
    if (samples.size() < 2) {
        throw ValidationError("fit_clock: need at least 2 samples, got " +
                              std::to_string(samples.size()));
    }
    if (!(frame_rate > 0.0)) {
        throw ValidationError("fit_clock: frame rate must be positive");
    }

    // Least squares on centered coordinates for numerical stability
    // (epoch ms values are ~1.6e12).
    const double n = static_cast<double>(samples.size());
    double mean_t = 0.0, mean_w = 0.0;
    for (const auto& s : samples) {
        mean_t += static_cast<double>(s.stream_time_ms);
        mean_w += static_cast<double>(s.wall_clock_ms);
    }
    mean_t /= n;
    mean_w /= n;

    double stt = 0.0, stw = 0.0;
    for (const auto& s : samples) {
        const double dt = static_cast<double>(s.stream_time_ms) - mean_t;
        const double dw = static_cast<double>(s.wall_clock_ms) - mean_w;
        stt += dt * dt;
        stw += dt * dw;
    }
    if (stt == 0.0) {
        throw ValidationError("fit_clock: degenerate samples (identical stream times)");
    }

    ClockFitResult result;
    result.map.rate = stw / stt;
    result.map.offset_ms = mean_w - result.map.rate * mean_t;
    result.map.frame_rate = frame_rate;
    result.n_samples = samples.size();

    double ss = 0.0;
    for (const auto& s : samples) {
        const double r = static_cast<double>(s.wall_clock_ms) -
                         (result.map.offset_ms + result.map.rate * static_cast<double>(s.stream_time_ms));
        ss += r * r;
    }
    result.residual_rms_ms = std::sqrt(ss / n);

    if (std::abs(result.map.rate - 1.0) > opts.max_rate_deviation) {
        throw ValidationError("fit_clock: rate " + std::to_string(result.map.rate) +
                              " outside sanity bound |rate-1| <= " +
                              std::to_string(opts.max_rate_deviation));
    }
    return result;
}

double frame_to_wall_exact(const ClockMap& map, FrameIndex frame) {
    validate_clock(map);
    if (frame < 0) throw ValidationError("frame_to_wall: frame must be >= 0");
    const double stream_ms = static_cast<double>(frame) * 1000.0 / map.frame_rate;
    return map.offset_ms + map.rate * stream_ms;
}

std::int64_t frame_to_wall(const ClockMap& map, FrameIndex frame) {
    return std::llround(frame_to_wall_exact(map, frame));
}

FrameIndex align_frame(const ClockMap& src, const ClockMap& dst, FrameIndex frame) {
    validate_clock(dst);
    const double wall = frame_to_wall_exact(src, frame);
    const double dst_stream_ms = (wall - dst.offset_ms) / dst.rate;
    const double dst_frame = dst_stream_ms * dst.frame_rate / 1000.0;
    const FrameIndex aligned = round_half_down(dst_frame);
    if (aligned < 0) {
        throw ValidationError("align_frame: source frame " + std::to_string(frame) +
                              " predates the destination recording");
    }
    return aligned;
}

std::string clock_to_json(const ClockMap& map) {
    return nlohmann::json{{"offset_ms", map.offset_ms},
                          {"rate", map.rate},
                          {"frame_rate", map.frame_rate}}
        .dump(2);
}

ClockMap clock_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ClockMap map{j.at("offset_ms").get<double>(), j.at("rate").get<double>(),
                     j.at("frame_rate").get<double>()};
        validate_clock(map);
        return map;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("clock: malformed document: ") + e.what());
    }
}

}  // namespace herdpipe
