#include "herdpipe/vtt.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace herdpipe {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(pos));
            break;
        }
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

bool parse_int_field(std::string_view s, std::int64_t& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
    throw ValidationError("vtt: line " + std::to_string(line_no + 1) + ": " + what);
}

constexpr std::string_view kArrow = " --> ";
constexpr std::string_view kFallbackLabel = "Other";

}  // namespace

std::string format_timecode(Timecode t) {
    std::int64_t ms = t.ms;
    std::int64_t h = ms / 3600000;
    ms %= 3600000;
    std::int64_t m = ms / 60000;
    ms %= 60000;
    std::int64_t s = ms / 1000;
    ms %= 1000;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld:%02lld:%02lld.%03lld",
                  static_cast<long long>(h), static_cast<long long>(m),
                  static_cast<long long>(s), static_cast<long long>(ms));
    return buf;
}

Timecode parse_timecode(std::string_view text) {
    // H:MM:SS.mmm, 1-2 hour digits.
    auto bad = [&]() -> Timecode {
        throw ValidationError("vtt: malformed timecode '" + std::string(text) + "'");
    };
    std::size_t c1 = text.find(':');
    if (c1 == std::string_view::npos || c1 < 1 || c1 > 2) return bad();
    std::size_t c2 = text.find(':', c1 + 1);
    if (c2 == std::string_view::npos || c2 - c1 != 3) return bad();
    std::size_t dot = text.find('.', c2 + 1);
    if (dot == std::string_view::npos || dot - c2 != 3 || text.size() - dot != 4) return bad();

    for (std::size_t i = 0; i < text.size(); ++i) {
        if (i == c1 || i == c2 || i == dot) continue;
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) return bad();
    }
    std::int64_t h = 0, m = 0, s = 0, ms = 0;
    parse_int_field(text.substr(0, c1), h);
    parse_int_field(text.substr(c1 + 1, 2), m);
    parse_int_field(text.substr(c2 + 1, 2), s);
    parse_int_field(text.substr(dot + 1, 3), ms);
    if (m >= 60 || s >= 60) return bad();
    return Timecode{((h * 60 + m) * 60 + s) * 1000 + ms};
}

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty()) throw ValidationError("label set must not be empty");
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i].empty()) throw ValidationError("label set contains an empty label");
        for (std::size_t j = i + 1; j < names_.size(); ++j) {
            if (names_[i] == names_[j]) {
                throw ValidationError("duplicate label '" + names_[i] + "' in label set");
            }
        }
    }
}

const LabelSet& LabelSet::defaults() {
    static const LabelSet set(std::vector<std::string>{"Drinking", "Grazing", "Other"});
    return set;
}

bool LabelSet::contains(std::string_view name) const {
    return index_of(name) >= 0;
}

int LabelSet::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) return static_cast<int>(i);
    }
    return -1;
}

VttParseResult parse_vtt(std::string_view text, const VttParseOptions& opts) {
    // Strip a UTF-8 BOM if present.
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    VttParseResult result;
    auto lines = split_lines(text);

    std::size_t i = 0;
    // Optional WEBVTT header; hand-written annotation files often omit it.
    while (i < lines.size() && trim(lines[i]).empty()) ++i;
    if (i < lines.size()) {
        std::string_view first = trim(lines[i]);
        if (first == "WEBVTT" || first.starts_with("WEBVTT ") || first.starts_with("WEBVTT\t")) {
            ++i;
        }
    }

    while (i < lines.size()) {
        std::string_view line = trim(lines[i]);
        if (line.empty()) {
            ++i;
            continue;
        }
        // Timing line.
        std::size_t arrow = line.find(kArrow);
        if (arrow == std::string_view::npos) {
            fail(i, "expected '<timecode> --> <timecode>', got '" + std::string(line) + "'");
        }
        Timecode start, end;
        try {
            start = parse_timecode(trim(line.substr(0, arrow)));
            end = parse_timecode(trim(line.substr(arrow + kArrow.size())));
        } catch (const ValidationError& e) {
            fail(i, e.what());
        }
        if (start >= end) {
            fail(i, "cue start " + format_timecode(start) + " is not before end " +
                        format_timecode(end));
        }

        // Payload: exactly one line, `Cow <int> <label>`.
        ++i;
        if (i >= lines.size() || trim(lines[i]).empty()) {
            fail(i - 1, "cue has no payload line");
        }
        std::string_view payload = trim(lines[i]);
        std::size_t sp1 = payload.find(' ');
        if (sp1 == std::string_view::npos || payload.substr(0, sp1) != "Cow") {
            fail(i, "payload must match 'Cow <int> <label>', got '" + std::string(payload) + "'");
        }
        std::size_t sp2 = payload.find(' ', sp1 + 1);
        if (sp2 == std::string_view::npos) {
            fail(i, "payload must match 'Cow <int> <label>', got '" + std::string(payload) + "'");
        }
        std::int64_t cow_id = 0;
        if (!parse_int_field(payload.substr(sp1 + 1, sp2 - sp1 - 1), cow_id) || cow_id <= 0) {
            fail(i, "cow id must be a positive integer");
        }
        std::string label(trim(payload.substr(sp2 + 1)));
        if (label.empty()) {
            fail(i, "payload must match 'Cow <int> <label>', got '" + std::string(payload) + "'");
        }
        if (!opts.labels.contains(label)) {
            if (opts.lenient && opts.labels.contains(kFallbackLabel)) {
                result.warnings.push_back("line " + std::to_string(i + 1) + ": unknown label '" +
                                          label + "' mapped to '" + std::string(kFallbackLabel) +
                                          "'");
                label = kFallbackLabel;
            } else {
                fail(i, "unknown label '" + label + "'");
            }
        }
        ++i;
        if (i < lines.size() && !trim(lines[i]).empty()) {
            fail(i, "cue payload must be a single line");
        }
        result.cues.push_back(BehaviourCue{static_cast<int>(cow_id), label, start, end});
    }
    return result;
}

std::string serialize_vtt(const std::vector<BehaviourCue>& cues) {
    std::ostringstream out;
    out << "WEBVTT\n";
    for (const auto& cue : cues) {
        if (cue.start >= cue.end) {
            throw ValidationError("cue for cow " + std::to_string(cue.cow_id) +
                                  " has start >= end");
        }
        out << '\n'
            << format_timecode(cue.start) << " --> " << format_timecode(cue.end) << '\n'
            << "Cow " << cue.cow_id << ' ' << cue.action << '\n';
    }
    return out.str();
}

std::vector<BehaviourCue> active_cues(const std::vector<BehaviourCue>& cues, Timecode t) {
    std::vector<BehaviourCue> active;
    for (const auto& cue : cues) {
        if (cue.start <= t && t < cue.end) active.push_back(cue);
    }
    return active;
}

CueValidationReport validate_cues(const std::vector<BehaviourCue>& cues) {
    CueValidationReport report;
    for (std::size_t a = 0; a < cues.size(); ++a) {
        for (std::size_t b = a + 1; b < cues.size(); ++b) {
            if (cues[a].cow_id != cues[b].cow_id) continue;
            // Half-open intervals: adjacent cues do not overlap.
            bool overlap = cues[a].start < cues[b].end && cues[b].start < cues[a].end;
            if (!overlap) continue;
            if (cues[a].action == cues[b].action) {
                report.merge_candidates.push_back(CuePair{a, b});
            } else {
                report.conflicts.push_back(CuePair{a, b});
            }
        }
    }
    return report;
}

}  // namespace herdpipe
