#include "herdpipe/dataset_export.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <thread>

#include "herdpipe/extproc.hpp"
#include "text_util.hpp"

namespace herdpipe {

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    throw ValidationError("unknown split value");
}

Split split_from_string(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw ValidationError("unknown split '" + std::string(name) + "'");
}

void SplitRatios::validate() const {
    if (!(train > 0.0) || !(val > 0.0) || !(test > 0.0)) {
        throw ValidationError("split ratios must be positive");
    }
    if (std::abs(train + val + test - 1.0) > 1e-9) {
        throw ValidationError("split ratios must sum to 1");
    }
}

std::array<std::size_t, 3> SplitAssignment::sizes() const {
    std::array<std::size_t, 3> out{0, 0, 0};
    for (const auto& [id, split] : assignment) {
        out[static_cast<std::size_t>(split)]++;
    }
    return out;
}

Split SplitAssignment::at(const std::string& item_id) const {
    auto it = assignment.find(item_id);
    if (it == assignment.end()) {
        throw ValidationError("item '" + item_id + "' has no split assignment");
    }
    return it->second;
}

std::array<std::size_t, 3> largest_remainder_sizes(std::size_t n, const SplitRatios& ratios) {
    ratios.validate();
    if (n == 0) throw ValidationError("split: empty item list");

    const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double quota = r[i] * static_cast<double>(n);
        sizes[i] = static_cast<std::size_t>(std::floor(quota));
        remainder[i] = quota - static_cast<double>(sizes[i]);
        assigned += sizes[i];
    }
    // Hand out leftovers by descending remainder; remainders within 1e-9 are
    // tied and resolve in split order train < val < test.
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (std::abs(remainder[a] - remainder[b]) <= 1e-9) return false;
        return remainder[a] > remainder[b];
    });
    for (std::size_t k = 0; assigned < n; ++k) {
        sizes[order[k % 3]]++;
        ++assigned;
    }
    return sizes;
}

SplitAssignment split_items(std::vector<std::string> item_ids, const SplitRatios& ratios,
                            std::uint64_t seed) {
    const auto sizes = largest_remainder_sizes(item_ids.size(), ratios);

    // Canonical order first, so the result is invariant to input ordering.
    std::sort(item_ids.begin(), item_ids.end());
    for (std::size_t i = 1; i < item_ids.size(); ++i) {
        if (item_ids[i] == item_ids[i - 1]) {
            throw ValidationError("split: duplicate item id '" + item_ids[i] + "'");
        }
    }
    DeterministicRng rng(seed);
    rng.shuffle(item_ids);

    SplitAssignment out;
    out.seed = seed;
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t k = 0; k < sizes[s]; ++k, ++pos) {
            out.assignment.emplace(std::move(item_ids[pos]), static_cast<Split>(s));
        }
    }
    return out;
}

SplitAssignment split_items_chronological(const std::vector<std::string>& item_ids_in_order,
                                          const SplitRatios& ratios) {
    const auto sizes = largest_remainder_sizes(item_ids_in_order.size(), ratios);
    std::set<std::string> seen;
    SplitAssignment out;
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t k = 0; k < sizes[s]; ++k, ++pos) {
            const auto& id = item_ids_in_order[pos];
            if (!seen.insert(id).second) {
                throw ValidationError("split: duplicate item id '" + id + "'");
            }
            out.assignment.emplace(id, static_cast<Split>(s));
        }
    }
    return out;
}

void write_split_csv(std::ostream& out, const SplitAssignment& split) {
    out << "item_id,split\n";
    for (const auto& [id, s] : split.assignment) {
        out << detail::csv_escape(id) << ',' << to_string(s) << '\n';
    }
}

SplitAssignment read_split_csv(std::istream& in) {
    SplitAssignment out;
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "item_id,split") {
        throw ValidationError("split csv: expected header 'item_id,split'");
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_csv_row(line);
        if (fields.size() != 2) {
            throw ValidationError("split csv: line " + std::to_string(line_no) +
                                  ": expected 2 fields");
        }
        if (!out.assignment.emplace(fields[0], split_from_string(fields[1])).second) {
            throw ValidationError("split csv: duplicate item '" + fields[0] + "'");
        }
    }
    if (out.assignment.empty()) throw ValidationError("split csv: no assignments");
    return out;
}

CocoDocument export_coco(std::span<const Track> tracks, const FrameMetadata& frames) {
    CocoDocument doc;
    std::set<FrameIndex> used_frames;
    std::set<int> cow_ids;
    std::int64_t next_ann_id = 1;

    for (const auto& track : tracks) {
        cow_ids.insert(track.cow_id);
        for (const auto& [frame, box] : densify(track, track.first_frame(), track.last_frame())) {
            auto meta = frames.find(frame);
            if (meta == frames.end()) {
                throw ValidationError("export_coco: no frame metadata for frame " +
                                      std::to_string(frame));
            }
            // Clamp to the declared image bounds. Fully in-frame boxes pass
            // through bit-exactly (re-ingest must reproduce them); a box
            // entirely off-frame is fabricated ground truth and rejected.
            const double W = meta->second.width;
            const double H = meta->second.height;
            CocoAnnotation ann;
            ann.id = next_ann_id++;
            ann.image_id = frame;
            ann.category_id = track.cow_id;
            if (box.x >= 0.0 && box.y >= 0.0 && box.x + box.w <= W && box.y + box.h <= H) {
                ann.bbox = {box.x, box.y, box.w, box.h};
            } else {
                const double x1 = std::clamp(box.x, 0.0, W);
                const double y1 = std::clamp(box.y, 0.0, H);
                const double x2 = std::clamp(box.x + box.w, 0.0, W);
                const double y2 = std::clamp(box.y + box.h, 0.0, H);
                if (!(x2 > x1) || !(y2 > y1)) {
                    throw ValidationError("export_coco: cow " + std::to_string(track.cow_id) +
                                          " box at frame " + std::to_string(frame) +
                                          " lies entirely outside the image");
                }
                ann.bbox = {x1, y1, x2 - x1, y2 - y1};
            }
            ann.area = ann.bbox[2] * ann.bbox[3];
            doc.annotations.push_back(ann);
            used_frames.insert(frame);
        }
    }

    for (FrameIndex frame : used_frames) {
        const auto& meta = frames.at(frame);
        doc.images.push_back(CocoImage{frame, meta.file_name, meta.width, meta.height});
    }
    for (int cow : cow_ids) {
        doc.categories.push_back(CocoCategory{cow, "cow_" + std::to_string(cow)});
    }
    doc.validate();
    return doc;
}

namespace {

std::string build_crop_expr(const ClipSpec& clip) {
    if (clip.crops.empty()) return "";
    // ffmpeg-style filter for the window's first square box; the per-frame
    // geometry authority is the plan document.
    const auto& c = clip.crops.front();
    char buf[160];
    std::snprintf(buf, sizeof(buf), "crop=%.2f:%.2f:%.2f:%.2f,scale=%d:%d", c.src_box.w,
                  c.src_box.h, c.src_box.x, c.src_box.y, c.out_size, c.out_size);
    return buf;
}

}  // namespace

KineticsExport export_kinetics(std::span<const ClipSpec> clips, const SplitAssignment& split,
                               const std::filesystem::path& root, const ExtractorConfig& config) {
    if (config.command_template.empty()) {
        throw ValidationError("export_kinetics: extractor command template is required");
    }

    // Referential checks before any filesystem work.
    std::map<std::string, const ClipSpec*> by_id;
    for (const auto& clip : clips) {
        auto [it, inserted] = by_id.emplace(clip.id, &clip);
        if (!inserted) {
            throw ValidationError("export_kinetics: duplicate clip id '" + clip.id + "' from " +
                                  it->second->video_ref + " [" +
                                  std::to_string(it->second->start_ms) + ", " +
                                  std::to_string(it->second->end_ms) + ") and " + clip.video_ref +
                                  " [" + std::to_string(clip.start_ms) + ", " +
                                  std::to_string(clip.end_ms) + ")");
        }
        split.at(clip.id);  // throws when unassigned
    }

    std::error_code ec;
    for (const auto& clip : clips) {
        const auto dir =
            root / std::string(to_string(split.at(clip.id))) / clip.label;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    }

    struct Outcome {
        bool ok = false;
        std::string rel_path;
        std::string reason;
    };
    std::vector<Outcome> outcomes(clips.size());

    auto process = [&](std::size_t i) {
        const ClipSpec& clip = clips[i];
        const Split s = split.at(clip.id);
        const std::filesystem::path rel = std::filesystem::path(std::string(to_string(s))) /
                                          clip.label / (clip.id + config.extension);
        const std::filesystem::path out_path = root / rel;

        const std::string cmd = substitute_template(
            config.command_template,
            {{"input", clip.video_ref},
             {"output", out_path.string()},
             {"first_frame", std::to_string(clip.first_frame)},
             {"last_frame", std::to_string(clip.last_frame)},
             {"start_ms", std::to_string(clip.start_ms)},
             {"end_ms", std::to_string(clip.end_ms)},
             {"fps", std::to_string(config.frame_rate)},
             {"crop", build_crop_expr(clip)}});

        Outcome& out = outcomes[i];
        for (int attempt = 0; attempt <= config.retries; ++attempt) {
            const CommandResult r = run_command(cmd, config.timeout_ms);
            if (r.timed_out) {
                out.reason = "extractor timed out";
                continue;
            }
            if (r.exit_code != 0) {
                out.reason = "extractor exited with code " + std::to_string(r.exit_code);
                continue;
            }
            if (!std::filesystem::exists(out_path)) {
                out.reason = "extractor succeeded but output file is missing";
                continue;
            }
            out.ok = true;
            out.rel_path = rel.string();
            break;
        }
    };

    const int workers = std::max(1, config.workers);
    if (workers == 1 || clips.size() <= 1) {
        for (std::size_t i = 0; i < clips.size(); ++i) process(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < clips.size(); i = next.fetch_add(1)) {
                    process(i);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    // Manifest assembly is serialized in plan order.
    KineticsExport result;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const ClipSpec& clip = clips[i];
        if (outcomes[i].ok) {
            result.manifest.push_back(KineticsManifestRow{outcomes[i].rel_path, clip.label,
                                                          clip.cow_id, clip.video_ref,
                                                          clip.start_ms, clip.end_ms,
                                                          split.at(clip.id)});
        } else {
            result.failures.push_back(ExtractionFailure{clip.id, outcomes[i].reason});
        }
    }
    return result;
}

void write_manifest_csv(std::ostream& out, std::span<const KineticsManifestRow> rows) {
    out << "path,label,cow_id,video_ref,start_ms,end_ms,split\n";
    for (const auto& r : rows) {
        out << detail::csv_escape(r.path) << ',' << detail::csv_escape(r.label) << ','
            << r.cow_id << ',' << detail::csv_escape(r.video_ref) << ',' << r.start_ms << ','
            << r.end_ms << ',' << to_string(r.split) << '\n';
    }
}

std::vector<KineticsManifestRow> read_manifest_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) ||
        detail::trim(line) != "path,label,cow_id,video_ref,start_ms,end_ms,split") {
        throw ValidationError("manifest csv: bad header");
    }
    std::vector<KineticsManifestRow> rows;
    std::size_t line_no = 1;
    auto to_i64 = [&](const std::string& s) {
        std::int64_t v = 0;
        auto [ptr, ec2] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec2 != std::errc{} || ptr != s.data() + s.size()) {
            throw ValidationError("manifest csv: line " + std::to_string(line_no) +
                                  ": bad integer '" + s + "'");
        }
        return v;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto f = detail::split_csv_row(line);
        if (f.size() != 7) {
            throw ValidationError("manifest csv: line " + std::to_string(line_no) +
                                  ": expected 7 fields");
        }
        rows.push_back(KineticsManifestRow{f[0], f[1], static_cast<int>(to_i64(f[2])), f[3],
                                           to_i64(f[4]), to_i64(f[5]), split_from_string(f[6])});
    }
    return rows;
}

}  // namespace herdpipe
