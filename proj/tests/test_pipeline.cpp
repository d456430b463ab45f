#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <unistd.h>

#include "herdpipe/pipeline.hpp"

using namespace herdpipe;
namespace fs = std::filesystem;

namespace {

struct LambdaScorer : ActionScorer {
    std::function<ActionScore(const ClipSpec&)> fn;
    explicit LambdaScorer(std::function<ActionScore(const ClipSpec&)> f) : fn(std::move(f)) {}
    ActionScore score(const ClipSpec& clip) override { return fn(clip); }
};

ActionScore flat_score(const std::string& id, double drinking, double grazing, double other) {
    ActionScore s;
    s.clip_id = id;
    s.scores = {{"Drinking", drinking}, {"Grazing", grazing}, {"Other", other}};
    return s;
}

std::vector<Detection> constant_detections(int cow, FrameIndex first, FrameIndex last,
                                           const BBox& box) {
    std::vector<Detection> dets;
    for (FrameIndex f = first; f <= last; ++f) dets.push_back(Detection{f, box, cow, 1.0});
    return dets;
}

PipelineParams desk_params() {
    PipelineParams p;
    p.frame_w = 1920;
    p.frame_h = 1080;
    p.video_ref = "stream";
    return p;
}

fs::path make_temp_dir(const std::string& tag) {
    static std::uint64_t counter = 0;
    const fs::path p = fs::temp_directory_path() /
                       ("herdpipe-" + tag + "-" + std::to_string(::getpid()) + "-" +
                        std::to_string(counter++));
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("argmax validates the score record") {
    const auto& labels = LabelSet::defaults();
    CHECK(flat_score("c", 0.9, 0.05, 0.05).argmax(labels) ==
          std::pair<std::string, double>{"Drinking", 0.9});

    ActionScore unknown = flat_score("c", 0.9, 0.05, 0.05);
    unknown.scores.emplace_back("Sleeping", 0.1);
    CHECK_THROWS_AS(unknown.argmax(labels), ScorerError);

    ActionScore out_of_range = flat_score("c", 1.5, 0.0, 0.0);
    CHECK_THROWS_AS(out_of_range.argmax(labels), ScorerError);

    ActionScore bad_norm = flat_score("c", 0.9, 0.9, 0.9);
    bad_norm.normalized = true;
    CHECK_THROWS_AS(bad_norm.argmax(labels), ScorerError);

    // Ties resolve to the earlier label in the set.
    CHECK(flat_score("c", 0.4, 0.4, 0.2).argmax(labels).first == "Drinking");
}

TEST_CASE("merge_events: the D,D,D,G,G trace with a midpoint cut") {
    const std::vector<WindowResult> windows = {
        {0, 1000, "Drinking", 0.9},   {500, 1500, "Drinking", 0.8}, {1000, 2000, "Drinking", 1.0},
        {1500, 2500, "Grazing", 0.7}, {2000, 3000, "Grazing", 0.9},
    };
    const auto events = merge_events(2, windows, 0);
    REQUIRE(events.size() == 2);
    CHECK(events[0].label == "Drinking");
    CHECK(events[0].start.ms == 0);
    CHECK(events[0].end.ms == 1750);  // midpoint of the [1500, 2000] overlap
    CHECK(events[0].confidence == doctest::Approx(0.9));
    CHECK(events[1].label == "Grazing");
    CHECK(events[1].start.ms == 1750);
    CHECK(events[1].end.ms == 3000);
    CHECK(events[1].confidence == doctest::Approx(0.8));
}

TEST_CASE("merge_events: a single window is a single event") {
    const std::vector<WindowResult> windows = {{0, 1000, "Other", 0.6}};
    const auto events = merge_events(1, windows, 0);
    REQUIRE(events.size() == 1);
    CHECK(events[0] == BehaviourEvent{1, "Other", Timecode{0}, Timecode{1000}, 0.6});
}

TEST_CASE("merge_events: flicker shorter than min_duration is dropped") {
    const std::vector<WindowResult> windows = {
        {0, 1000, "Drinking", 0.9}, {500, 1500, "Grazing", 0.9}, {1000, 2000, "Drinking", 0.9},
    };
    CHECK(merge_events(1, windows, 1001).empty());
}

TEST_CASE("merged events never overlap") {
    DeterministicRng rng(61);
    const auto& labels = LabelSet::defaults();
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<WindowResult> windows;
        std::int64_t t = 0;
        const std::size_t n = 1 + rng.uniform_u64(30);
        for (std::size_t i = 0; i < n; ++i) {
            windows.push_back(WindowResult{t, t + 1000, labels.at(rng.uniform_u64(3)),
                                           rng.uniform_real()});
            t += 500;
        }
        const auto events = merge_events(1, windows, 0);
        for (std::size_t i = 1; i < events.size(); ++i) {
            CHECK(events[i - 1].end <= events[i].start);
        }
        for (const auto& e : events) CHECK(e.start < e.end);
    }
}

TEST_CASE("run_pipeline merges constant-label windows into one event") {
    // One cow detected for two seconds, scorer always says Drinking 0.9.
    const auto dets = constant_detections(3, 0, 60, BBox{100, 100, 200, 150});
    LambdaScorer scorer([](const ClipSpec& clip) {
        return flat_score(clip.id, 0.9, 0.05, 0.05);
    });
    const ClockMap clock{0.0, 1.0, 30.0};
    const auto result = run_pipeline(dets, clock, scorer, desk_params());

    CHECK(result.failures.empty());
    REQUIRE(result.events.size() == 1);
    CHECK(result.events[0].cow_id == 3);
    CHECK(result.events[0].label == "Drinking");
    CHECK(result.events[0].start.ms == 0);
    CHECK(result.events[0].end.ms == 2000);
    CHECK(result.events[0].confidence == doctest::Approx(0.9));
}

TEST_CASE("run_pipeline: a failing window degrades, the rest contribute") {
    const auto dets = constant_detections(1, 0, 75, BBox{50, 50, 100, 100});  // 2.5 s, 4 windows
    int calls = 0;
    LambdaScorer scorer([&](const ClipSpec& clip) {
        ++calls;
        if (clip.start_ms == 500) throw ScorerError("synthetic failure");
        return flat_score(clip.id, 0.9, 0.05, 0.05);
    });
    const ClockMap clock{0.0, 1.0, 30.0};
    const auto result = run_pipeline(dets, clock, scorer, desk_params());

    CHECK(calls == 4);
    REQUIRE(result.failures.size() == 1);
    CHECK(result.failures[0].reason == "synthetic failure");
    REQUIRE(result.events.size() == 1);  // three windows still span the whole tracklet
    CHECK(result.events[0].end.ms == 2500);
}

TEST_CASE("run_pipeline splits tracklets at detection gaps") {
    auto dets = constant_detections(1, 0, 60, BBox{50, 50, 100, 100});
    // A second burst after a 2 s hole (gap tolerance is 0.5 s).
    const auto later = constant_detections(1, 120, 180, BBox{400, 50, 100, 100});
    dets.insert(dets.end(), later.begin(), later.end());

    LambdaScorer scorer([](const ClipSpec& clip) {
        return flat_score(clip.id, 0.05, 0.9, 0.05);
    });
    const ClockMap clock{0.0, 1.0, 30.0};
    const auto result = run_pipeline(dets, clock, scorer, desk_params());

    REQUIRE(result.events.size() == 2);
    CHECK(result.events[0].start.ms == 0);
    CHECK(result.events[0].end.ms == 2000);
    CHECK(result.events[1].start.ms == 4000);
    CHECK(result.events[1].end.ms == 6000);
}

TEST_CASE("run_pipeline: no detections is an empty result, not an error") {
    LambdaScorer scorer([](const ClipSpec& clip) { return flat_score(clip.id, 1, 0, 0); });
    const ClockMap clock{0.0, 1.0, 30.0};
    const auto result = run_pipeline({}, clock, scorer, desk_params());
    CHECK(result.events.empty());
    CHECK(result.failures.empty());
}

TEST_CASE("run_pipeline output is independent of the worker count") {
    std::vector<Detection> dets;
    for (int cow = 1; cow <= 3; ++cow) {
        const auto d = constant_detections(cow, 0, 300, BBox{100.0 * cow, 80, 120, 90});
        dets.insert(dets.end(), d.begin(), d.end());
    }
    LambdaScorer scorer([](const ClipSpec& clip) {
        const double wobble = static_cast<double>(clip.start_ms % 3000) / 6000.0;
        return flat_score(clip.id, 0.5 + wobble / 2, 0.4, 0.05);
    });
    const ClockMap clock{0.0, 1.0, 30.0};

    auto params = desk_params();
    const auto serial = run_pipeline(dets, clock, scorer, params);
    params.workers = 4;
    const auto parallel = run_pipeline(dets, clock, scorer, params);
    CHECK(serial.events == parallel.events);
}

TEST_CASE("external command scorer round trip through a shell script") {
    const auto dir = make_temp_dir("scorer");

    // A stand-in scorer: answers Grazing 0.8 for whatever clip id it gets.
    const fs::path script = dir / "scorer.sh";
    {
        std::ofstream out(script);
        out << "#!/bin/sh\n"
               "id=$(sed 's/.*\"clip_id\":\"\\([^\"]*\\)\".*/\\1/' \"$1\")\n"
               "printf '{\"clip_id\":\"%s\",\"scores\":{\"Drinking\":0.1,\"Grazing\":0.8,"
               "\"Other\":0.1}}\\n' \"$id\" > \"$2\"\n";
    }
    fs::permissions(script, fs::perms::owner_all);

    ExternalScorerConfig config;
    config.command_template = script.string() + " {request} {response}";
    config.workdir = dir / "work";
    ExternalCommandScorer scorer(config);

    ClipSpec clip;
    clip.id = "clip_77";
    clip.video_ref = "cam1.mp4";
    clip.first_frame = 0;
    clip.last_frame = 29;
    clip.start_ms = 0;
    clip.end_ms = 1000;
    clip.crops = {CropTransform{BBox{0, 0, 100, 100}, 256, 1920, 1080}};

    const auto score = scorer.score(clip);
    CHECK(score.clip_id == "clip_77");
    CHECK(score.argmax(LabelSet::defaults()).first == "Grazing");

    fs::remove_all(dir);
}

TEST_CASE("external command scorer reports a failing command") {
    const auto dir = make_temp_dir("scorer-fail");
    ExternalScorerConfig config;
    config.command_template = "exit 9";
    config.workdir = dir;
    ExternalCommandScorer scorer(config);

    ClipSpec clip;
    clip.id = "clip_1";
    CHECK_THROWS_WITH_AS(scorer.score(clip), doctest::Contains("code 9"), ScorerError);
    fs::remove_all(dir);
}

TEST_CASE("precomputed scorer answers by clip id and rejects unknown clips") {
    PrecomputedScorer scorer({flat_score("known", 0.2, 0.3, 0.5)});
    ClipSpec clip;
    clip.id = "known";
    CHECK(scorer.score(clip).argmax(LabelSet::defaults()).first == "Other");
    clip.id = "unknown";
    CHECK_THROWS_AS(scorer.score(clip), ScorerError);
}

TEST_CASE("events round trip through jsonl and render as subtitles") {
    const std::vector<BehaviourEvent> events = {
        {2, "Drinking", Timecode{311000}, Timecode{323000}, 0.93},
        {8, "Grazing", Timecode{322000}, Timecode{340000}, 0.71},
    };
    std::stringstream buf;
    write_events_jsonl(buf, events);
    CHECK(read_events_jsonl(buf) == events);

    const std::string vtt = events_to_vtt(events);
    const auto cues = parse_vtt(vtt).cues;
    REQUIRE(cues.size() == 2);
    CHECK(cues[0].cow_id == 2);
    CHECK(cues[0].start.ms == 311000);
    CHECK(cues[1].action == "Grazing");
}

TEST_CASE("score records round trip through jsonl") {
    const std::vector<ActionScore> scores = {flat_score("a", 0.5, 0.25, 0.25)};
    std::stringstream buf;
    write_scores_jsonl(buf, scores);
    const auto back = read_scores_jsonl(buf);
    REQUIRE(back.size() == 1);
    CHECK(back[0].clip_id == "a");
    CHECK(back[0].argmax(LabelSet::defaults()).first == "Drinking");
}
