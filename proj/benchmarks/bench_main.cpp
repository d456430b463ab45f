#include <benchmark/benchmark.h>

#include <sstream>
#include <vector>

#include "herdpipe/clipgeom.hpp"
#include "herdpipe/dataset_export.hpp"
#include "herdpipe/eval_metrics.hpp"
#include "herdpipe/synth.hpp"
#include "herdpipe/tracks.hpp"
#include "herdpipe/vtt.hpp"

using namespace herdpipe;

namespace {

Track bench_track(std::size_t keyframes) {
    DeterministicRng rng(1);
    std::vector<Keyframe> kfs;
    for (std::size_t i = 0; i < keyframes; ++i) {
        kfs.push_back(Keyframe{static_cast<FrameIndex>(i * 9),
                               BBox{rng.uniform_real(0, 1600), rng.uniform_real(0, 900),
                                    100 + rng.uniform_real(0, 200),
                                    100 + rng.uniform_real(0, 150)}});
    }
    return make_track(1, std::move(kfs));
}

void BM_Interpolate(benchmark::State& state) {
    const Track track = bench_track(400);
    FrameIndex f = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(interpolate(track, f));
        f = (f + 7) % (track.last_frame() + 1);
    }
}
BENCHMARK(BM_Interpolate);

void BM_Iou(benchmark::State& state) {
    const BBox a{100, 100, 250, 180};
    const BBox b{160, 140, 240, 200};
    for (auto _ : state) {
        benchmark::DoNotOptimize(iou(a, b));
    }
}
BENCHMARK(BM_Iou);

void BM_ParseVtt(benchmark::State& state) {
    DeterministicRng rng(2);
    std::vector<BehaviourCue> cues;
    const auto& labels = LabelSet::defaults();
    for (int i = 0; i < state.range(0); ++i) {
        const std::int64_t start = static_cast<std::int64_t>(rng.uniform_u64(20000000));
        cues.push_back(BehaviourCue{1 + static_cast<int>(rng.uniform_u64(8)),
                                    labels.at(rng.uniform_u64(3)), Timecode{start},
                                    Timecode{start + 5000}});
    }
    const std::string doc = serialize_vtt(cues);
    for (auto _ : state) {
        benchmark::DoNotOptimize(parse_vtt(doc));
    }
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(doc.size()));
}
BENCHMARK(BM_ParseVtt)->Arg(100)->Arg(1000);

void BM_AveragePrecision(benchmark::State& state) {
    DeterministicRng rng(3);
    std::vector<GroundTruthBox> gt;
    std::vector<Detection> pred;
    for (int frame = 0; frame < state.range(0); ++frame) {
        for (int cow = 1; cow <= 8; ++cow) {
            const BBox box{rng.uniform_real(0, 1600), rng.uniform_real(0, 900),
                           100 + rng.uniform_real(0, 200), 100 + rng.uniform_real(0, 150)};
            gt.push_back(GroundTruthBox{frame, box, cow});
            pred.push_back(Detection{frame,
                                     BBox{box.x + rng.uniform_real(-20, 20),
                                          box.y + rng.uniform_real(-20, 20), box.w, box.h},
                                     cow, rng.uniform_real()});
        }
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(average_precision(gt, pred));
    }
}
BENCHMARK(BM_AveragePrecision)->Arg(50)->Arg(200);

void BM_SplitItems(benchmark::State& state) {
    std::vector<std::string> ids;
    for (int i = 0; i < state.range(0); ++i) ids.push_back("item_" + std::to_string(i));
    for (auto _ : state) {
        benchmark::DoNotOptimize(split_items(ids, SplitRatios{}, 7));
    }
}
BENCHMARK(BM_SplitItems)->Arg(1715);

void BM_PlanClips(benchmark::State& state) {
    const Scene scene = generate([] {
        SceneSpec spec;
        spec.n_cows = 3;
        spec.duration_ms = 120000;
        return spec;
    }());
    PlanParams params;
    params.frame_w = scene.spec.frame_w;
    params.frame_h = scene.spec.frame_h;
    params.video_ref = "bench";
    for (auto _ : state) {
        benchmark::DoNotOptimize(plan_clips(scene.tracks, scene.cues, params));
    }
}
BENCHMARK(BM_PlanClips);

}  // namespace

BENCHMARK_MAIN();
