#include <doctest.h>

#include <cmath>
#include <sstream>

#include "herdpipe/eval_metrics.hpp"
#include "herdpipe/synth.hpp"

using namespace herdpipe;

namespace {

// Table fixture used throughout: counts of the three-class action test set.
ConfusionMatrix action_table() {
    ConfusionMatrix cm;
    cm.labels = {"Drinking", "Grazing", "Other"};
    cm.counts = {{92, 6, 11}, {2, 117, 5}, {12, 55, 50}};
    return cm;
}

std::vector<GroundTruthBox> one_gt() {
    return {GroundTruthBox{0, BBox{10, 10, 50, 50}, 1}};
}

}  // namespace

TEST_CASE("match_detections: a perfect prediction is a single TP") {
    const auto gt = one_gt();
    const std::vector<Detection> pred = {{0, BBox{10, 10, 50, 50}, 1, 0.9}};
    const auto m = match_detections(gt, pred, 0.5);
    REQUIRE(m.matches.size() == 1);
    CHECK(m.matches[0].iou == doctest::Approx(1.0));
    CHECK(m.unmatched_gt.empty());
    CHECK(m.unmatched_pred.empty());
}

TEST_CASE("match_detections: the higher-score duplicate wins") {
    const auto gt = one_gt();
    const std::vector<Detection> pred = {
        {0, BBox{12, 10, 50, 50}, 1, 0.6},
        {0, BBox{10, 10, 50, 50}, 1, 0.9},
    };
    const auto m = match_detections(gt, pred, 0.5);
    REQUIRE(m.matches.size() == 1);
    CHECK(m.matches[0].pred_index == 1);  // score 0.9 claims the box
    REQUIRE(m.unmatched_pred.size() == 1);
    CHECK(m.unmatched_pred[0] == 0);
}

TEST_CASE("match_detections: below-threshold IoU is FP plus FN") {
    const auto gt = one_gt();
    // (10,10,50,50) vs (40,10,50,50): overlap 20x50 = 1000, union 4000, IoU 0.25.
    const std::vector<Detection> pred = {{0, BBox{40, 10, 50, 50}, 1, 0.9}};
    REQUIRE(iou(gt[0].box, pred[0].box) < 0.5);
    const auto m = match_detections(gt, pred, 0.5);
    CHECK(m.matches.empty());
    CHECK(m.unmatched_gt.size() == 1);
    CHECK(m.unmatched_pred.size() == 1);
}

TEST_CASE("match_detections pairs only within a frame and category") {
    const std::vector<GroundTruthBox> gt = {
        {0, BBox{10, 10, 50, 50}, 1},
        {1, BBox{10, 10, 50, 50}, 1},
    };
    const std::vector<Detection> pred = {
        {1, BBox{10, 10, 50, 50}, 1, 0.9},  // frame 1 matches frame-1 GT only
        {0, BBox{10, 10, 50, 50}, 2, 0.9},  // wrong category
    };
    const auto m = match_detections(gt, pred, 0.5);
    REQUIRE(m.matches.size() == 1);
    CHECK(m.matches[0].gt_index == 1);
    CHECK(m.unmatched_pred == std::vector<std::size_t>{1});
}

TEST_CASE("matching counts balance: TP + FN = GT, TP + FP = preds") {
    DeterministicRng rng(51);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<GroundTruthBox> gt;
        std::vector<Detection> pred;
        const std::size_t n_gt = rng.uniform_u64(6);
        const std::size_t n_pred = rng.uniform_u64(9);
        for (std::size_t i = 0; i < n_gt; ++i) {
            gt.push_back(GroundTruthBox{static_cast<std::int64_t>(rng.uniform_u64(2)),
                                        BBox{rng.uniform_real(0, 100), rng.uniform_real(0, 100),
                                             5 + rng.uniform_real(0, 50),
                                             5 + rng.uniform_real(0, 50)},
                                        1 + static_cast<int>(rng.uniform_u64(2))});
        }
        for (std::size_t i = 0; i < n_pred; ++i) {
            pred.push_back(Detection{static_cast<std::int64_t>(rng.uniform_u64(2)),
                                     BBox{rng.uniform_real(0, 100), rng.uniform_real(0, 100),
                                          5 + rng.uniform_real(0, 50), 5 + rng.uniform_real(0, 50)},
                                     1 + static_cast<int>(rng.uniform_u64(2)),
                                     rng.uniform_real()});
        }
        const auto m = match_detections(gt, pred, 0.5);
        CHECK(m.matches.size() + m.unmatched_gt.size() == gt.size());
        CHECK(m.matches.size() + m.unmatched_pred.size() == pred.size());
    }
}

TEST_CASE("average_precision: a perfect detector scores 1.0") {
    std::vector<GroundTruthBox> gt;
    std::vector<Detection> pred;
    for (int f = 0; f < 5; ++f) {
        for (int c = 1; c <= 3; ++c) {
            const BBox box{10.0 * c, 5.0 * f, 40, 30};
            gt.push_back(GroundTruthBox{f, box, c});
            pred.push_back(Detection{f, box, c, 1.0});
        }
    }
    const auto r = average_precision(gt, pred);
    CHECK(r.mean_ap == doctest::Approx(1.0));
    CHECK(r.mean_ar == doctest::Approx(1.0));
    REQUIRE(r.per_class.size() == 3);
    for (const auto& m : r.per_class) {
        CHECK(m.ap == doctest::Approx(1.0));
        CHECK(m.ar == doctest::Approx(1.0));
    }
}

TEST_CASE("average_precision: no predictions means zero AP") {
    const auto r = average_precision(one_gt(), {});
    CHECK(r.mean_ap == 0.0);
    CHECK(r.mean_ar == 0.0);
}

TEST_CASE("average_precision rejects empty ground truth") {
    CHECK_THROWS_AS(average_precision({}, {}), ValidationError);
}

TEST_CASE("classes absent from the ground truth are excluded from the mean") {
    const auto gt = one_gt();
    const std::vector<Detection> pred = {
        {0, BBox{10, 10, 50, 50}, 1, 0.9},
        {0, BBox{200, 200, 30, 30}, 7, 0.8},  // class 7 has no GT
    };
    const auto r = average_precision(gt, pred);
    REQUIRE(r.per_class.size() == 1);
    CHECK(r.per_class[0].category == 1);
    CHECK(r.mean_ap == doctest::Approx(1.0));
}

TEST_CASE("AP depends only on the score ranking") {
    DeterministicRng rng(52);
    std::vector<GroundTruthBox> gt;
    std::vector<Detection> pred;
    for (int f = 0; f < 6; ++f) {
        gt.push_back(GroundTruthBox{f, BBox{rng.uniform_real(0, 100), rng.uniform_real(0, 100),
                                            20 + rng.uniform_real(0, 40),
                                            20 + rng.uniform_real(0, 40)},
                                    1});
        // A mix of good and bad predictions with distinct scores.
        pred.push_back(Detection{f, gt.back().box, 1, 0.1 + 0.1 * f});
        pred.push_back(Detection{f, BBox{500, 500, 10, 10}, 1, 0.05 + 0.1 * f});
    }
    const auto base = average_precision(gt, pred);

    auto squashed = pred;
    for (auto& d : squashed) d.score = d.score * d.score * 0.5;  // strictly monotone on [0,1]
    const auto transformed = average_precision(gt, squashed);

    CHECK(base.mean_ap == doctest::Approx(transformed.mean_ap).epsilon(1e-12));
    CHECK(base.mean_ar == doctest::Approx(transformed.mean_ar).epsilon(1e-12));
}

TEST_CASE("eval matches the exhaustive oracle on random small instances") {
    DeterministicRng rng(53);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<GroundTruthBox> gt;
        std::vector<Detection> pred;
        const std::size_t n_gt = 1 + rng.uniform_u64(5);
        const std::size_t n_pred = rng.uniform_u64(9);
        for (std::size_t i = 0; i < n_gt; ++i) {
            gt.push_back(GroundTruthBox{static_cast<std::int64_t>(rng.uniform_u64(2)),
                                        BBox{rng.uniform_real(0, 80), rng.uniform_real(0, 80),
                                             10 + rng.uniform_real(0, 60),
                                             10 + rng.uniform_real(0, 60)},
                                        1 + static_cast<int>(rng.uniform_u64(2))});
        }
        for (std::size_t i = 0; i < n_pred; ++i) {
            const bool near_gt = !gt.empty() && rng.uniform_real() < 0.6;
            BBox box;
            if (near_gt) {
                const auto& target = gt[rng.uniform_u64(gt.size())].box;
                box = BBox{target.x + rng.uniform_real(-10, 10),
                           target.y + rng.uniform_real(-10, 10),
                           std::max(5.0, target.w + rng.uniform_real(-10, 10)),
                           std::max(5.0, target.h + rng.uniform_real(-10, 10))};
            } else {
                box = BBox{rng.uniform_real(0, 80), rng.uniform_real(0, 80),
                           10 + rng.uniform_real(0, 60), 10 + rng.uniform_real(0, 60)};
            }
            pred.push_back(Detection{static_cast<std::int64_t>(rng.uniform_u64(2)), box,
                                     1 + static_cast<int>(rng.uniform_u64(2)),
                                     rng.uniform_real()});
        }
        const auto fast = average_precision(gt, pred);
        const auto oracle = oracle_detection_metrics(gt, pred);
        CHECK(std::abs(fast.mean_ap - oracle.mean_ap) <= 1e-9);
        CHECK(std::abs(fast.mean_ar - oracle.mean_ar) <= 1e-9);
    }
}

TEST_CASE("confusion reproduces the action test counts") {
    std::vector<std::string> gt, pred;
    const auto table = action_table();
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            for (std::int64_t k = 0; k < table.counts[i][j]; ++k) {
                gt.push_back(table.labels[i]);
                pred.push_back(table.labels[j]);
            }
        }
    }
    const auto cm = confusion(gt, pred, LabelSet::defaults());
    CHECK(cm.counts == action_table().counts);
    CHECK(cm.row_sums() == std::vector<std::int64_t>{109, 124, 117});
}

TEST_CASE("confusion: identical lists are diagonal; empty lists are zero") {
    const std::vector<std::string> labels = {"Drinking", "Grazing", "Other", "Drinking"};
    const auto cm = confusion(labels, labels, LabelSet::defaults());
    CHECK(cm.counts == std::vector<std::vector<std::int64_t>>{{2, 0, 0}, {0, 1, 0}, {0, 0, 1}});

    const auto empty = confusion({}, {}, LabelSet::defaults());
    CHECK(empty.total() == 0);
}

TEST_CASE("confusion error paths") {
    const std::vector<std::string> one = {"Drinking"};
    const std::vector<std::string> two = {"Drinking", "Grazing"};
    CHECK_THROWS_AS(confusion(one, two, LabelSet::defaults()), ValidationError);
    const std::vector<std::string> bad = {"Sleeping"};
    CHECK_THROWS_AS(confusion(bad, one, LabelSet::defaults()), ValidationError);
}

TEST_CASE("per-class accuracies of the action table") {
    const auto acc = per_class_accuracy(action_table());
    REQUIRE(acc.size() == 3);
    CHECK(acc[0] * 100.0 == doctest::Approx(84.4).epsilon(0.001));
    CHECK(acc[1] * 100.0 == doctest::Approx(94.4).epsilon(0.001));
    CHECK(acc[2] * 100.0 == doctest::Approx(42.7).epsilon(0.001));
}

TEST_CASE("overall accuracy of the action table: micro 74.0, macro 73.8") {
    const auto cm = action_table();
    CHECK(overall_accuracy(cm) == doctest::Approx(259.0 / 350.0).epsilon(1e-12));
    CHECK(overall_accuracy(cm) * 100.0 == doctest::Approx(74.0).epsilon(0.001));
    CHECK(macro_accuracy(cm) * 100.0 == doctest::Approx(73.83).epsilon(0.001));
}

TEST_CASE("a perfect classifier has 100% everywhere") {
    ConfusionMatrix cm;
    cm.labels = {"Drinking", "Grazing", "Other"};
    cm.counts = {{10, 0, 0}, {0, 20, 0}, {0, 0, 30}};
    for (double a : per_class_accuracy(cm)) CHECK(a == 1.0);
    CHECK(overall_accuracy(cm) == 1.0);
}

TEST_CASE("zero rows are undefined per class, all-zero is an error overall") {
    ConfusionMatrix cm;
    cm.labels = {"Drinking", "Grazing", "Other"};
    cm.counts = {{5, 0, 0}, {0, 0, 0}, {0, 0, 5}};
    const auto acc = per_class_accuracy(cm);
    CHECK(std::isnan(acc[1]));
    CHECK(macro_accuracy(cm) == doctest::Approx(1.0));

    cm.counts = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    CHECK_THROWS_AS(overall_accuracy(cm), ValidationError);
}

TEST_CASE("detection jsonl round trips") {
    const std::vector<GroundTruthBox> gt = {{3, BBox{1.5, 2.25, 10, 20}, 2}};
    const std::vector<Detection> pred = {{3, BBox{1.5, 2.25, 10, 20}, 2, 0.75}};
    std::stringstream a, b;
    write_gt_jsonl(a, gt);
    write_detections_jsonl(b, pred);
    CHECK(read_gt_jsonl(a) == gt);
    CHECK(read_detections_jsonl(b) == pred);
}
