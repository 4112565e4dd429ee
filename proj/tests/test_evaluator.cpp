// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "synthdet/check.hpp"
#include "synthdet/evaluator.hpp"
#include "synthdet/rng.hpp"

namespace sd = synthdet;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("synthdet_ev_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// One image, one category, two gt boxes. Detections in score order hit
// gt A, miss, hit gt B: flags {TP, FP, TP}.
struct FrozenFixture {
  sd::Dataset gt;
  std::vector<sd::Detection> dets;
};

FrozenFixture frozen_fixture() {
  FrozenFixture fx;
  fx.gt.categories = {{1, "square"}};
  fx.gt.images = {{1, 64, 64, "a.ppm"}};
  fx.gt.annotations = {{10, 1, 1, {0, 0, 10, 10}},
                       {11, 1, 1, {20, 20, 8, 8}}};
  fx.dets = {{1, 1, {0, 0, 10, 10}, 0.9},
             {1, 1, {40, 40, 5, 5}, 0.8},
             {1, 1, {20, 20, 8, 8}, 0.7}};
  return fx;
}

// 101-point interpolated AP computed longhand for an arbitrary flag list.
double oracle_ap(const std::vector<bool>& flags, int num_gt) {
  if (num_gt == 0) return 0.0;
  std::vector<double> precision, recall;
  int tp = 0;
  for (size_t i = 0; i < flags.size(); ++i) {
    tp += flags[i] ? 1 : 0;
    precision.push_back(double(tp) / double(i + 1));
    recall.push_back(double(tp) / num_gt);
  }
  double sum = 0.0;
  for (int k = 0; k < sd::kNumRecallPoints; ++k) {
    double r = double(k) / (sd::kNumRecallPoints - 1);
    double best = 0.0;
    for (size_t i = 0; i < flags.size(); ++i) {
      if (recall[i] + 1e-12 >= r) best = std::max(best, precision[i]);
    }
    sum += best;
  }
  return sum / sd::kNumRecallPoints;
}

}  // namespace

TEST_CASE("iou thresholds step from 0.5 to 0.95") {
  CHECK(sd::eval_iou_threshold(0) == doctest::Approx(0.5));
  CHECK(sd::eval_iou_threshold(9) == doctest::Approx(0.95));
  for (int i = 1; i < sd::kNumIouThresholds; ++i) {
    CHECK(sd::eval_iou_threshold(i) - sd::eval_iou_threshold(i - 1) ==
          doctest::Approx(0.05));
  }
}

TEST_CASE("frozen ranking fixture yields exactly 253/303") {
  // {TP, FP, TP} with 2 gt: 51 recall points at precision 1 and 50 at 2/3.
  const double want = 253.0 / 303.0;
  CHECK(sd::average_precision({true, false, true}, 2) ==
        doctest::Approx(want).epsilon(1e-12));

  FrozenFixture fx = frozen_fixture();
  sd::EvalResult r = sd::evaluate(fx.dets, fx.gt);
  CHECK(r.ap == doctest::Approx(want).epsilon(1e-12));
  CHECK(r.ap50 == doctest::Approx(want).epsilon(1e-12));
  REQUIRE(r.per_category.count(1) == 1);
  CHECK(r.per_category.at(1).num_gt == 2);
  for (double ap : r.per_category.at(1).ap_by_iou) {
    CHECK(ap == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("average precision agrees with the longhand oracle") {
  sd::Rng r(19);
  for (int trial = 0; trial < 300; ++trial) {
    int num_gt = r.uniform_range(1, 8);
    int n = r.uniform_range(0, 12);
    std::vector<bool> flags;
    int tp_budget = num_gt;
    for (int i = 0; i < n; ++i) {
      bool tp = tp_budget > 0 && r.bernoulli(0.5);
      if (tp) --tp_budget;
      flags.push_back(tp);
    }
    CHECK(sd::average_precision(flags, num_gt) ==
          doctest::Approx(oracle_ap(flags, num_gt)).epsilon(1e-12));
  }
}

TEST_CASE("echoing the ground truth scores a perfect AP") {
  FrozenFixture fx = frozen_fixture();
  std::vector<sd::Detection> echo;
  double score = 0.9;
  for (const auto& g : fx.gt.annotations) {
    echo.push_back({g.image_id, g.category_id, g.bbox, score});
    score -= 0.05;
  }
  sd::EvalResult r = sd::evaluate(echo, fx.gt);
  CHECK(r.ap == doctest::Approx(1.0));
  CHECK(r.ap50 == doctest::Approx(1.0));

  sd::EvalResult none = sd::evaluate({}, fx.gt);
  CHECK(none.ap == 0.0);
  CHECK(none.ap50 == 0.0);
}

TEST_CASE("greedy matching takes the highest-IoU unmatched gt") {
  std::vector<sd::InstanceAnnotation> gts = {{1, 1, 1, {0, 0, 10, 10}},
                                             {2, 1, 1, {4, 0, 10, 10}}};
  // Overlaps gt 2 more than gt 1.
  std::vector<sd::Detection> dets = {{1, 1, {3, 0, 10, 10}, 0.9},
                                     {1, 1, {3, 0, 10, 10}, 0.8}};
  auto flags = sd::match_for_eval(dets, gts, 0.5);
  CHECK(flags[0]);  // takes gt 2
  CHECK(flags[1]);  // falls back to gt 1 (IoU 7/13 >= 0.5)

  // A duplicate of an already-claimed gt is a false positive.
  std::vector<sd::Detection> dup = {{1, 1, {0, 0, 10, 10}, 0.9},
                                    {1, 1, {0, 0, 10, 10}, 0.8}};
  std::vector<sd::InstanceAnnotation> one = {{1, 1, 1, {0, 0, 10, 10}}};
  auto dup_flags = sd::match_for_eval(dup, one, 0.5);
  CHECK(dup_flags[0]);
  CHECK_FALSE(dup_flags[1]);

  // IoU exactly at the threshold counts.
  std::vector<sd::InstanceAnnotation> g2 = {{1, 1, 1, {0, 0, 10, 5}}};
  std::vector<sd::Detection> d2 = {{1, 1, {0, 0, 10, 10}, 0.9}};
  CHECK(sd::iou(d2[0].bbox, g2[0].bbox) == 0.5);
  CHECK(sd::match_for_eval(d2, g2, 0.5)[0]);

  // Wrong image or wrong category never matches.
  std::vector<sd::Detection> wrong = {{2, 1, {0, 0, 10, 10}, 0.9},
                                      {1, 3, {0, 0, 10, 10}, 0.8}};
  auto wf = sd::match_for_eval(wrong, one, 0.5);
  CHECK_FALSE(wf[0]);
  CHECK_FALSE(wf[1]);

  // Unsorted input is rejected.
  std::vector<sd::Detection> unsorted = {{1, 1, {0, 0, 10, 10}, 0.5},
                                         {1, 1, {0, 0, 10, 10}, 0.9}};
  CHECK_THROWS_AS((void)sd::match_for_eval(unsorted, one, 0.5), sd::Error);
}

TEST_CASE("evaluate is invariant to detection list order") {
  FrozenFixture fx = frozen_fixture();
  fx.gt.images.push_back({2, 64, 64, "b.ppm"});
  fx.gt.annotations.push_back({12, 2, 1, {5, 5, 12, 12}});
  fx.dets.push_back({2, 1, {6, 5, 12, 12}, 0.85});
  fx.dets.push_back({2, 1, {30, 30, 6, 6}, 0.45});

  sd::EvalResult base = sd::evaluate(fx.dets, fx.gt);
  std::vector<sd::Detection> shuffled = fx.dets;
  sd::Rng r(3);
  r.shuffle(shuffled);
  sd::EvalResult again = sd::evaluate(shuffled, fx.gt);
  CHECK(base.ap == doctest::Approx(again.ap).epsilon(1e-15));
  CHECK(base.ap50 == doctest::Approx(again.ap50).epsilon(1e-15));
}

TEST_CASE("adding a true positive never lowers AP") {
  FrozenFixture fx = frozen_fixture();
  fx.gt.annotations.push_back({12, 1, 1, {40, 0, 9, 9}});
  std::vector<sd::Detection> dets = {{1, 1, {0, 0, 10, 10}, 0.9},
                                     {1, 1, {50, 50, 5, 5}, 0.6}};
  double before = sd::evaluate(dets, fx.gt).ap;
  dets.push_back({1, 1, {40, 0, 9, 9}, 0.95});
  double after = sd::evaluate(dets, fx.gt).ap;
  CHECK(after >= before);
}

TEST_CASE("filtered annotations are not ground truth") {
  FrozenFixture fx = frozen_fixture();
  fx.gt.annotations[1].filtered_out = true;
  // The detection that used to match gt B is now a false positive.
  sd::EvalResult r = sd::evaluate(fx.dets, fx.gt);
  CHECK(r.per_category.at(1).num_gt == 1);
  // Flags become {TP, FP, FP} with 1 gt: precision 1 at recall 1.
  CHECK(r.ap == doctest::Approx(1.0));

  // All-filtered gt means the category does not count at all: its entry
  // carries no AP values and the overall mean is over zero categories.
  fx.gt.annotations[0].filtered_out = true;
  sd::EvalResult empty = sd::evaluate(fx.dets, fx.gt);
  CHECK(empty.per_category.at(1).num_gt == 0);
  CHECK(empty.per_category.at(1).ap_by_iou.empty());
  CHECK(empty.ap == 0.0);
}

TEST_CASE("categories without ground truth are excluded from means") {
  FrozenFixture fx = frozen_fixture();
  fx.gt.categories.push_back({2, "disc"});
  // Detections on the gt-less category change nothing.
  sd::EvalResult base = sd::evaluate(fx.dets, fx.gt);
  auto noisy = fx.dets;
  noisy.push_back({1, 2, {0, 0, 10, 10}, 0.99});
  std::sort(noisy.begin(), noisy.end(),
            [](const sd::Detection& a, const sd::Detection& b) {
              return a.score > b.score;
            });
  sd::EvalResult with_noise = sd::evaluate(noisy, fx.gt);
  CHECK(base.ap == doctest::Approx(with_noise.ap));
  CHECK(with_noise.per_category.at(2).num_gt == 0);
  CHECK(with_noise.per_category.at(2).ap_by_iou.empty());
}

TEST_CASE("bucket APs decompose the category mean") {
  sd::Dataset gt;
  gt.categories = {{1, "a", sd::FrequencyBucket::kRare, 4},
                   {2, "b", sd::FrequencyBucket::kCommon, 50},
                   {3, "c", sd::FrequencyBucket::kFrequent, 160},
                   {4, "d", sd::FrequencyBucket::kFrequent, 200}};
  gt.images = {{1, 64, 64, "a.ppm"}};
  gt.annotations = {{10, 1, 1, {0, 0, 10, 10}},
                    {11, 1, 2, {15, 0, 10, 10}},
                    {12, 1, 3, {30, 0, 10, 10}},
                    {13, 1, 4, {45, 0, 10, 10}}};
  // Perfect on 1 and 3, nothing on 2, nothing on 4.
  std::vector<sd::Detection> dets = {{1, 1, {0, 0, 10, 10}, 0.9},
                                     {1, 3, {30, 0, 10, 10}, 0.8}};
  sd::EvalResult r = sd::evaluate(dets, gt);
  REQUIRE(r.ap_rare.has_value());
  REQUIRE(r.ap_common.has_value());
  REQUIRE(r.ap_frequent.has_value());
  CHECK(*r.ap_rare == doctest::Approx(1.0));
  CHECK(*r.ap_common == doctest::Approx(0.0));
  CHECK(*r.ap_frequent == doctest::Approx(0.5));

  // Overall AP is the per-category mean, which equals the bucket-size
  // weighted mean of the bucket APs.
  double weighted = (1 * *r.ap_rare + 1 * *r.ap_common + 2 * *r.ap_frequent) /
                    4.0;
  CHECK(r.ap == doctest::Approx(weighted).epsilon(1e-12));

  // Removing the rare category's gt leaves that bucket undefined.
  sd::Dataset no_rare = gt;
  no_rare.annotations.erase(no_rare.annotations.begin());
  sd::EvalResult r2 = sd::evaluate(dets, no_rare);
  CHECK_FALSE(r2.ap_rare.has_value());
  CHECK(r2.ap_common.has_value());
}

TEST_CASE("per image and category detections are capped") {
  sd::Dataset gt;
  gt.categories = {{1, "a"}};
  gt.images = {{1, 512, 512, "a.ppm"}};
  gt.annotations = {{10, 1, 1, {0, 0, 10, 10}}};

  // 120 high-score false positives crowd out a low-score true positive.
  std::vector<sd::Detection> dets;
  for (int i = 0; i < 120; ++i) {
    dets.push_back({1, 1, {200.0 + i, 200.0, 5, 5}, 0.9 - i * 0.001});
  }
  dets.push_back({1, 1, {0, 0, 10, 10}, 0.1});
  sd::EvalResult r = sd::evaluate(dets, gt);
  // The true positive ranks 121st and is dropped by the 100 cap: AP 0.
  CHECK(r.ap == 0.0);

  // With only 90 false positives it survives and AP is positive.
  std::vector<sd::Detection> fewer(dets.begin(), dets.begin() + 90);
  fewer.push_back({1, 1, {0, 0, 10, 10}, 0.1});
  CHECK(sd::evaluate(fewer, gt).ap > 0.0);
}

TEST_CASE("eval results round-trip through json") {
  FrozenFixture fx = frozen_fixture();
  sd::EvalResult r = sd::evaluate(fx.dets, fx.gt);
  auto dir = temp_dir("json");
  sd::save_eval_result(r, dir / "eval.json");
  sd::EvalResult back = sd::load_eval_result(dir / "eval.json");
  CHECK(back.ap == doctest::Approx(r.ap).epsilon(1e-15));
  CHECK(back.ap50 == doctest::Approx(r.ap50).epsilon(1e-15));
  CHECK(back.ap_rare.has_value() == r.ap_rare.has_value());
  REQUIRE(back.per_category.count(1) == 1);
  CHECK(back.per_category.at(1).num_gt == 2);

  std::string table = sd::format_eval_table(r);
  CHECK(table.find("AP") != std::string::npos);
  CHECK(table.find("83.5") != std::string::npos);  // 253/303 * 100
}
