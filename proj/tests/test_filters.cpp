// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "synthdet/check.hpp"
#include "synthdet/detector_filter.hpp"
#include "synthdet/image_filter.hpp"
#include "synthdet/rng.hpp"

namespace sd = synthdet;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("synthdet_flt_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Synthetic dataset with one category and the given per-image corruption
// pattern: entry i lists which of the 4 annotations of image i are corrupt.
sd::Dataset scored_fixture(const std::vector<double>& scores) {
  sd::Dataset d;
  d.source = sd::Source::kSynthetic;
  d.categories = {{1, "square"}};
  for (size_t i = 0; i < scores.size(); ++i) {
    sd::ImageRecord im;
    im.id = static_cast<int64_t>(i + 1);
    im.width = im.height = 32;
    im.file_name = "s" + std::to_string(i) + ".ppm";
    im.source = sd::Source::kSynthetic;
    im.aesthetic_score = scores[i];
    d.images.push_back(im);
    d.annotations.push_back(
        {static_cast<int64_t>(100 + i), im.id, 1, {2, 2, 8, 8}});
  }
  return d;
}

// Independent re-statement of the keep rule for the oracle comparison:
// an annotation survives iff some prediction of its category (unless
// class-agnostic) has score strictly above tau_s and IoU strictly above
// tau_iou.
bool oracle_keep(const sd::InstanceAnnotation& ann,
                 const std::vector<sd::Detection>& preds,
                 const sd::DetectorFilterConfig& cfg) {
  for (const auto& p : preds) {
    if (!cfg.class_agnostic && p.category_id != ann.category_id) continue;
    if (p.score > cfg.tau_s && sd::iou(p.bbox, ann.bbox) > cfg.tau_iou) {
      return true;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("image filter keeps scores at or above the threshold") {
  sd::Dataset d = scored_fixture({4.49, 4.5, 4.51, 6.0, 0.0});
  sd::ImageFilterOutcome out = sd::filter_by_score(d, {4.5});
  std::set<int64_t> kept;
  for (const auto& im : out.kept.images) kept.insert(im.id);
  CHECK(kept == std::set<int64_t>{2, 3, 4});  // 4.5 itself is kept

  REQUIRE(out.report.decisions.size() == 5);
  for (const auto& dec : out.report.decisions) {
    CHECK(dec.tau_a == 4.5);
    CHECK(dec.kept == (dec.score >= 4.5));
  }
  CHECK(out.report.discarded_ids() == std::vector<int64_t>{1, 5});

  // Annotations follow their images.
  CHECK(out.kept.annotations.size() == 3);
  for (const auto& ann : out.kept.annotations) CHECK(kept.count(ann.image_id));
  sd::validate_dataset(out.kept);
}

TEST_CASE("image filter is monotone in the threshold") {
  std::vector<double> scores;
  sd::Rng r(12);
  for (int i = 0; i < 50; ++i) scores.push_back(r.uniform(2.0, 7.0));
  sd::Dataset d = scored_fixture(scores);
  size_t prev = d.images.size() + 1;
  for (double tau : {0.0, 3.0, 4.5, 5.0, 6.0, 8.0}) {
    sd::ImageFilterOutcome out = sd::filter_by_score(d, {tau});
    CHECK(out.kept.images.size() <= prev);
    prev = out.kept.images.size();
    CHECK(out.kept.images.size() + out.report.discarded_ids().size() ==
          d.images.size());
  }
}

TEST_CASE("image filter refuses unscored images") {
  sd::Dataset d = scored_fixture({5.0});
  d.images[0].aesthetic_score.reset();
  try {
    (void)sd::filter_by_score(d, {4.5});
    FAIL("expected a raised error");
  } catch (const sd::Error& e) {
    CHECK(std::string(e.what()).find("unscored") != std::string::npos);
  }
}

TEST_CASE("mock scorer separates clean from corrupted images") {
  sd::Dataset d = scored_fixture({0, 0});
  for (auto& im : d.images) im.aesthetic_score.reset();
  // Image 1 clean, image 2 fully corrupted.
  d.annotations[1].mock_corruption_kind = "blank";
  sd::MockAestheticScorer scorer(d, 42);
  auto clean = scorer.score(d.images[0]);
  auto corrupt = scorer.score(d.images[1]);
  REQUIRE(clean.has_value());
  REQUIRE(corrupt.has_value());
  CHECK(*clean > *corrupt);
  CHECK(*clean == doctest::Approx(6.0).epsilon(0.05));      // 6.0 +- 0.2
  CHECK(*corrupt == doctest::Approx(3.0).epsilon(0.1));     // 3.0 +- 0.2
  CHECK(scorer.score(d.images[0]) == clean);  // deterministic per image
}

TEST_CASE("scoring failures discard the image conservatively") {
  sd::Dataset d = scored_fixture({0, 0, 0});
  for (auto& im : d.images) im.aesthetic_score.reset();
  sd::FunctionScorer scorer([](const sd::ImageRecord& im)
                                -> std::optional<double> {
    if (im.id == 2) return std::nullopt;
    return 5.0;
  });
  sd::ScoredImages scored = sd::score_images(d, scorer);
  CHECK(scored.failed_image_ids == std::vector<int64_t>{2});
  CHECK(scored.dataset.images.size() == 2);
  for (const auto& im : scored.dataset.images) {
    CHECK(im.id != 2);
    CHECK(im.aesthetic_score == 5.0);
  }
  CHECK(scored.dataset.annotations.size() == 2);
  sd::validate_dataset(scored.dataset);
}

TEST_CASE("filter report round-trips through jsonl") {
  sd::Dataset d = scored_fixture({3.0, 5.0, 4.5});
  sd::ImageFilterOutcome out = sd::filter_by_score(d, {4.5});
  auto dir = temp_dir("report");
  sd::save_filter_report(out.report, dir / "r.jsonl");
  sd::FilterReport back = sd::load_filter_report(dir / "r.jsonl");
  REQUIRE(back.decisions.size() == out.report.decisions.size());
  for (size_t i = 0; i < back.decisions.size(); ++i) {
    CHECK(back.decisions[i].image_id == out.report.decisions[i].image_id);
    CHECK(back.decisions[i].score == out.report.decisions[i].score);
    CHECK(back.decisions[i].kept == out.report.decisions[i].kept);
  }
}

TEST_CASE("http scorer returns scores and degrades to failure") {
  auto dir = temp_dir("http_scorer");
  sd::Image px(8, 8);
  sd::save_ppm(px, dir / "img.ppm");

  httplib::Server server;
  server.Post("/score", [](const httplib::Request& q, httplib::Response& s) {
    // Any valid payload scores 4.25; schema checked via the b64 field.
    if (q.body.find("image_b64") == std::string::npos) {
      s.status = 400;
      return;
    }
    s.set_content("{\"score\": 4.25}", "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread st([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  sd::ImageRecord rec;
  rec.id = 1;
  rec.width = rec.height = 8;
  rec.file_name = "img.ppm";
  sd::HttpAestheticScorer scorer("127.0.0.1", port, dir, 2);
  CHECK(scorer.score(rec) == 4.25);

  server.stop();
  st.join();

  // Server gone: retries exhaust and the image reports as failed.
  sd::HttpAestheticScorer dead("127.0.0.1", port, dir, 2, 0.2);
  CHECK_FALSE(dead.score(rec).has_value());
}

TEST_CASE("instance filter matches the brute-force oracle") {
  sd::Rng r(77);
  sd::DetectorFilterConfig cfg;  // defaults: tau_s 0.2, tau_iou 0.3
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<sd::InstanceAnnotation> gt;
    int n_gt = r.uniform_range(1, 5);
    for (int i = 0; i < n_gt; ++i) {
      gt.push_back({i, 1, static_cast<int32_t>(r.uniform_range(1, 3)),
                    {double(r.uniform_range(0, 20)),
                     double(r.uniform_range(0, 20)),
                     double(r.uniform_range(2, 10)),
                     double(r.uniform_range(2, 10))}});
    }
    std::vector<sd::Detection> preds;
    int n_pred = r.uniform_range(0, 6);
    for (int i = 0; i < n_pred; ++i) {
      preds.push_back({1, static_cast<int32_t>(r.uniform_range(1, 3)),
                       {double(r.uniform_range(0, 20)),
                        double(r.uniform_range(0, 20)),
                        double(r.uniform_range(2, 10)),
                        double(r.uniform_range(2, 10))},
                       r.uniform01()});
    }
    auto decisions = sd::filter_instances(gt, preds, cfg);
    REQUIRE(decisions.size() == gt.size());
    for (size_t i = 0; i < gt.size(); ++i) {
      CHECK(decisions[i].annotation_id == gt[i].id);
      CHECK(decisions[i].kept == oracle_keep(gt[i], preds, cfg));
    }
  }
}

TEST_CASE("instance filter thresholds are strict") {
  sd::InstanceAnnotation ann{1, 1, 1, {0, 0, 10, 10}};
  sd::DetectorFilterConfig cfg{0.2, 0.3, false};

  // Exactly tau_s: not kept. Just above: kept.
  sd::Detection at_tau{1, 1, {0, 0, 10, 10}, 0.2};
  CHECK_FALSE(sd::filter_instances({ann}, {at_tau}, cfg)[0].kept);
  at_tau.score = std::nextafter(0.2, 1.0);
  CHECK(sd::filter_instances({ann}, {at_tau}, cfg)[0].kept);

  // IoU exactly tau_iou: not kept. A 10x3 gt inside a 10x10 pred gives
  // IoU = 30 / (30 + 100 - 30) = 0.3 exactly.
  sd::InstanceAnnotation g2{2, 1, 1, {0, 0, 10, 3}};
  sd::Detection p2{1, 1, {0, 0, 10, 10}, 0.9};
  CHECK(sd::iou(p2.bbox, g2.bbox) == 0.3);
  CHECK_FALSE(sd::filter_instances({g2}, {p2}, cfg)[0].kept);
  // Strictly above: grow the gt by one row.
  sd::InstanceAnnotation g3{3, 1, 1, {0, 0, 10, 4}};
  CHECK(sd::filter_instances({g3}, {p2}, cfg)[0].kept);

  // Class mismatch blocks support unless class-agnostic.
  sd::Detection wrong{1, 2, {0, 0, 10, 10}, 0.9};
  CHECK_FALSE(sd::filter_instances({ann}, {wrong}, cfg)[0].kept);
  sd::DetectorFilterConfig agn = cfg;
  agn.class_agnostic = true;
  CHECK(sd::filter_instances({ann}, {wrong}, agn)[0].kept);
}

TEST_CASE("instance filter is monotone in both thresholds") {
  sd::Rng r(5);
  std::vector<sd::InstanceAnnotation> gt;
  std::vector<sd::Detection> preds;
  for (int i = 0; i < 30; ++i) {
    gt.push_back({i, 1, 1,
                  {double(r.uniform_range(0, 30)), double(r.uniform_range(0, 30)),
                   double(r.uniform_range(3, 12)), double(r.uniform_range(3, 12))}});
    preds.push_back({1, 1,
                     {double(r.uniform_range(0, 30)), double(r.uniform_range(0, 30)),
                      double(r.uniform_range(3, 12)), double(r.uniform_range(3, 12))},
                     r.uniform01()});
  }
  auto kept_count = [&](double tau_s, double tau_iou) {
    int n = 0;
    for (const auto& d : sd::filter_instances(gt, preds, {tau_s, tau_iou, false})) {
      n += d.kept ? 1 : 0;
    }
    return n;
  };
  int prev = static_cast<int>(gt.size()) + 1;
  for (double t : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
    int k = kept_count(t, 0.1);
    CHECK(k <= prev);
    prev = k;
  }
  prev = static_cast<int>(gt.size()) + 1;
  for (double t : {0.0, 0.2, 0.4, 0.6, 0.8}) {
    int k = kept_count(0.1, t);
    CHECK(k <= prev);
    prev = k;
  }
}

TEST_CASE("run_filter_with_predictions flags without deleting") {
  sd::Dataset d = scored_fixture({5.0, 5.0});
  // Second annotation gets no support.
  std::vector<sd::Detection> preds = {
      {1, 1, {2, 2, 8, 8}, 0.9},
  };
  sd::DetectorFilterConfig cfg{0.2, 0.3, false};
  sd::InstanceFilterOutcome out = sd::run_filter_with_predictions(d, preds, cfg);

  CHECK(out.dataset.images == d.images);  // pixels and records untouched
  REQUIRE(out.dataset.annotations.size() == d.annotations.size());
  CHECK(out.dataset.annotations[0].filtered_out == false);
  CHECK(out.dataset.annotations[1].filtered_out == true);
  // Only the flag differs.
  auto unflagged = out.dataset.annotations[1];
  unflagged.filtered_out = false;
  CHECK(unflagged == d.annotations[1]);

  CHECK(out.report.removed_count() == 1);
  CHECK(out.report.tau_s == 0.2);

  // Filtering is idempotent: same predictions, same decisions.
  sd::InstanceFilterOutcome again =
      sd::run_filter_with_predictions(out.dataset, preds, cfg);
  CHECK(again.dataset.annotations == out.dataset.annotations);
}

TEST_CASE("instance report round-trips through jsonl") {
  sd::InstanceFilterReport rep;
  rep.tau_s = 0.2;
  rep.tau_iou = 0.3;
  rep.decisions = {{100, true, 0.85, 0.7}, {101, false, 0.1, 0.0}};
  auto dir = temp_dir("inst_report");
  sd::save_instance_report(rep, dir / "r.jsonl");
  sd::InstanceFilterReport back = sd::load_instance_report(dir / "r.jsonl");
  REQUIRE(back.decisions.size() == 2);
  CHECK(back.decisions[0].annotation_id == 100);
  CHECK(back.decisions[0].kept);
  CHECK(back.decisions[0].best_iou == 0.85);
  CHECK(back.decisions[1].kept == false);
  CHECK(back.removed_count() == 1);
  CHECK(back.tau_s == 0.2);
  CHECK(back.tau_iou == 0.3);
}
