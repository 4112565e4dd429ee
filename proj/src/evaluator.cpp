// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#include "synthdet/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "synthdet/check.hpp"

namespace synthdet {

using nlohmann::json;

double eval_iou_threshold(int index) {
  SD_CHECK(index >= 0 && index < kNumIouThresholds,
           "IoU threshold index out of range: " << index);
  return 0.5 + 0.05 * index;
}

std::vector<bool> match_for_eval(const std::vector<Detection>& dets,
                                 const std::vector<InstanceAnnotation>& gts,
                                 double iou_threshold) {
  for (size_t i = 1; i < dets.size(); ++i) {
    SD_CHECK(dets[i - 1].score >= dets[i].score,
             "detections must be sorted by descending score");
  }
  std::unordered_map<int64_t, std::vector<size_t>> gt_by_image;
  for (size_t g = 0; g < gts.size(); ++g) {
    gt_by_image[gts[g].image_id].push_back(g);
  }
  std::vector<bool> matched(gts.size(), false);
  std::vector<bool> flags(dets.size(), false);
  for (size_t i = 0; i < dets.size(); ++i) {
    const Detection& d = dets[i];
    auto it = gt_by_image.find(d.image_id);
    if (it == gt_by_image.end()) continue;
    double best = 0.0;
    int best_g = -1;
    for (size_t g : it->second) {
      if (matched[g] || gts[g].category_id != d.category_id) continue;
      double v = iou(d.bbox, gts[g].bbox);
      if (v > best) {
        best = v;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0 && best >= iou_threshold) {
      matched[best_g] = true;
      flags[i] = true;
    }
  }
  return flags;
}

double average_precision(const std::vector<bool>& flags, int num_gt) {
  SD_CHECK(num_gt >= 0, "negative ground-truth count");
  if (num_gt == 0 || flags.empty()) return 0.0;
  const size_t n = flags.size();
  std::vector<double> precision(n), recall(n);
  int tp = 0;
  for (size_t i = 0; i < n; ++i) {
    tp += flags[i] ? 1 : 0;
    precision[i] = static_cast<double>(tp) / (i + 1);
    recall[i] = static_cast<double>(tp) / num_gt;
  }
  // Interpolation: precision at recall r is the max precision at any
  // recall >= r.
  for (size_t i = n - 1; i > 0; --i) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0.0;
  size_t idx = 0;
  for (int r = 0; r < kNumRecallPoints; ++r) {
    double target = r / 100.0;
    while (idx < n && recall[idx] < target - 1e-12) ++idx;
    if (idx < n) sum += precision[idx];
  }
  return sum / kNumRecallPoints;
}

namespace {

// Top kMaxDetectionsPerImageCategory per image for one category, then
// pooled and sorted by score (ties broken by original position, so
// evaluation does not depend on input order beyond scores).
std::vector<Detection> rank_category_detections(
    std::vector<std::pair<size_t, Detection>> dets) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second.score != b.second.score) {
                       return a.second.score > b.second.score;
                     }
                     return a.first < b.first;
                   });
  std::unordered_map<int64_t, int> per_image;
  std::vector<Detection> out;
  out.reserve(dets.size());
  for (const auto& [pos, d] : dets) {
    if (++per_image[d.image_id] > kMaxDetectionsPerImageCategory) continue;
    out.push_back(d);
  }
  return out;
}

std::optional<double> bucket_mean(const std::vector<double>& values) {
  if (values.empty()) return std::nullopt;
  double s = 0.0;
  for (double v : values) s += v;
  return s / values.size();
}

}  // namespace

EvalResult evaluate(const std::vector<Detection>& dets, const Dataset& gt) {
  for (const auto& d : dets) {
    SD_CHECK(gt.find_image(d.image_id) != nullptr,
             "detection references unknown image " << d.image_id);
    SD_CHECK(gt.find_category(d.category_id) != nullptr,
             "detection references unknown category " << d.category_id);
    SD_CHECK(d.score >= 0.0 && d.score <= 1.0,
             "detection score out of [0, 1]: " << d.score);
  }

  std::unordered_map<int32_t, std::vector<std::pair<size_t, Detection>>>
      dets_by_cat;
  for (size_t i = 0; i < dets.size(); ++i) {
    dets_by_cat[dets[i].category_id].push_back({i, dets[i]});
  }
  std::unordered_map<int32_t, std::vector<InstanceAnnotation>> gt_by_cat;
  for (const auto& ann : gt.annotations) {
    if (ann.filtered_out) continue;
    gt_by_cat[ann.category_id].push_back(ann);
  }

  EvalResult result;
  double ap_sum = 0.0, ap50_sum = 0.0;
  int evaluated = 0;
  std::vector<double> rare, common, frequent;
  for (const auto& cat : gt.categories) {
    CategoryEval ce;
    ce.category_id = cat.id;
    auto git = gt_by_cat.find(cat.id);
    ce.num_gt = git == gt_by_cat.end() ? 0 : static_cast<int>(git->second.size());
    if (ce.num_gt > 0) {
      std::vector<Detection> ranked;
      auto dit = dets_by_cat.find(cat.id);
      if (dit != dets_by_cat.end()) {
        ranked = rank_category_detections(dit->second);
      }
      ce.ap_by_iou.resize(kNumIouThresholds);
      for (int t = 0; t < kNumIouThresholds; ++t) {
        std::vector<bool> flags =
            match_for_eval(ranked, git->second, eval_iou_threshold(t));
        ce.ap_by_iou[t] = average_precision(flags, ce.num_gt);
      }
      double s = 0.0;
      for (double v : ce.ap_by_iou) s += v;
      ce.ap = s / kNumIouThresholds;
      ce.ap50 = ce.ap_by_iou[0];
      ap_sum += ce.ap;
      ap50_sum += ce.ap50;
      ++evaluated;
      if (cat.frequency_bucket) {
        switch (*cat.frequency_bucket) {
          case FrequencyBucket::kRare:
            rare.push_back(ce.ap);
            break;
          case FrequencyBucket::kCommon:
            common.push_back(ce.ap);
            break;
          case FrequencyBucket::kFrequent:
            frequent.push_back(ce.ap);
            break;
        }
      }
    }
    result.per_category.emplace(cat.id, std::move(ce));
  }
  if (evaluated > 0) {
    result.ap = ap_sum / evaluated;
    result.ap50 = ap50_sum / evaluated;
  }
  result.ap_rare = bucket_mean(rare);
  result.ap_common = bucket_mean(common);
  result.ap_frequent = bucket_mean(frequent);
  return result;
}

std::string eval_result_to_json(const EvalResult& r) {
  json per_cat = json::object();
  for (const auto& [id, ce] : r.per_category) {
    per_cat[std::to_string(id)] = json{{"num_gt", ce.num_gt},
                                       {"ap_by_iou", ce.ap_by_iou},
                                       {"ap", ce.ap},
                                       {"ap50", ce.ap50}};
  }
  json j{{"ap", r.ap},
         {"ap50", r.ap50},
         {"ap_rare", r.ap_rare ? json(*r.ap_rare) : json(nullptr)},
         {"ap_common", r.ap_common ? json(*r.ap_common) : json(nullptr)},
         {"ap_frequent", r.ap_frequent ? json(*r.ap_frequent) : json(nullptr)},
         {"per_category", std::move(per_cat)}};
  return j.dump(1);
}

EvalResult eval_result_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  SD_CHECK(!j.is_discarded(), "malformed evaluation JSON");
  EvalResult r;
  try {
    r.ap = j.at("ap").get<double>();
    r.ap50 = j.at("ap50").get<double>();
    auto opt = [&](const char* key) -> std::optional<double> {
      if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
      return j.at(key).get<double>();
    };
    r.ap_rare = opt("ap_rare");
    r.ap_common = opt("ap_common");
    r.ap_frequent = opt("ap_frequent");
    for (const auto& [key, val] : j.at("per_category").items()) {
      CategoryEval ce;
      ce.category_id = static_cast<int32_t>(std::stol(key));
      ce.num_gt = val.at("num_gt").get<int>();
      ce.ap_by_iou = val.at("ap_by_iou").get<std::vector<double>>();
      ce.ap = val.at("ap").get<double>();
      ce.ap50 = val.at("ap50").get<double>();
      r.per_category.emplace(ce.category_id, std::move(ce));
    }
  } catch (const json::exception& e) {
    SD_FAIL("evaluation JSON: " << e.what());
  }
  return r;
}

void save_eval_result(const EvalResult& r, const std::filesystem::path& path) {
  std::ofstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string() << " for writing");
  f << eval_result_to_json(r) << "\n";
  SD_CHECK(f.good(), "failed writing " << path.string());
}

EvalResult load_eval_result(const std::filesystem::path& path) {
  std::ifstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return eval_result_from_json(ss.str());
}

std::string format_eval_table(const EvalResult& r) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "| AP | AP50 | AP_r | AP_c | AP_f |\n";
  out << "|----|------|------|------|------|\n";
  out << "| " << cell(r.ap) << " | " << cell(r.ap50) << " | "
      << cell(r.ap_rare) << " | " << cell(r.ap_common) << " | "
      << cell(r.ap_frequent) << " |\n";
  return out.str();
}

}  // namespace synthdet
