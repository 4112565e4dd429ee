// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synthdet/dataset.hpp"
#include "synthdet/detection.hpp"

namespace synthdet {

// IoU thresholds 0.50:0.05:0.95 and 101-point interpolated AP, following
// the standard COCO protocol.
inline constexpr int kNumIouThresholds = 10;
inline constexpr int kNumRecallPoints = 101;
inline constexpr int kMaxDetectionsPerImageCategory = 100;

double eval_iou_threshold(int index);  // 0.5 + 0.05 * index

struct CategoryEval {
  int32_t category_id = 0;
  int num_gt = 0;
  std::vector<double> ap_by_iou;  // kNumIouThresholds entries; empty if no gt
  double ap = 0.0;                // mean over thresholds
  double ap50 = 0.0;
};

struct EvalResult {
  double ap = 0.0;    // mean over categories with gt, then over thresholds
  double ap50 = 0.0;
  // Means over the bucket's categories; a bucket with no gt categories is
  // undefined, not zero.
  std::optional<double> ap_rare, ap_common, ap_frequent;
  std::map<int32_t, CategoryEval> per_category;
};

// Greedy one-to-one matching: walking detections in the given order (must
// be score-descending), each matches the highest-IoU unmatched gt of its
// image and category with IoU >= threshold; otherwise it is a false
// positive. Returns one TP flag per detection, in input order.
std::vector<bool> match_for_eval(const std::vector<Detection>& dets,
                                 const std::vector<InstanceAnnotation>& gts,
                                 double iou_threshold);

// 101-point interpolated AP from ranked TP/FP flags.
double average_precision(const std::vector<bool>& flags, int num_gt);

// Box AP over the dataset's categories. Annotations flagged filtered_out do
// not count as ground truth. Categories with no ground truth are excluded
// from every mean. Detections are capped at the top
// kMaxDetectionsPerImageCategory per image and category.
EvalResult evaluate(const std::vector<Detection>& dets, const Dataset& gt);

std::string eval_result_to_json(const EvalResult& r);
EvalResult eval_result_from_json(const std::string& text);
void save_eval_result(const EvalResult& r, const std::filesystem::path& path);
EvalResult load_eval_result(const std::filesystem::path& path);

// Markdown table with the usual column layout (AP, AP50, AP_r, AP_c, AP_f),
// values scaled by 100.
std::string format_eval_table(const EvalResult& r);

}  // namespace synthdet
