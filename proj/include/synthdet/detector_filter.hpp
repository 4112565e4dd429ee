// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "synthdet/dataset.hpp"
#include "synthdet/detection.hpp"
#include "synthdet/detector.hpp"

namespace synthdet {

struct DetectorFilterConfig {
  double tau_s = 0.2;    // supporting prediction must score strictly above
  double tau_iou = 0.3;  // and overlap strictly above
  // When false (default), the supporting prediction must carry the
  // annotation's category.
  bool class_agnostic = false;

  bool operator==(const DetectorFilterConfig& o) const = default;
};

struct InstanceDecision {
  int64_t annotation_id = 0;
  bool kept = false;
  // Best support found: the highest IoU over eligible predictions, and the
  // highest score among those predictions that clear tau_iou.
  double best_iou = 0.0;
  double best_score = 0.0;
};

// Decides each annotation of one image: kept iff some prediction has
// score > tau_s and IoU > tau_iou (both strict), class-matched unless
// class_agnostic. All annotations and predictions must share one image.
std::vector<InstanceDecision> filter_instances(
    const std::vector<InstanceAnnotation>& gt,
    const std::vector<Detection>& preds, const DetectorFilterConfig& cfg);

// Trains the filtering detector on real data only: sampling and
// background-ignore disabled regardless of cfg.
TrainState train_filter_detector(const Dataset& real,
                                 const TrainingConfig& cfg,
                                 const ImageProvider& provider);

struct InstanceFilterReport {
  std::vector<InstanceDecision> decisions;
  double tau_s = 0.0;
  double tau_iou = 0.0;

  int removed_count() const;
};

struct InstanceFilterOutcome {
  Dataset dataset;  // same records; filtered_out reflects the decisions
  InstanceFilterReport report;
};

// Applies filter_instances image by image against the given predictions.
// Pixels are never touched: unsupported annotations are flagged, not
// deleted, and the image keeps whatever the generator rendered.
InstanceFilterOutcome run_filter_with_predictions(
    const Dataset& synth, const std::vector<Detection>& preds,
    const DetectorFilterConfig& cfg);

// Predicts with the trained filter detector, then delegates to
// run_filter_with_predictions. Also returns the raw predictions.
InstanceFilterOutcome run_filter(const Dataset& synth, const TrainState& det,
                                 const ImageProvider& provider,
                                 const DetectorFilterConfig& cfg,
                                 std::vector<Detection>* predictions_out =
                                     nullptr);

// JSON lines: {annotation_id, kept, best_score, best_iou, tau_s, tau_iou}.
void save_instance_report(const InstanceFilterReport& report,
                          const std::filesystem::path& path);
InstanceFilterReport load_instance_report(const std::filesystem::path& path);

}  // namespace synthdet
