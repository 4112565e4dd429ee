// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "synthdet/box.hpp"
#include "synthdet/dataset.hpp"
#include "synthdet/detection.hpp"
#include "synthdet/image.hpp"
#include "synthdet/sampler.hpp"

namespace synthdet {

// ---------------------------------------------------------------------------
// Anchors and matching

struct AnchorConfig {
  int stride = 4;
  std::vector<double> scales = {12.0, 18.0, 27.0};  // square anchor sides

  bool operator==(const AnchorConfig& o) const = default;
};

struct AnchorGrid {
  int image_width = 0;
  int image_height = 0;
  int cells_x = 0;
  int cells_y = 0;
  std::vector<Box> anchors;  // cells_x * cells_y * scales, clipped to image
};

// Grid cells at `stride`; any remainder strip of the image gets no cell.
AnchorGrid build_anchors(int image_width, int image_height,
                         const AnchorConfig& cfg);

enum class MatchKind { kPositive, kBackground, kIouIgnore };

struct MatchLabel {
  MatchKind kind = MatchKind::kBackground;
  int gt_index = -1;  // valid iff kind == kPositive
};

struct GtBox {
  Box box;
  int class_index = 0;  // 0-based category slot; background is not a slot
};

inline constexpr double kPositiveIou = 0.5;
inline constexpr double kBackgroundIou = 0.4;

// Two-threshold assignment: positive at max-IoU >= 0.5 (argmax gt),
// background below 0.4, iou_ignore between. Any anchor overlapping a
// filtered-out annotation's box at >= 0.5 is forced to iou_ignore, even if
// it would have been positive for a live gt.
std::vector<MatchLabel> match_anchors(const AnchorGrid& grid,
                                      const std::vector<GtBox>& gt,
                                      const std::vector<Box>& filtered_boxes);

// ---------------------------------------------------------------------------
// Fixed closed-form featurizer

// Per window: mean R/G/B and edge density for the full window and for each
// of its 2x2 quadrants, plus a bias term.
inline constexpr int kFeatureDim = 21;

// Integral images over the RGB channels and an edge-magnitude map; built
// once per image, windows then cost O(1).
struct ImageFeatures {
  int width = 0;
  int height = 0;
  std::vector<double> sat_r, sat_g, sat_b, sat_e;  // (w+1) * (h+1) each
};

ImageFeatures compute_image_features(const Image& img);
void window_features(const ImageFeatures& f, const Box& window,
                     double out[kFeatureDim]);
// Features for every anchor, flattened row-major (anchor-major).
std::vector<double> anchor_features(const ImageFeatures& f,
                                    const AnchorGrid& grid);

// ---------------------------------------------------------------------------
// Linear heads

struct DetectorParams {
  int num_classes = 0;              // foreground categories, background excluded
  std::vector<double> w_obj;        // kFeatureDim
  std::vector<double> w_cls;        // (num_classes + 1) * kFeatureDim; bg row 0
  std::vector<double> w_box;        // 4 * kFeatureDim
  std::vector<double> w_mask;       // kFeatureDim

  static DetectorParams zeros(int num_classes);
  bool operator==(const DetectorParams& o) const = default;
};

struct HeadOutputs {
  double obj_logit = 0.0;
  std::vector<double> cls_logits;       // num_classes + 1, bg at index 0
  std::array<double, 4> box_deltas{};   // (dx, dy, dw, dh)
  double mask_logit = 0.0;
};

HeadOutputs forward_anchor(const DetectorParams& p, const double* feat);
std::vector<HeadOutputs> forward_all(const DetectorParams& p,
                                     const std::vector<double>& feats);

// Box regression parametrization relative to an anchor.
std::array<double, 4> encode_box_delta(const Box& anchor, const Box& gt);
Box decode_box_delta(const Box& anchor, const std::array<double, 4>& d);

// ---------------------------------------------------------------------------
// Loss assembly

struct TrainingConfig {
  double tau_i = 0.0;  // background-ignore threshold, strict >
  double learning_rate = 0.05;
  int iterations = 300;
  uint64_t seed = 0;
  SamplerConfig sampler;
  bool use_bg_ignore = true;
  bool apply_mask_loss_on_synthetic = false;  // ablation only; keep false
  AnchorConfig anchors;

  bool operator==(const TrainingConfig& o) const = default;
};

struct LossBreakdown {
  double objectness_loss = 0.0;
  double classification_loss = 0.0;
  double box_regression_loss = 0.0;
  double mask_loss = 0.0;
  // Background anchors dropped by the ignore rule, per loss term. The
  // objectness term tests sigmoid(obj_logit) > tau_i, the category-head
  // term tests (1 - softmax background probability) > tau_i.
  std::vector<uint8_t> excluded_objectness;
  std::vector<uint8_t> excluded_head;
  std::vector<uint8_t> per_anchor_excluded;  // union of the two
  int num_positives = 0;
  int num_background = 0;
  int num_iou_ignore = 0;
  int num_excluded_objectness = 0;
  int num_excluded_head = 0;

  double total() const {
    return objectness_loss + classification_loss + box_regression_loss +
           mask_loss;
  }
};

// d(total loss)/d(anchor outputs); exactly zero for every output an anchor
// does not contribute through.
struct OutputGrads {
  double d_obj = 0.0;
  std::vector<double> d_cls;
  std::array<double, 4> d_box{};
  double d_mask = 0.0;
};

// Loss over one image. Objectness: BCE over positives and non-excluded
// backgrounds, averaged over those anchors. Classification: cross-entropy
// over positives (true class) and non-excluded backgrounds (background
// class). Box regression: L2 on deltas over positives. Classification,
// regression and mask are averaged over the positive count; with zero
// positives those terms are 0. The ignore rule applies only to background
// anchors of synthetic images when use_bg_ignore is set; mask loss is
// identically 0 on synthetic images unless apply_mask_loss_on_synthetic.
LossBreakdown assemble_loss(const AnchorGrid& grid,
                            const std::vector<HeadOutputs>& outputs,
                            const std::vector<MatchLabel>& matches,
                            const std::vector<GtBox>& gt, Source source,
                            const TrainingConfig& cfg,
                            std::vector<OutputGrads>* output_grads = nullptr);

struct ParamGrads {
  std::vector<double> w_obj, w_cls, w_box, w_mask;

  static ParamGrads zeros(int num_classes);
  void scale(double s);
};

// Chain rule through the linear heads: accumulates (output grads) x features
// into param space.
void accumulate_param_grads(const std::vector<double>& feats,
                            const std::vector<OutputGrads>& output_grads,
                            ParamGrads* grads);
void apply_sgd(DetectorParams* params, const ParamGrads& grads, double lr);

// ---------------------------------------------------------------------------
// Training

// Everything the loss needs about one image, precomputed once.
struct PreparedImage {
  const AnchorGrid* grid = nullptr;
  std::vector<double> feats;  // anchors * kFeatureDim
  std::vector<MatchLabel> matches;
  std::vector<GtBox> gt;
  Source source = Source::kReal;
};

struct ImageTargets {
  std::vector<GtBox> gt;           // live annotations, class-indexed
  std::vector<Box> filtered;       // boxes of filtered_out annotations
};

// Maps a dataset image's annotations to class slots; filtered_out
// annotations go to `filtered` instead of `gt`.
ImageTargets collect_targets(const Dataset& d, int64_t image_id,
                             const std::unordered_map<int32_t, int>& cat_index);

PreparedImage prepare_image(const Image& pixels, const ImageTargets& targets,
                            Source source, const AnchorGrid& grid);

// Loss + gradients for one prepared image under current params.
LossBreakdown image_loss(const DetectorParams& params,
                         const PreparedImage& img, const TrainingConfig& cfg,
                         ParamGrads* param_grads = nullptr,
                         std::vector<OutputGrads>* output_grads = nullptr);

// Pixel source for dataset images; lets callers serve pixels from disk or
// from memory.
using ImageProvider = std::function<Image(const ImageRecord&)>;

// Loads `<root of record's source>/file_name` as PPM.
ImageProvider file_image_provider(std::filesystem::path real_root,
                                  std::filesystem::path synth_root);

enum class BatchMode {
  kSampled,  // homogeneous batches via BatchSampler
  kMerged,   // one shuffled pool of real + synthetic together (naive mix)
};

struct StepTelemetry {
  int step = 0;
  std::string source;  // "real", "synthetic" or "mixed"
  double objectness_loss = 0.0;
  double classification_loss = 0.0;
  double box_regression_loss = 0.0;
  double mask_loss = 0.0;
  double total_loss = 0.0;
  int ignored_anchor_count = 0;  // iou_ignore + excluded, over the batch
};

using TelemetrySink = std::function<void(const StepTelemetry&)>;

void save_telemetry(const std::vector<StepTelemetry>& steps,
                    const std::filesystem::path& path);

struct TrainState {
  DetectorParams params;
  TrainingConfig config;
  std::vector<int32_t> category_ids;  // class slot -> category id
  uint64_t config_hash = 0;
  std::string sampler_state;  // snapshot at the last completed step
  int steps_completed = 0;
};

uint64_t training_config_hash(const TrainingConfig& cfg);

// SGD over the batch stream for cfg.iterations steps. Deterministic in
// (datasets, config, provider output). Throws with the step index if the
// loss goes non-finite. `synth` may be empty only when the sampler never
// draws synthetic batches (p = 0) in kSampled mode.
TrainState train(const Dataset& real, const Dataset& synth,
                 const TrainingConfig& cfg, const ImageProvider& provider,
                 BatchMode mode = BatchMode::kSampled,
                 const TelemetrySink& sink = nullptr);

// Per-category greedy NMS over decoded anchor predictions; detections come
// back sorted by score descending, all scores >= score_floor.
std::vector<Detection> predict(const TrainState& state, const Image& pixels,
                               int64_t image_id, double nms_iou = 0.5,
                               double score_floor = 0.05);

void save_train_state(const TrainState& state,
                      const std::filesystem::path& path);
TrainState load_train_state(const std::filesystem::path& path);

}  // namespace synthdet
