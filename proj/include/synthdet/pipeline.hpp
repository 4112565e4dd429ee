// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "synthdet/detector.hpp"
#include "synthdet/detector_filter.hpp"
#include "synthdet/evaluator.hpp"
#include "synthdet/generation.hpp"
#include "synthdet/image_filter.hpp"

namespace synthdet {

// Which pipeline stages run. Disabling a stage is exactly its identity
// transform; the stage order itself is fixed (generate, image filter,
// instance filter, train, evaluate).
struct StageToggles {
  bool use_real_data = true;
  bool use_synthetic_data = true;
  bool use_sampling = true;        // off: real and synthetic in one pool
  bool use_image_filter = true;
  bool use_detector_filter = true;
  bool use_bg_ignore = true;

  bool operator==(const StageToggles& o) const = default;
};

struct PipelineConfig {
  std::string real_train_json;
  std::string real_val_json;
  std::string images_root;  // file_name entries resolve against this
  std::string output_dir;
  uint64_t seed = 0;
  int copies = 2;  // synthetic images generated per real image
  // Low-data path: keep only this fraction of real training images.
  std::optional<double> subsample_fraction;
  MockGenConfig generation;
  ImageFilterConfig image_filter;
  DetectorFilterConfig detector_filter;
  TrainingConfig training;  // training.sampler carries p and batch_size
  StageToggles toggles;
};

void validate_pipeline_config(const PipelineConfig& cfg);
std::string pipeline_config_to_json(const PipelineConfig& cfg);
// Missing keys keep their defaults, so partial configs are valid.
PipelineConfig pipeline_config_from_json(const std::string& text);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
void save_pipeline_config(const PipelineConfig& cfg,
                          const std::filesystem::path& path);
uint64_t pipeline_config_hash(const PipelineConfig& cfg);

struct RunReport {
  uint64_t config_hash = 0;
  std::string output_dir;
  std::string swept_axis;  // set by sweep()
  std::optional<double> swept_value;
  int synthetic_images_generated = 0;
  int images_discarded = 0;
  int instances_removed = 0;
  std::optional<FilterReport> image_filter;
  std::optional<InstanceFilterReport> instance_filter;
  EvalResult eval;
  double wall_time_s = 0.0;
};

// Deterministic serialization; wall time only when asked for, so the stable
// form can be compared across reruns.
std::string run_report_to_json(const RunReport& r, bool include_wall_time);
void save_run_report(const RunReport& r, const std::filesystem::path& path);
RunReport load_run_report(const std::filesystem::path& path);

// Executes the enabled stages in order, persisting every intermediate
// artifact under cfg.output_dir. A stage whose artifact already exists in
// the output directory is resumed from disk; the directory is bound to one
// config hash and refuses a different config. Failures carry the stage name.
RunReport run_pipeline(const PipelineConfig& cfg);

// One full run per value, everything else (including seeds) shared. Axes:
// p, tau_s, tau_iou, tau_i, copies, fraction. The fraction axis is the
// low-data path: it disables both filters and background-ignore.
std::vector<RunReport> sweep(const PipelineConfig& base,
                             const std::string& axis,
                             const std::vector<double>& values);

std::vector<double> default_sweep_values(const std::string& axis);

// report.md (one row per run) plus ap_vs_<axis>.svg when the reports came
// from a sweep.
void write_reports(const std::vector<RunReport>& reports,
                   const std::filesystem::path& out_dir);

}  // namespace synthdet
