// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "synthdet/dataset.hpp"

namespace synthdet {

struct ImageFilterConfig {
  double tau_a = 4.5;  // discard images scoring strictly below this
};

// Seam for an image-quality model. Implementations must be deterministic
// per image; nullopt signals a scoring failure for that image.
class AestheticScorer {
 public:
  virtual ~AestheticScorer() = default;
  virtual std::optional<double> score(const ImageRecord& image) = 0;
};

// Scores a mock-generated image by its corruption density: a clean image
// rates 6.0, a fully corrupted one 3.0, plus a small per-image jitter so
// the threshold cuts through the score distribution rather than between
// two separated clusters.
class MockAestheticScorer : public AestheticScorer {
 public:
  MockAestheticScorer(const Dataset& d, uint64_t seed);
  std::optional<double> score(const ImageRecord& image) override;

 private:
  std::unordered_map<int64_t, double> corrupted_fraction_;
  uint64_t seed_;
};

// Wraps an arbitrary callable; test helper.
class FunctionScorer : public AestheticScorer {
 public:
  using Fn = std::function<std::optional<double>(const ImageRecord&)>;
  explicit FunctionScorer(Fn fn) : fn_(std::move(fn)) {}
  std::optional<double> score(const ImageRecord& image) override {
    return fn_(image);
  }

 private:
  Fn fn_;
};

// Adapter for an external scoring service: POST /score {image_b64} ->
// {score}. Pixels are loaded from images_root. Exhausted retries score the
// image as failed (nullopt) instead of aborting the run.
class HttpAestheticScorer : public AestheticScorer {
 public:
  HttpAestheticScorer(std::string host, int port,
                      std::filesystem::path images_root, int max_retries = 3,
                      double timeout_s = 30.0);
  std::optional<double> score(const ImageRecord& image) override;

 private:
  std::string host_;
  int port_;
  std::filesystem::path images_root_;
  int max_retries_;
  double timeout_s_;
};

struct ScoredImages {
  Dataset dataset;  // only successfully scored images, scores populated
  std::vector<int64_t> failed_image_ids;  // discarded: scorer returned nothing
};

// Scores every image of a synthetic dataset. Images the scorer fails on are
// conservatively discarded (removed with their annotations) and listed in
// failed_image_ids.
ScoredImages score_images(const Dataset& d, AestheticScorer& scorer);

struct FilterDecision {
  int64_t image_id = 0;
  double score = 0.0;
  double tau_a = 0.0;
  bool kept = false;
};

struct FilterReport {
  std::vector<FilterDecision> decisions;  // one per input image

  std::vector<int64_t> discarded_ids() const;
};

struct ImageFilterOutcome {
  Dataset kept;
  FilterReport report;
};

// Keeps images scoring >= tau_a; a score exactly at the threshold is kept.
// Discarded images lose all their annotations. Throws on an unscored image.
ImageFilterOutcome filter_by_score(const Dataset& d,
                                   const ImageFilterConfig& cfg);

// JSON lines, one decision per line: {image_id, score, tau_a, kept}.
void save_filter_report(const FilterReport& report,
                        const std::filesystem::path& path);
FilterReport load_filter_report(const std::filesystem::path& path);

}  // namespace synthdet
