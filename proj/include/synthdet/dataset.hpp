// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "synthdet/box.hpp"

namespace synthdet {

enum class Source { kReal, kSynthetic };

enum class FrequencyBucket { kRare, kCommon, kFrequent };

std::string to_string(Source s);
Source source_from_string(const std::string& s);
std::string to_string(FrequencyBucket b);
FrequencyBucket bucket_from_string(const std::string& s);

struct ImageRecord {
  int64_t id = 0;
  int width = 0;
  int height = 0;
  std::string file_name;  // relative to the dataset root directory
  Source source = Source::kReal;
  std::optional<double> aesthetic_score;   // populated by image scoring
  std::optional<uint64_t> generation_seed; // synthetic images only
  std::optional<int64_t> source_image_id;  // real image a synthetic copy reuses

  bool operator==(const ImageRecord& o) const = default;
};

struct InstanceAnnotation {
  int64_t id = 0;
  int64_t image_id = 0;
  int32_t category_id = 0;
  Box bbox;
  bool filtered_out = false;  // set by detector filtering; never deleted
  // Mock-generator ground truth: set iff the box was corrupted during mock
  // inpainting ("wrong_category", "blank" or "misplaced"). Absent on real
  // data and on clean mock boxes.
  std::optional<std::string> mock_corruption_kind;

  bool operator==(const InstanceAnnotation& o) const = default;
};

struct Category {
  int32_t id = 0;
  std::string name;
  std::optional<FrequencyBucket> frequency_bucket;
  std::optional<int> image_count;  // distinct images containing the category

  bool operator==(const Category& o) const = default;
};

// COCO-style detection dataset. Immutable by convention: every operation
// returns a new value, so datasets are safe to share across threads.
struct Dataset {
  Source source = Source::kReal;
  std::vector<ImageRecord> images;
  std::vector<InstanceAnnotation> annotations;
  std::vector<Category> categories;

  const ImageRecord* find_image(int64_t id) const;
  const Category* find_category(int32_t id) const;
  // Annotation indices grouped by image id, in annotation order.
  std::unordered_map<int64_t, std::vector<size_t>> annotations_by_image() const;

  bool operator==(const Dataset& o) const = default;
};

// Referential-integrity and field invariants; throws naming the offending
// record. Violations are raised, never silently repaired.
void validate_dataset(const Dataset& d);

Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& d, const std::filesystem::path& path);

// Uniform image subsampling without replacement; keeps exactly
// round-half-up(fraction * |images|) images and all (and only) their
// annotations. Deterministic in (fraction, seed).
Dataset subsample(const Dataset& d, double fraction, uint64_t seed);

inline constexpr int kRareMaxImages = 10;     // LVIS convention
inline constexpr int kCommonMaxImages = 100;  // LVIS convention

// Recomputes per-category image counts and assigns rare/common/frequent
// buckets: rare if count <= r_max, common if r_max < count <= c_max,
// frequent otherwise.
Dataset assign_frequency_buckets(const Dataset& d, int r_max = kRareMaxImages,
                                 int c_max = kCommonMaxImages);

}  // namespace synthdet
