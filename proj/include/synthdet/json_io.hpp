// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
//
// nlohmann-json bindings for the config structs. Kept out of the config
// headers so they stay light; include this where configs cross a JSON
// boundary. All binders accept partial objects, leaving missing keys at
// their defaults, which is what lets CLI flags override a config file.
#pragma once

#include <json.hpp>

#include "synthdet/check.hpp"
#include "synthdet/detector.hpp"
#include "synthdet/detector_filter.hpp"
#include "synthdet/generation.hpp"
#include "synthdet/image_filter.hpp"
#include "synthdet/sampler.hpp"

namespace synthdet {

template <typename T>
void assign_if_present(const nlohmann::json& j, const char* key, T* out) {
  if (j.contains(key)) *out = j.at(key).get<T>();
}

inline void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = nlohmann::json{{"p", c.p}, {"batch_size", c.batch_size},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SamplerConfig& c) {
  assign_if_present(j, "p", &c.p);
  assign_if_present(j, "batch_size", &c.batch_size);
  assign_if_present(j, "seed", &c.seed);
}

inline void to_json(nlohmann::json& j, const AnchorConfig& c) {
  j = nlohmann::json{{"stride", c.stride}, {"scales", c.scales}};
}

inline void from_json(const nlohmann::json& j, AnchorConfig& c) {
  assign_if_present(j, "stride", &c.stride);
  assign_if_present(j, "scales", &c.scales);
}

inline void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = nlohmann::json{
      {"tau_i", c.tau_i},
      {"learning_rate", c.learning_rate},
      {"iterations", c.iterations},
      {"seed", c.seed},
      {"sampler", c.sampler},
      {"use_bg_ignore", c.use_bg_ignore},
      {"apply_mask_loss_on_synthetic", c.apply_mask_loss_on_synthetic},
      {"anchors", c.anchors}};
}

inline void from_json(const nlohmann::json& j, TrainingConfig& c) {
  assign_if_present(j, "tau_i", &c.tau_i);
  assign_if_present(j, "learning_rate", &c.learning_rate);
  assign_if_present(j, "iterations", &c.iterations);
  assign_if_present(j, "seed", &c.seed);
  assign_if_present(j, "sampler", &c.sampler);
  assign_if_present(j, "use_bg_ignore", &c.use_bg_ignore);
  assign_if_present(j, "apply_mask_loss_on_synthetic",
                    &c.apply_mask_loss_on_synthetic);
  assign_if_present(j, "anchors", &c.anchors);
}

inline void to_json(nlohmann::json& j, const MockGenConfig& c) {
  j = nlohmann::json{{"corruption_rate", c.corruption_rate},
                     {"hallucination_rate", c.hallucination_rate}};
  if (c.forced_kind) j["forced_kind"] = to_string(*c.forced_kind);
}

inline void from_json(const nlohmann::json& j, MockGenConfig& c) {
  assign_if_present(j, "corruption_rate", &c.corruption_rate);
  assign_if_present(j, "hallucination_rate", &c.hallucination_rate);
  if (j.contains("forced_kind") && !j.at("forced_kind").is_null()) {
    const std::string k = j.at("forced_kind").get<std::string>();
    if (k == "wrong_category") {
      c.forced_kind = CorruptionKind::kWrongCategory;
    } else if (k == "blank") {
      c.forced_kind = CorruptionKind::kBlank;
    } else if (k == "misplaced") {
      c.forced_kind = CorruptionKind::kMisplaced;
    } else {
      SD_FAIL("unknown corruption kind: " << k);
    }
  }
}

inline void to_json(nlohmann::json& j, const ImageFilterConfig& c) {
  j = nlohmann::json{{"tau_a", c.tau_a}};
}

inline void from_json(const nlohmann::json& j, ImageFilterConfig& c) {
  assign_if_present(j, "tau_a", &c.tau_a);
}

inline void to_json(nlohmann::json& j, const DetectorFilterConfig& c) {
  j = nlohmann::json{{"tau_s", c.tau_s},
                     {"tau_iou", c.tau_iou},
                     {"class_agnostic", c.class_agnostic}};
}

inline void from_json(const nlohmann::json& j, DetectorFilterConfig& c) {
  assign_if_present(j, "tau_s", &c.tau_s);
  assign_if_present(j, "tau_iou", &c.tau_iou);
  assign_if_present(j, "class_agnostic", &c.class_agnostic);
}

}  // namespace synthdet
