// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "synthdet/dataset.hpp"

namespace synthdet {

// Text prompts conditioning the inpainting generator for one image.
struct PromptSet {
  std::string image_prompt;
  // (annotation id, prompt), in annotation order.
  std::vector<std::pair<int64_t, std::string>> box_prompts;
};

// The category name itself, lowercased, with underscores replaced by spaces.
std::string box_prompt(const std::string& category_name);

// "a c1" for one name; "a c1, a c2, ... and a cn" for several. The article
// is always "a" and duplicates are kept, one entry per instance.
std::string image_prompt(const std::vector<std::string>& category_names);

// Prompts for every annotation on one image, in annotation order.
PromptSet build_prompts(const Dataset& d, int64_t image_id);

}  // namespace synthdet
