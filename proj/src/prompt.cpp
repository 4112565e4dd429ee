// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#include "synthdet/prompt.hpp"

#include <algorithm>
#include <cctype>

#include "synthdet/check.hpp"

namespace synthdet {

std::string box_prompt(const std::string& category_name) {
  SD_CHECK(!category_name.empty(), "category name must be non-empty");
  std::string out = category_name;
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return c == '_' ? ' ' : static_cast<char>(std::tolower(c));
  });
  return out;
}

std::string image_prompt(const std::vector<std::string>& category_names) {
  SD_CHECK(!category_names.empty(), "image prompt needs at least one name");
  std::string out;
  const size_t n = category_names.size();
  for (size_t i = 0; i < n; ++i) {
    if (i > 0) out += (i + 1 == n) ? " and " : ", ";
    out += "a " + box_prompt(category_names[i]);
  }
  return out;
}

PromptSet build_prompts(const Dataset& d, int64_t image_id) {
  PromptSet ps;
  std::vector<std::string> names;
  for (const auto& a : d.annotations) {
    if (a.image_id != image_id) continue;
    const Category* cat = d.find_category(a.category_id);
    SD_CHECK(cat != nullptr, "annotation " << a.id
                                           << " references missing category "
                                           << a.category_id);
    ps.box_prompts.emplace_back(a.id, box_prompt(cat->name));
    names.push_back(cat->name);
  }
  if (!names.empty()) ps.image_prompt = image_prompt(names);
  return ps;
}

}  // namespace synthdet
