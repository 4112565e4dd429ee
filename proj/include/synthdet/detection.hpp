// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "synthdet/box.hpp"

namespace synthdet {

struct Detection {
  int64_t image_id = 0;
  int32_t category_id = 0;
  Box bbox;
  double score = 0.0;  // in [0, 1]

  bool operator==(const Detection& o) const = default;
};

// JSON lines interchange, one detection per line.
void save_detections(const std::vector<Detection>& dets,
                     const std::filesystem::path& path);
std::vector<Detection> load_detections(const std::filesystem::path& path);

}  // namespace synthdet
