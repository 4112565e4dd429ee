// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#include "synthdet/detection.hpp"

#include <fstream>

#include <json.hpp>

#include "synthdet/check.hpp"

namespace synthdet {

using nlohmann::json;

void save_detections(const std::vector<Detection>& dets,
                     const std::filesystem::path& path) {
  std::ofstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string() << " for writing");
  for (const auto& d : dets) {
    json j{{"image_id", d.image_id},
           {"category_id", d.category_id},
           {"bbox", {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}},
           {"score", d.score}};
    f << j.dump() << "\n";
  }
  SD_CHECK(f.good(), "failed writing " << path.string());
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
  std::ifstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string());
  std::vector<Detection> dets;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    SD_CHECK(!j.is_discarded(),
             "malformed detection line in " << path.string() << ": " << line);
    try {
      Detection d;
      d.image_id = j.at("image_id").get<int64_t>();
      d.category_id = j.at("category_id").get<int32_t>();
      const auto& b = j.at("bbox");
      SD_CHECK(b.is_array() && b.size() == 4,
               "detection bbox must be [x, y, w, h]");
      d.bbox = Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                   b[3].get<double>()};
      d.score = j.at("score").get<double>();
      SD_CHECK(d.score >= 0.0 && d.score <= 1.0,
               "detection score out of [0, 1]: " << d.score);
      dets.push_back(d);
    } catch (const json::exception& e) {
      SD_FAIL("detection line missing field in " << path.string() << ": "
                                                 << e.what());
    }
  }
  return dets;
}

}  // namespace synthdet
