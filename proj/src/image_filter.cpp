// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#include "synthdet/image_filter.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>
#include <unordered_set>

#include <httplib.h>
#include <json.hpp>

#include "synthdet/check.hpp"
#include "synthdet/image.hpp"
#include "synthdet/rng.hpp"

namespace synthdet {

using nlohmann::json;

MockAestheticScorer::MockAestheticScorer(const Dataset& d, uint64_t seed)
    : seed_(seed) {
  std::unordered_map<int64_t, int> total;
  std::unordered_map<int64_t, int> corrupted;
  for (const auto& ann : d.annotations) {
    ++total[ann.image_id];
    if (ann.mock_corruption_kind) ++corrupted[ann.image_id];
  }
  for (const auto& im : d.images) {
    int t = total.count(im.id) ? total[im.id] : 0;
    int c = corrupted.count(im.id) ? corrupted[im.id] : 0;
    corrupted_fraction_[im.id] = t == 0 ? 0.0 : static_cast<double>(c) / t;
  }
}

std::optional<double> MockAestheticScorer::score(const ImageRecord& image) {
  auto it = corrupted_fraction_.find(image.id);
  if (it == corrupted_fraction_.end()) return std::nullopt;
  Rng rng(mix_seed({seed_, static_cast<uint64_t>(image.id)}));
  return 6.0 - 3.0 * it->second + rng.uniform(-0.2, 0.2);
}

HttpAestheticScorer::HttpAestheticScorer(std::string host, int port,
                                         std::filesystem::path images_root,
                                         int max_retries, double timeout_s)
    : host_(std::move(host)),
      port_(port),
      images_root_(std::move(images_root)),
      max_retries_(max_retries),
      timeout_s_(timeout_s) {
  SD_CHECK(max_retries_ >= 1, "max_retries must be >= 1: " << max_retries_);
}

std::optional<double> HttpAestheticScorer::score(const ImageRecord& image) {
  Image pixels = load_ppm(images_root_ / image.file_name);
  json body{{"image_b64", base64_encode(encode_ppm_bytes(pixels))}};
  const std::string payload = body.dump();
  for (int attempt = 0; attempt < max_retries_; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50LL << (attempt - 1)));
    }
    httplib::Client cli(host_, port_);
    cli.set_connection_timeout(std::chrono::duration<double>(timeout_s_));
    cli.set_read_timeout(std::chrono::duration<double>(timeout_s_));
    auto res = cli.Post("/score", payload, "application/json");
    if (!res || res->status != 200) continue;
    json j = json::parse(res->body, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.contains("score") ||
        !j["score"].is_number()) {
      continue;
    }
    return j["score"].get<double>();
  }
  return std::nullopt;  // per-image failure; caller discards conservatively
}

ScoredImages score_images(const Dataset& d, AestheticScorer& scorer) {
  SD_CHECK(d.source == Source::kSynthetic,
           "image scoring applies to synthetic datasets only");
  ScoredImages out;
  out.dataset.source = d.source;
  out.dataset.categories = d.categories;
  std::unordered_set<int64_t> kept_ids;
  for (const auto& im : d.images) {
    std::optional<double> s = scorer.score(im);
    if (!s) {
      out.failed_image_ids.push_back(im.id);
      continue;
    }
    SD_CHECK(std::isfinite(*s),
             "scorer returned non-finite score for image " << im.id);
    ImageRecord rec = im;
    rec.aesthetic_score = *s;
    kept_ids.insert(rec.id);
    out.dataset.images.push_back(std::move(rec));
  }
  for (const auto& ann : d.annotations) {
    if (kept_ids.count(ann.image_id)) out.dataset.annotations.push_back(ann);
  }
  return out;
}

std::vector<int64_t> FilterReport::discarded_ids() const {
  std::vector<int64_t> ids;
  for (const auto& dec : decisions) {
    if (!dec.kept) ids.push_back(dec.image_id);
  }
  return ids;
}

ImageFilterOutcome filter_by_score(const Dataset& d,
                                   const ImageFilterConfig& cfg) {
  SD_CHECK(!std::isnan(cfg.tau_a), "tau_a is NaN");
  SD_CHECK(d.source == Source::kSynthetic,
           "image filtering applies to synthetic datasets only");
  ImageFilterOutcome out;
  out.kept.source = d.source;
  out.kept.categories = d.categories;
  std::unordered_set<int64_t> kept_ids;
  for (const auto& im : d.images) {
    SD_CHECK(im.aesthetic_score.has_value(),
             "unscored image encountered: " << im.id);
    // Strictly-below discards; a score equal to tau_a is kept.
    bool keep = *im.aesthetic_score >= cfg.tau_a;
    out.report.decisions.push_back(
        {im.id, *im.aesthetic_score, cfg.tau_a, keep});
    if (keep) {
      kept_ids.insert(im.id);
      out.kept.images.push_back(im);
    }
  }
  for (const auto& ann : d.annotations) {
    if (kept_ids.count(ann.image_id)) out.kept.annotations.push_back(ann);
  }
  return out;
}

void save_filter_report(const FilterReport& report,
                        const std::filesystem::path& path) {
  std::ofstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string() << " for writing");
  for (const auto& dec : report.decisions) {
    json j{{"image_id", dec.image_id},
           {"score", dec.score},
           {"tau_a", dec.tau_a},
           {"kept", dec.kept}};
    f << j.dump() << "\n";
  }
  SD_CHECK(f.good(), "failed writing " << path.string());
}

FilterReport load_filter_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string());
  FilterReport report;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    SD_CHECK(!j.is_discarded(),
             "malformed report line in " << path.string() << ": " << line);
    try {
      report.decisions.push_back({j.at("image_id").get<int64_t>(),
                                  j.at("score").get<double>(),
                                  j.at("tau_a").get<double>(),
                                  j.at("kept").get<bool>()});
    } catch (const json::exception& e) {
      SD_FAIL("report line missing field in " << path.string() << ": "
                                              << e.what());
    }
  }
  return report;
}

}  // namespace synthdet
