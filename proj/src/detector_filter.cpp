// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#include "synthdet/detector_filter.hpp"

#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "synthdet/check.hpp"

namespace synthdet {

using nlohmann::json;

std::vector<InstanceDecision> filter_instances(
    const std::vector<InstanceAnnotation>& gt,
    const std::vector<Detection>& preds, const DetectorFilterConfig& cfg) {
  SD_CHECK(cfg.tau_s >= 0.0 && cfg.tau_s <= 1.0,
           "tau_s out of [0, 1]: " << cfg.tau_s);
  SD_CHECK(cfg.tau_iou >= 0.0 && cfg.tau_iou <= 1.0,
           "tau_iou out of [0, 1]: " << cfg.tau_iou);
  if (!gt.empty()) {
    for (const auto& p : preds) {
      SD_CHECK(p.image_id == gt.front().image_id,
               "prediction for image " << p.image_id
                                       << " mixed into annotations of image "
                                       << gt.front().image_id);
    }
  }
  std::vector<InstanceDecision> out;
  out.reserve(gt.size());
  for (const auto& ann : gt) {
    InstanceDecision dec;
    dec.annotation_id = ann.id;
    for (const auto& p : preds) {
      if (!cfg.class_agnostic && p.category_id != ann.category_id) continue;
      double v = iou(p.bbox, ann.bbox);
      dec.best_iou = std::max(dec.best_iou, v);
      if (v > cfg.tau_iou) dec.best_score = std::max(dec.best_score, p.score);
    }
    dec.kept = dec.best_score > cfg.tau_s;
    out.push_back(dec);
  }
  return out;
}

TrainState train_filter_detector(const Dataset& real,
                                 const TrainingConfig& cfg,
                                 const ImageProvider& provider) {
  SD_CHECK(real.source == Source::kReal,
           "filter detector must be trained on real data");
  SD_CHECK(!real.images.empty(), "filter detector: empty dataset");
  TrainingConfig fc = cfg;
  fc.sampler.p = 0.0;
  fc.use_bg_ignore = false;
  return train(real, Dataset{.source = Source::kSynthetic}, fc, provider,
               BatchMode::kSampled);
}

int InstanceFilterReport::removed_count() const {
  int n = 0;
  for (const auto& d : decisions) n += d.kept ? 0 : 1;
  return n;
}

InstanceFilterOutcome run_filter_with_predictions(
    const Dataset& synth, const std::vector<Detection>& preds,
    const DetectorFilterConfig& cfg) {
  SD_CHECK(synth.source == Source::kSynthetic,
           "instance filtering applies to synthetic datasets only");
  std::unordered_map<int64_t, std::vector<Detection>> preds_by_image;
  for (const auto& p : preds) {
    SD_CHECK(synth.find_image(p.image_id) != nullptr,
             "prediction references unknown image " << p.image_id);
    preds_by_image[p.image_id].push_back(p);
  }

  InstanceFilterOutcome out;
  out.dataset = synth;
  out.report.tau_s = cfg.tau_s;
  out.report.tau_iou = cfg.tau_iou;
  static const std::vector<Detection> kNone;
  auto anns_by_image = synth.annotations_by_image();
  for (const auto& im : synth.images) {
    auto ait = anns_by_image.find(im.id);
    if (ait == anns_by_image.end()) continue;
    std::vector<InstanceAnnotation> gt;
    gt.reserve(ait->second.size());
    for (size_t idx : ait->second) gt.push_back(synth.annotations[idx]);
    auto pit = preds_by_image.find(im.id);
    const std::vector<Detection>& image_preds =
        pit == preds_by_image.end() ? kNone : pit->second;
    std::vector<InstanceDecision> decisions =
        filter_instances(gt, image_preds, cfg);
    for (size_t k = 0; k < decisions.size(); ++k) {
      out.dataset.annotations[ait->second[k]].filtered_out = !decisions[k].kept;
      out.report.decisions.push_back(decisions[k]);
    }
  }
  return out;
}

InstanceFilterOutcome run_filter(const Dataset& synth, const TrainState& det,
                                 const ImageProvider& provider,
                                 const DetectorFilterConfig& cfg,
                                 std::vector<Detection>* predictions_out) {
  std::vector<Detection> preds;
  for (const auto& im : synth.images) {
    Image px = provider(im);
    std::vector<Detection> image_preds = predict(det, px, im.id);
    preds.insert(preds.end(), image_preds.begin(), image_preds.end());
  }
  if (predictions_out) *predictions_out = preds;
  return run_filter_with_predictions(synth, preds, cfg);
}

void save_instance_report(const InstanceFilterReport& report,
                          const std::filesystem::path& path) {
  std::ofstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string() << " for writing");
  for (const auto& d : report.decisions) {
    json j{{"annotation_id", d.annotation_id}, {"kept", d.kept},
           {"best_score", d.best_score},       {"best_iou", d.best_iou},
           {"tau_s", report.tau_s},            {"tau_iou", report.tau_iou}};
    f << j.dump() << "\n";
  }
  SD_CHECK(f.good(), "failed writing " << path.string());
}

InstanceFilterReport load_instance_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string());
  InstanceFilterReport report;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    SD_CHECK(!j.is_discarded(),
             "malformed report line in " << path.string() << ": " << line);
    try {
      InstanceDecision d;
      d.annotation_id = j.at("annotation_id").get<int64_t>();
      d.kept = j.at("kept").get<bool>();
      d.best_score = j.at("best_score").get<double>();
      d.best_iou = j.at("best_iou").get<double>();
      if (first) {
        report.tau_s = j.at("tau_s").get<double>();
        report.tau_iou = j.at("tau_iou").get<double>();
        first = false;
      }
      report.decisions.push_back(d);
    } catch (const json::exception& e) {
      SD_FAIL("report line missing field in " << path.string() << ": "
                                              << e.what());
    }
  }
  return report;
}

}  // namespace synthdet
