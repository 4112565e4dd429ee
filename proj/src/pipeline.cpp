// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#include "synthdet/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "synthdet/check.hpp"
#include "synthdet/json_io.hpp"

namespace synthdet {

using nlohmann::json;

namespace {

void to_json_toggles(json& j, const StageToggles& t) {
  j = json{{"use_real_data", t.use_real_data},
           {"use_synthetic_data", t.use_synthetic_data},
           {"use_sampling", t.use_sampling},
           {"use_image_filter", t.use_image_filter},
           {"use_detector_filter", t.use_detector_filter},
           {"use_bg_ignore", t.use_bg_ignore}};
}

void from_json_toggles(const json& j, StageToggles& t) {
  assign_if_present(j, "use_real_data", &t.use_real_data);
  assign_if_present(j, "use_synthetic_data", &t.use_synthetic_data);
  assign_if_present(j, "use_sampling", &t.use_sampling);
  assign_if_present(j, "use_image_filter", &t.use_image_filter);
  assign_if_present(j, "use_detector_filter", &t.use_detector_filter);
  assign_if_present(j, "use_bg_ignore", &t.use_bg_ignore);
}

json config_to_json_obj(const PipelineConfig& cfg) {
  json toggles;
  to_json_toggles(toggles, cfg.toggles);
  json j{{"real_train_json", cfg.real_train_json},
         {"real_val_json", cfg.real_val_json},
         {"images_root", cfg.images_root},
         {"output_dir", cfg.output_dir},
         {"seed", cfg.seed},
         {"copies", cfg.copies},
         {"generation", cfg.generation},
         {"image_filter", cfg.image_filter},
         {"detector_filter", cfg.detector_filter},
         {"training", cfg.training},
         {"toggles", std::move(toggles)}};
  if (cfg.subsample_fraction) j["subsample_fraction"] = *cfg.subsample_fraction;
  return j;
}

// Seed substream tags for the pipeline's derived seeds.
constexpr uint64_t kGenSeedTag = 101;
constexpr uint64_t kScorerSeedTag = 102;
constexpr uint64_t kTrainSeedTag = 103;
constexpr uint64_t kTrainSamplerSeedTag = 104;
constexpr uint64_t kFilterTrainSeedTag = 105;
constexpr uint64_t kFilterSamplerSeedTag = 106;
constexpr uint64_t kSubsampleSeedTag = 110;

[[noreturn]] void stage_fail(const char* stage, const std::exception& e) {
  SD_FAIL("stage " << stage << ": " << e.what());
}

}  // namespace

void validate_pipeline_config(const PipelineConfig& cfg) {
  SD_CHECK(!cfg.real_train_json.empty() && !cfg.real_val_json.empty(),
           "real_train_json and real_val_json are required");
  SD_CHECK(!cfg.output_dir.empty(), "output_dir is required");
  SD_CHECK(cfg.copies >= 1, "copies must be >= 1: " << cfg.copies);
  if (cfg.subsample_fraction) {
    SD_CHECK(*cfg.subsample_fraction > 0.0 && *cfg.subsample_fraction <= 1.0,
             "subsample_fraction out of (0, 1]: " << *cfg.subsample_fraction);
  }
  const auto& s = cfg.training.sampler;
  SD_CHECK(s.p >= 0.0 && s.p <= 1.0, "p out of [0, 1]: " << s.p);
  SD_CHECK(s.batch_size >= 1, "batch_size must be >= 1");
  SD_CHECK(cfg.training.tau_i >= 0.0 && cfg.training.tau_i <= 1.0,
           "tau_i out of [0, 1]: " << cfg.training.tau_i);
  SD_CHECK(cfg.detector_filter.tau_s >= 0.0 && cfg.detector_filter.tau_s <= 1.0,
           "tau_s out of [0, 1]");
  SD_CHECK(cfg.detector_filter.tau_iou >= 0.0 &&
               cfg.detector_filter.tau_iou <= 1.0,
           "tau_iou out of [0, 1]");
  SD_CHECK(!std::isnan(cfg.image_filter.tau_a), "tau_a is NaN");
  SD_CHECK(cfg.toggles.use_real_data || cfg.toggles.use_synthetic_data,
           "at least one data source must be enabled");
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  return config_to_json_obj(cfg).dump(1);
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  SD_CHECK(!j.is_discarded(), "malformed pipeline config JSON");
  PipelineConfig cfg;
  try {
    assign_if_present(j, "real_train_json", &cfg.real_train_json);
    assign_if_present(j, "real_val_json", &cfg.real_val_json);
    assign_if_present(j, "images_root", &cfg.images_root);
    assign_if_present(j, "output_dir", &cfg.output_dir);
    assign_if_present(j, "seed", &cfg.seed);
    assign_if_present(j, "copies", &cfg.copies);
    if (j.contains("subsample_fraction") &&
        !j.at("subsample_fraction").is_null()) {
      cfg.subsample_fraction = j.at("subsample_fraction").get<double>();
    }
    assign_if_present(j, "generation", &cfg.generation);
    assign_if_present(j, "image_filter", &cfg.image_filter);
    assign_if_present(j, "detector_filter", &cfg.detector_filter);
    assign_if_present(j, "training", &cfg.training);
    if (j.contains("toggles")) from_json_toggles(j.at("toggles"), cfg.toggles);
  } catch (const json::exception& e) {
    SD_FAIL("pipeline config: " << e.what());
  }
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return pipeline_config_from_json(ss.str());
}

void save_pipeline_config(const PipelineConfig& cfg,
                          const std::filesystem::path& path) {
  std::ofstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string() << " for writing");
  f << pipeline_config_to_json(cfg) << "\n";
  SD_CHECK(f.good(), "failed writing " << path.string());
}

uint64_t pipeline_config_hash(const PipelineConfig& cfg) {
  // The output directory is where a run lands, not what it computes;
  // sweeps share one logical config across per-value directories.
  json j = config_to_json_obj(cfg);
  j.erase("output_dir");
  return fnv1a64(j.dump());
}

std::string run_report_to_json(const RunReport& r, bool include_wall_time) {
  json j{{"config_hash", r.config_hash},
         {"output_dir", r.output_dir},
         {"synthetic_images_generated", r.synthetic_images_generated},
         {"images_discarded", r.images_discarded},
         {"instances_removed", r.instances_removed},
         {"eval", json::parse(eval_result_to_json(r.eval))}};
  if (!r.swept_axis.empty()) {
    j["swept_axis"] = r.swept_axis;
    j["swept_value"] = r.swept_value ? json(*r.swept_value) : json(nullptr);
  }
  if (include_wall_time) j["wall_time_s"] = r.wall_time_s;
  return j.dump(1);
}

void save_run_report(const RunReport& r, const std::filesystem::path& path) {
  std::ofstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string() << " for writing");
  f << run_report_to_json(r, /*include_wall_time=*/true) << "\n";
  SD_CHECK(f.good(), "failed writing " << path.string());
}

RunReport load_run_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string());
  json j = json::parse(f, nullptr, /*allow_exceptions=*/false);
  SD_CHECK(!j.is_discarded(), "malformed run report: " << path.string());
  RunReport r;
  try {
    r.config_hash = j.at("config_hash").get<uint64_t>();
    r.output_dir = j.at("output_dir").get<std::string>();
    r.synthetic_images_generated =
        j.at("synthetic_images_generated").get<int>();
    r.images_discarded = j.at("images_discarded").get<int>();
    r.instances_removed = j.at("instances_removed").get<int>();
    r.eval = eval_result_from_json(j.at("eval").dump());
    if (j.contains("swept_axis")) {
      r.swept_axis = j.at("swept_axis").get<std::string>();
      if (!j.at("swept_value").is_null()) {
        r.swept_value = j.at("swept_value").get<double>();
      }
    }
    if (j.contains("wall_time_s")) {
      r.wall_time_s = j.at("wall_time_s").get<double>();
    }
  } catch (const json::exception& e) {
    SD_FAIL("run report " << path.string() << ": " << e.what());
  }
  return r;
}

RunReport run_pipeline(const PipelineConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  validate_pipeline_config(cfg);
  const std::filesystem::path out(cfg.output_dir);
  std::filesystem::create_directories(out);

  RunReport report;
  report.config_hash = pipeline_config_hash(cfg);
  report.output_dir = cfg.output_dir;

  // An output directory belongs to exactly one config; resuming with a
  // different one would silently mix artifacts.
  const auto hash_file = out / "config_hash.txt";
  const std::string hash_str = std::to_string(report.config_hash);
  if (std::filesystem::exists(hash_file)) {
    std::ifstream f(hash_file);
    std::string existing;
    f >> existing;
    SD_CHECK(existing == hash_str,
             "output directory " << cfg.output_dir
                                 << " holds artifacts of config " << existing
                                 << ", refusing config " << hash_str);
  } else {
    std::ofstream f(hash_file);
    f << hash_str << "\n";
  }
  save_pipeline_config(cfg, out / "config.json");

  // --- load real data ------------------------------------------------
  Dataset real_train, real_val;
  try {
    real_train = load_dataset(cfg.real_train_json);
    real_val = load_dataset(cfg.real_val_json);
    if (cfg.subsample_fraction) {
      const auto sub_path = out / "real_subsampled.json";
      if (std::filesystem::exists(sub_path)) {
        real_train = load_dataset(sub_path);
      } else {
        real_train = subsample(real_train, *cfg.subsample_fraction,
                               mix_seed({cfg.seed, kSubsampleSeedTag}));
        save_dataset(real_train, sub_path);
      }
    }
  } catch (const std::exception& e) {
    stage_fail("load", e);
  }

  const ImageProvider real_provider =
      file_image_provider(cfg.images_root, cfg.images_root);
  const std::filesystem::path synth_dir = out / "synthetic_images";
  const ImageProvider synth_provider =
      file_image_provider(cfg.images_root, synth_dir);

  // --- generate --------------------------------------------------------
  Dataset synth;
  if (cfg.toggles.use_synthetic_data) {
    try {
      const auto raw_path = out / "synthetic_raw.json";
      if (std::filesystem::exists(raw_path)) {
        synth = load_dataset(raw_path);
      } else {
        MockBackend backend(cfg.generation);
        synth = generate_synthetic_dataset(
            real_train, cfg.images_root, cfg.copies,
            mix_seed({cfg.seed, kGenSeedTag}), backend, synth_dir);
        save_dataset(synth, raw_path);
      }
      report.synthetic_images_generated = static_cast<int>(synth.images.size());
    } catch (const std::exception& e) {
      stage_fail("generate", e);
    }
  }

  // --- image filter ----------------------------------------------------
  if (cfg.toggles.use_synthetic_data && cfg.toggles.use_image_filter) {
    try {
      const auto kept_path = out / "synthetic_after_image_filter.json";
      const auto report_path = out / "image_filter_report.jsonl";
      if (std::filesystem::exists(kept_path)) {
        synth = load_dataset(kept_path);
        report.image_filter = load_filter_report(report_path);
      } else {
        MockAestheticScorer scorer(synth,
                                   mix_seed({cfg.seed, kScorerSeedTag}));
        ScoredImages scored = score_images(synth, scorer);
        SD_CHECK(scored.failed_image_ids.empty(),
                 scored.failed_image_ids.size()
                     << " synthetic images could not be scored");
        ImageFilterOutcome outcome =
            filter_by_score(scored.dataset, cfg.image_filter);
        synth = std::move(outcome.kept);
        save_dataset(synth, kept_path);
        save_filter_report(outcome.report, report_path);
        report.image_filter = std::move(outcome.report);
      }
      report.images_discarded =
          static_cast<int>(report.image_filter->discarded_ids().size());
    } catch (const std::exception& e) {
      stage_fail("image-filter", e);
    }
  }

  // --- instance filter ---------------------------------------------------
  if (cfg.toggles.use_synthetic_data && cfg.toggles.use_detector_filter) {
    try {
      const auto det_path = out / "filter_detector.json";
      TrainState filter_det;
      if (std::filesystem::exists(det_path)) {
        filter_det = load_train_state(det_path);
      } else {
        TrainingConfig fc = cfg.training;
        fc.seed = mix_seed({cfg.seed, kFilterTrainSeedTag});
        fc.sampler.seed = mix_seed({cfg.seed, kFilterSamplerSeedTag});
        filter_det = train_filter_detector(real_train, fc, real_provider);
        save_train_state(filter_det, det_path);
      }
      const auto flagged_path = out / "synthetic_after_instance_filter.json";
      const auto report_path = out / "instance_filter_report.jsonl";
      if (std::filesystem::exists(flagged_path)) {
        synth = load_dataset(flagged_path);
        report.instance_filter = load_instance_report(report_path);
      } else {
        std::vector<Detection> preds;
        InstanceFilterOutcome outcome = run_filter(
            synth, filter_det, synth_provider, cfg.detector_filter, &preds);
        synth = std::move(outcome.dataset);
        save_dataset(synth, flagged_path);
        save_instance_report(outcome.report, report_path);
        save_detections(preds, out / "filter_predictions.jsonl");
        report.instance_filter = std::move(outcome.report);
      }
      report.instances_removed = report.instance_filter->removed_count();
    } catch (const std::exception& e) {
      stage_fail("instance-filter", e);
    }
  }

  // --- train -------------------------------------------------------------
  TrainState final_det;
  try {
    const auto det_path = out / "final_detector.json";
    if (std::filesystem::exists(det_path)) {
      final_det = load_train_state(det_path);
    } else {
      TrainingConfig tc = cfg.training;
      tc.seed = mix_seed({cfg.seed, kTrainSeedTag});
      tc.sampler.seed = mix_seed({cfg.seed, kTrainSamplerSeedTag});
      tc.use_bg_ignore = cfg.toggles.use_bg_ignore;
      BatchMode mode = BatchMode::kSampled;
      Dataset empty_real{.source = Source::kReal};
      Dataset empty_synth{.source = Source::kSynthetic};
      const Dataset* train_real = &real_train;
      const Dataset* train_synth = &synth;
      if (!cfg.toggles.use_synthetic_data) {
        train_synth = &empty_synth;
        tc.sampler.p = 0.0;
      } else if (!cfg.toggles.use_real_data) {
        train_real = &empty_real;
        tc.sampler.p = 1.0;
      } else if (!cfg.toggles.use_sampling) {
        mode = BatchMode::kMerged;  // naive single-pool mix
      }
      std::vector<StepTelemetry> telemetry;
      final_det = train(*train_real, *train_synth, tc, synth_provider, mode,
                        [&telemetry](const StepTelemetry& t) {
                          telemetry.push_back(t);
                        });
      save_telemetry(telemetry, out / "telemetry.jsonl");
      save_train_state(final_det, det_path);
    }
  } catch (const std::exception& e) {
    stage_fail("train", e);
  }

  // --- evaluate ------------------------------------------------------------
  try {
    const auto eval_path = out / "eval.json";
    if (std::filesystem::exists(eval_path)) {
      report.eval = load_eval_result(eval_path);
    } else {
      std::vector<Detection> dets;
      for (const auto& im : real_val.images) {
        Image px = real_provider(im);
        std::vector<Detection> image_dets = predict(final_det, px, im.id);
        dets.insert(dets.end(), image_dets.begin(), image_dets.end());
      }
      save_detections(dets, out / "val_predictions.jsonl");
      report.eval = evaluate(dets, real_val);
      save_eval_result(report.eval, eval_path);
    }
  } catch (const std::exception& e) {
    stage_fail("evaluate", e);
  }

  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  save_run_report(report, out / "run_report.json");
  return report;
}

namespace {

std::string format_value(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

}  // namespace

std::vector<double> default_sweep_values(const std::string& axis) {
  if (axis == "p" || axis == "tau_s" || axis == "tau_iou" || axis == "tau_i") {
    return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  }
  if (axis == "copies") return {1, 2, 3};
  if (axis == "fraction") return {0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  SD_FAIL("unknown sweep axis: " << axis
                                 << " (expected p, tau_s, tau_iou, tau_i, "
                                    "copies or fraction)");
}

std::vector<RunReport> sweep(const PipelineConfig& base,
                             const std::string& axis,
                             const std::vector<double>& values) {
  SD_CHECK(!values.empty(), "sweep values are empty");
  default_sweep_values(axis);  // validates the axis name
  std::vector<RunReport> reports;
  reports.reserve(values.size());
  for (double v : values) {
    PipelineConfig cfg = base;
    if (axis == "p") {
      cfg.training.sampler.p = v;
    } else if (axis == "tau_s") {
      cfg.detector_filter.tau_s = v;
    } else if (axis == "tau_iou") {
      cfg.detector_filter.tau_iou = v;
    } else if (axis == "tau_i") {
      cfg.training.tau_i = v;
    } else if (axis == "copies") {
      SD_CHECK(v == std::floor(v) && v >= 1.0,
               "copies must be a positive integer: " << v);
      cfg.copies = static_cast<int>(v);
    } else if (axis == "fraction") {
      cfg.subsample_fraction = v;
      // The low-data path trains on raw synthetic data: no filtering, no
      // background-ignore.
      cfg.toggles.use_image_filter = false;
      cfg.toggles.use_detector_filter = false;
      cfg.toggles.use_bg_ignore = false;
    }
    cfg.output_dir = (std::filesystem::path(base.output_dir) /
                      (axis + "_" + format_value(v)))
                         .string();
    RunReport r = run_pipeline(cfg);
    r.swept_axis = axis;
    r.swept_value = v;
    save_run_report(r, std::filesystem::path(cfg.output_dir) /
                           "run_report.json");
    reports.push_back(std::move(r));
  }
  return reports;
}

namespace {

std::string svg_plot(const std::vector<RunReport>& reports,
                     const std::string& axis) {
  const int width = 480, height = 320;
  const int ml = 56, mr = 16, mt = 16, mb = 44;
  double xmin = 1e300, xmax = -1e300, ymax = 0.0;
  for (const auto& r : reports) {
    double x = r.swept_value.value_or(0.0);
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymax = std::max(ymax, r.eval.ap * 100.0);
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  ymax = std::max(ymax * 1.1, 1.0);
  auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr);
  };
  auto py = [&](double y) { return height - mb - y / ymax * (height - mt - mb); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
    << "\" height=\"" << height << "\">\n";
  s << "<rect width=\"" << width << "\" height=\"" << height
    << "\" fill=\"white\"/>\n";
  s << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\""
    << width - mr << "\" y2=\"" << height - mb
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
    << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" "
       "points=\"";
  for (const auto& r : reports) {
    s << px(r.swept_value.value_or(0.0)) << "," << py(r.eval.ap * 100.0)
      << " ";
  }
  s << "\"/>\n";
  for (const auto& r : reports) {
    s << "<circle cx=\"" << px(r.swept_value.value_or(0.0)) << "\" cy=\""
      << py(r.eval.ap * 100.0) << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
    s << "<text x=\"" << px(r.swept_value.value_or(0.0)) << "\" y=\""
      << height - mb + 16 << "\" font-size=\"10\" text-anchor=\"middle\">"
      << format_value(r.swept_value.value_or(0.0)) << "</text>\n";
  }
  s << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 8
    << "\" font-size=\"12\" text-anchor=\"middle\">" << axis << "</text>\n";
  s << "<text x=\"14\" y=\"" << (mt + height - mb) / 2
    << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << (mt + height - mb) / 2 << ")\">AP</text>\n";
  s << "<text x=\"" << ml - 6 << "\" y=\"" << py(0.0) + 4
    << "\" font-size=\"10\" text-anchor=\"end\">0</text>\n";
  s << "<text x=\"" << ml - 6 << "\" y=\"" << py(ymax) + 4
    << "\" font-size=\"10\" text-anchor=\"end\">" << format_value(ymax)
    << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace

void write_reports(const std::vector<RunReport>& reports,
                   const std::filesystem::path& out_dir) {
  SD_CHECK(!reports.empty(), "no reports to write");
  std::filesystem::create_directories(out_dir);
  const std::string axis = reports.front().swept_axis;

  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
    return std::string(buf);
  };
  std::ostringstream md;
  md << "# Run summary\n\n";
  if (!axis.empty()) {
    md << "| " << axis
       << " | AP | AP50 | AP_r | AP_c | AP_f | gen | discarded | removed | "
          "config |\n";
    md << "|---|----|------|------|------|------|-----|-----------|---------|"
          "--------|\n";
  } else {
    md << "| AP | AP50 | AP_r | AP_c | AP_f | gen | discarded | removed | "
          "config |\n";
    md << "|----|------|------|------|------|-----|-----------|---------|"
          "--------|\n";
  }
  for (const auto& r : reports) {
    md << "| ";
    if (!axis.empty()) md << format_value(r.swept_value.value_or(0.0)) << " | ";
    md << pct(r.eval.ap) << " | " << pct(r.eval.ap50) << " | "
       << pct(r.eval.ap_rare) << " | " << pct(r.eval.ap_common) << " | "
       << pct(r.eval.ap_frequent) << " | " << r.synthetic_images_generated
       << " | " << r.images_discarded << " | " << r.instances_removed << " | "
       << r.config_hash << " |\n";
  }
  {
    std::ofstream f(out_dir / "report.md");
    SD_CHECK(f.good(), "cannot open report.md for writing");
    f << md.str();
  }
  if (!axis.empty() && reports.size() >= 1) {
    std::ofstream f(out_dir / ("ap_vs_" + axis + ".svg"));
    SD_CHECK(f.good(), "cannot open the sweep plot for writing");
    f << svg_plot(reports, axis);
  }
}

}  // namespace synthdet
