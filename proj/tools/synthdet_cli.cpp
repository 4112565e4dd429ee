// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: each subcommand maps to one pipeline stage, plus
// `run`/`sweep`/`report` for full experiments. Flags override values from
// --config. Exits nonzero with the failing stage named on stderr.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "synthdet/corpus.hpp"
#include "synthdet/pipeline.hpp"

namespace sd = synthdet;

namespace {

// Shared --config/--override plumbing for subcommands that take a full
// pipeline config.
struct ConfigArgs {
  std::string config_path;
  sd::PipelineConfig cfg;

  // Optional overrides; applied over the file in finalize().
  std::optional<std::string> real_train, real_val, images_root, output_dir;
  std::optional<uint64_t> seed;
  std::optional<int> copies, iterations, batch_size;
  std::optional<double> p, tau_a, tau_s, tau_iou, tau_i, learning_rate,
      fraction, corruption_rate, hallucination_rate;
  std::optional<bool> sampling, image_filter, detector_filter, bg_ignore,
      synthetic_data, real_data;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "pipeline config JSON file");
    app->add_option("--real-train", real_train, "real training dataset JSON");
    app->add_option("--real-val", real_val, "real validation dataset JSON");
    app->add_option("--images-root", images_root, "root for image files");
    app->add_option("--output-dir", output_dir, "artifact directory");
    app->add_option("--seed", seed, "global seed");
    app->add_option("--copies", copies, "synthetic copies per real image");
    app->add_option("--iterations", iterations, "training steps");
    app->add_option("--batch-size", batch_size, "images per batch");
    app->add_option("--learning-rate", learning_rate, "SGD learning rate");
    app->add_option("--p", p, "synthetic batch probability");
    app->add_option("--tau-a", tau_a, "image filter score threshold");
    app->add_option("--tau-s", tau_s, "instance filter score threshold");
    app->add_option("--tau-iou", tau_iou, "instance filter IoU threshold");
    app->add_option("--tau-i", tau_i, "background-ignore threshold");
    app->add_option("--fraction", fraction, "real-data subsample fraction");
    app->add_option("--corruption-rate", corruption_rate,
                    "mock generator corruption rate");
    app->add_option("--hallucination-rate", hallucination_rate,
                    "mock generator hallucination rate");
    app->add_flag("--sampling,!--no-sampling", sampling,
                  "draw homogeneous batches by probability p");
    app->add_flag("--image-filter,!--no-image-filter", image_filter,
                  "enable image-level filtering");
    app->add_flag("--detector-filter,!--no-detector-filter", detector_filter,
                  "enable instance-level filtering");
    app->add_flag("--bg-ignore,!--no-bg-ignore", bg_ignore,
                  "enable background-ignore on synthetic batches");
    app->add_flag("--synthetic-data,!--no-synthetic-data", synthetic_data,
                  "train with generated images");
    app->add_flag("--real-data,!--no-real-data", real_data,
                  "train with real images");
  }

  void finalize() {
    if (!config_path.empty()) cfg = sd::load_pipeline_config(config_path);
    auto set = [](auto& dst, const auto& src) {
      if (src) dst = *src;
    };
    set(cfg.real_train_json, real_train);
    set(cfg.real_val_json, real_val);
    set(cfg.images_root, images_root);
    set(cfg.output_dir, output_dir);
    set(cfg.seed, seed);
    set(cfg.copies, copies);
    set(cfg.training.iterations, iterations);
    set(cfg.training.sampler.batch_size, batch_size);
    set(cfg.training.learning_rate, learning_rate);
    set(cfg.training.sampler.p, p);
    set(cfg.image_filter.tau_a, tau_a);
    set(cfg.detector_filter.tau_s, tau_s);
    set(cfg.detector_filter.tau_iou, tau_iou);
    set(cfg.training.tau_i, tau_i);
    if (fraction) cfg.subsample_fraction = *fraction;
    set(cfg.generation.corruption_rate, corruption_rate);
    set(cfg.generation.hallucination_rate, hallucination_rate);
    set(cfg.toggles.use_sampling, sampling);
    set(cfg.toggles.use_image_filter, image_filter);
    set(cfg.toggles.use_detector_filter, detector_filter);
    set(cfg.toggles.use_bg_ignore, bg_ignore);
    set(cfg.toggles.use_synthetic_data, synthetic_data);
    set(cfg.toggles.use_real_data, real_data);
  }
};

int cmd_make_corpus(const std::string& out, uint64_t seed) {
  sd::CorpusConfig cfg;
  sd::ToyCorpus corpus = sd::build_toy_corpus(cfg, seed);
  sd::write_corpus(corpus, out);
  std::printf("wrote %zu train and %zu val images to %s\n",
              corpus.train.images.size(), corpus.val.images.size(),
              out.c_str());
  return 0;
}

int cmd_generate(ConfigArgs& args, const std::string& host, int port) {
  args.finalize();
  const auto& cfg = args.cfg;
  sd::Dataset real = sd::load_dataset(cfg.real_train_json);
  std::filesystem::path out(cfg.output_dir);
  std::filesystem::create_directories(out);
  sd::Dataset synth;
  const uint64_t gen_seed = sd::mix_seed({cfg.seed, 101});
  if (host.empty()) {
    sd::MockBackend backend(cfg.generation);
    synth = sd::generate_synthetic_dataset(real, cfg.images_root, cfg.copies,
                                           gen_seed, backend,
                                           out / "synthetic_images");
  } else {
    sd::HttpGenerationBackend backend(host, port);
    synth = sd::generate_synthetic_dataset(real, cfg.images_root, cfg.copies,
                                           gen_seed, backend,
                                           out / "synthetic_images");
  }
  sd::save_dataset(synth, out / "synthetic_raw.json");
  std::printf("generated %zu synthetic images (%zu annotations)\n",
              synth.images.size(), synth.annotations.size());
  return 0;
}

int cmd_filter_images(ConfigArgs& args, const std::string& dataset_path) {
  args.finalize();
  const auto& cfg = args.cfg;
  sd::Dataset synth = sd::load_dataset(dataset_path);
  sd::MockAestheticScorer scorer(synth, sd::mix_seed({cfg.seed, 102}));
  sd::ScoredImages scored = sd::score_images(synth, scorer);
  sd::ImageFilterOutcome outcome =
      sd::filter_by_score(scored.dataset, cfg.image_filter);
  std::filesystem::path out(cfg.output_dir);
  std::filesystem::create_directories(out);
  sd::save_dataset(outcome.kept, out / "synthetic_after_image_filter.json");
  sd::save_filter_report(outcome.report, out / "image_filter_report.jsonl");
  std::printf("kept %zu of %zu images (tau_a = %g)\n",
              outcome.kept.images.size(), synth.images.size(),
              cfg.image_filter.tau_a);
  return 0;
}

int cmd_filter_instances(ConfigArgs& args, const std::string& dataset_path,
                         const std::string& detector_path) {
  args.finalize();
  const auto& cfg = args.cfg;
  sd::Dataset synth = sd::load_dataset(dataset_path);
  std::filesystem::path out(cfg.output_dir);
  std::filesystem::create_directories(out);
  sd::TrainState det;
  if (detector_path.empty()) {
    sd::Dataset real = sd::load_dataset(cfg.real_train_json);
    sd::TrainingConfig fc = cfg.training;
    fc.seed = sd::mix_seed({cfg.seed, 105});
    fc.sampler.seed = sd::mix_seed({cfg.seed, 106});
    det = sd::train_filter_detector(
        real, fc,
        sd::file_image_provider(cfg.images_root, cfg.images_root));
    sd::save_train_state(det, out / "filter_detector.json");
  } else {
    det = sd::load_train_state(detector_path);
  }
  std::vector<sd::Detection> preds;
  sd::InstanceFilterOutcome outcome = sd::run_filter(
      synth, det,
      sd::file_image_provider(cfg.images_root, out / "synthetic_images"),
      cfg.detector_filter, &preds);
  sd::save_dataset(outcome.dataset,
                   out / "synthetic_after_instance_filter.json");
  sd::save_instance_report(outcome.report, out / "instance_filter_report.jsonl");
  sd::save_detections(preds, out / "filter_predictions.jsonl");
  std::printf("flagged %d of %zu annotations (tau_s = %g, tau_iou = %g)\n",
              outcome.report.removed_count(), synth.annotations.size(),
              cfg.detector_filter.tau_s, cfg.detector_filter.tau_iou);
  return 0;
}

int cmd_train(ConfigArgs& args, const std::string& synth_path,
              const std::string& mode_name) {
  args.finalize();
  const auto& cfg = args.cfg;
  sd::Dataset real = sd::load_dataset(cfg.real_train_json);
  sd::Dataset synth{.source = sd::Source::kSynthetic};
  if (!synth_path.empty()) synth = sd::load_dataset(synth_path);
  sd::TrainingConfig tc = cfg.training;
  tc.seed = sd::mix_seed({cfg.seed, 103});
  tc.sampler.seed = sd::mix_seed({cfg.seed, 104});
  tc.use_bg_ignore = cfg.toggles.use_bg_ignore;
  if (synth_path.empty()) tc.sampler.p = 0.0;
  sd::BatchMode mode = mode_name == "merged" ? sd::BatchMode::kMerged
                                             : sd::BatchMode::kSampled;
  std::filesystem::path out(cfg.output_dir);
  std::filesystem::create_directories(out);
  std::vector<sd::StepTelemetry> telemetry;
  sd::TrainState st = sd::train(
      real, synth, tc,
      sd::file_image_provider(cfg.images_root, out / "synthetic_images"),
      mode,
      [&telemetry](const sd::StepTelemetry& t) { telemetry.push_back(t); });
  sd::save_telemetry(telemetry, out / "telemetry.jsonl");
  sd::save_train_state(st, out / "final_detector.json");
  std::printf("trained %d steps; checkpoint at %s\n", st.steps_completed,
              (out / "final_detector.json").string().c_str());
  return 0;
}

int cmd_evaluate(ConfigArgs& args, const std::string& detector_path) {
  args.finalize();
  const auto& cfg = args.cfg;
  sd::TrainState det = sd::load_train_state(detector_path);
  sd::Dataset val = sd::load_dataset(cfg.real_val_json);
  auto provider = sd::file_image_provider(cfg.images_root, cfg.images_root);
  std::vector<sd::Detection> dets;
  for (const auto& im : val.images) {
    sd::Image px = provider(im);
    auto image_dets = sd::predict(det, px, im.id);
    dets.insert(dets.end(), image_dets.begin(), image_dets.end());
  }
  sd::EvalResult result = sd::evaluate(dets, val);
  std::filesystem::path out(cfg.output_dir);
  std::filesystem::create_directories(out);
  sd::save_detections(dets, out / "val_predictions.jsonl");
  sd::save_eval_result(result, out / "eval.json");
  std::printf("%s", sd::format_eval_table(result).c_str());
  return 0;
}

int cmd_run(ConfigArgs& args) {
  args.finalize();
  sd::RunReport report = sd::run_pipeline(args.cfg);
  std::printf("%s", sd::format_eval_table(report.eval).c_str());
  std::printf("config %llu, %.1fs\n",
              static_cast<unsigned long long>(report.config_hash),
              report.wall_time_s);
  return 0;
}

int cmd_sweep(ConfigArgs& args, const std::string& axis,
              std::vector<double> values) {
  args.finalize();
  if (values.empty()) values = sd::default_sweep_values(axis);
  std::vector<sd::RunReport> reports = sd::sweep(args.cfg, axis, values);
  sd::write_reports(reports, args.cfg.output_dir);
  std::printf("swept %s over %zu values; report at %s/report.md\n",
              axis.c_str(), values.size(), args.cfg.output_dir.c_str());
  return 0;
}

int cmd_report(const std::vector<std::string>& report_paths,
               const std::string& out_dir) {
  std::vector<sd::RunReport> reports;
  for (const auto& p : report_paths) {
    reports.push_back(sd::load_run_report(p));
  }
  sd::write_reports(reports, out_dir);
  std::printf("wrote %s/report.md\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic-data detection pipeline"};
  app.require_subcommand(1);

  std::string corpus_out = "corpus";
  uint64_t corpus_seed = 7;
  auto* mk = app.add_subcommand("make-corpus", "build the toy glyph corpus");
  mk->add_option("--out", corpus_out, "corpus directory");
  mk->add_option("--seed", corpus_seed, "corpus seed");

  ConfigArgs gen_args;
  std::string gen_host;
  int gen_port = 0;
  auto* gen = app.add_subcommand("generate", "render synthetic images");
  gen_args.add_to(gen);
  gen->add_option("--host", gen_host, "generation service host (mock if unset)");
  gen->add_option("--port", gen_port, "generation service port");

  ConfigArgs fi_args;
  std::string fi_dataset;
  auto* fi = app.add_subcommand("filter-images", "image-level filtering");
  fi_args.add_to(fi);
  fi->add_option("--dataset", fi_dataset, "synthetic dataset JSON")
      ->required();

  ConfigArgs fin_args;
  std::string fin_dataset, fin_detector;
  auto* fin =
      app.add_subcommand("filter-instances", "instance-level filtering");
  fin_args.add_to(fin);
  fin->add_option("--dataset", fin_dataset, "synthetic dataset JSON")
      ->required();
  fin->add_option("--detector", fin_detector,
                  "filter detector checkpoint (trained if unset)");

  ConfigArgs tr_args;
  std::string tr_synth, tr_mode = "sampled";
  auto* tr = app.add_subcommand("train", "train the detector");
  tr_args.add_to(tr);
  tr->add_option("--synth", tr_synth, "synthetic dataset JSON (optional)");
  tr->add_option("--mode", tr_mode, "sampled or merged")
      ->check(CLI::IsMember({"sampled", "merged"}));

  ConfigArgs ev_args;
  std::string ev_detector;
  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint");
  ev_args.add_to(ev);
  ev->add_option("--detector", ev_detector, "detector checkpoint")->required();

  ConfigArgs run_args;
  auto* run = app.add_subcommand("run", "run the full pipeline");
  run_args.add_to(run);

  ConfigArgs sw_args;
  std::string sw_axis;
  std::vector<double> sw_values;
  auto* sw = app.add_subcommand("sweep", "run the pipeline per axis value");
  sw_args.add_to(sw);
  sw->add_option("--axis", sw_axis,
                 "one of p, tau_s, tau_iou, tau_i, copies, fraction")
      ->required();
  sw->add_option("--values", sw_values, "axis values (default grid if unset)");

  std::vector<std::string> rp_paths;
  std::string rp_out = "reports";
  auto* rp = app.add_subcommand("report", "summarize saved run reports");
  rp->add_option("--runs", rp_paths, "run_report.json files")->required();
  rp->add_option("--out", rp_out, "report directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (mk->parsed()) return cmd_make_corpus(corpus_out, corpus_seed);
    if (gen->parsed()) return cmd_generate(gen_args, gen_host, gen_port);
    if (fi->parsed()) return cmd_filter_images(fi_args, fi_dataset);
    if (fin->parsed())
      return cmd_filter_instances(fin_args, fin_dataset, fin_detector);
    if (tr->parsed()) return cmd_train(tr_args, tr_synth, tr_mode);
    if (ev->parsed()) return cmd_evaluate(ev_args, ev_detector);
    if (run->parsed()) return cmd_run(run_args);
    if (sw->parsed()) return cmd_sweep(sw_args, sw_axis, sw_values);
    if (rp->parsed()) return cmd_report(rp_paths, rp_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
