// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "synthdet/check.hpp"
#include "synthdet/corpus.hpp"
#include "synthdet/pipeline.hpp"

namespace sd = synthdet;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("synthdet_pl_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// One small corpus on disk, shared by every pipeline test.
const std::filesystem::path& corpus_root() {
  static std::filesystem::path root = [] {
    sd::CorpusConfig cc;
    cc.canvas_size = 48;
    cc.train_counts = {4, 6, 16};
    cc.val_counts = {3, 3, 3};
    cc.num_train_images = 24;
    cc.num_val_images = 9;
    cc.min_side = 12.0;
    cc.max_side = 22.0;
    sd::ToyCorpus corpus = sd::build_toy_corpus(cc, 77);
    auto dir = temp_dir("corpus");
    sd::write_corpus(corpus, dir);
    return dir;
  }();
  return root;
}

sd::PipelineConfig base_config(const std::string& run_name) {
  const auto& root = corpus_root();
  sd::PipelineConfig cfg;
  cfg.real_train_json = (root / "train.json").string();
  cfg.real_val_json = (root / "val.json").string();
  cfg.images_root = root.string();  // file_name entries carry the images/ dir
  cfg.output_dir = temp_dir("run_" + run_name).string();
  cfg.seed = 11;
  cfg.copies = 1;
  cfg.generation.corruption_rate = 0.3;
  cfg.training.iterations = 30;
  cfg.training.learning_rate = 0.05;
  cfg.training.sampler.batch_size = 4;
  cfg.training.sampler.p = 0.2;
  cfg.training.tau_i = 0.0;
  cfg.image_filter.tau_a = 4.5;
  return cfg;
}

}  // namespace

TEST_CASE("toy corpus has the designed long tail") {
  sd::Dataset train = sd::load_dataset(corpus_root() / "train.json");
  sd::Dataset val = sd::load_dataset(corpus_root() / "val.json");
  sd::validate_dataset(train);
  sd::validate_dataset(val);
  CHECK(train.images.size() == 24);
  CHECK(val.images.size() == 9);
  REQUIRE(train.categories.size() == 3);

  auto count_images = [](const sd::Dataset& d, int32_t cat) {
    std::set<int64_t> ids;
    for (const auto& a : d.annotations) {
      if (a.category_id == cat) ids.insert(a.image_id);
    }
    return static_cast<int>(ids.size());
  };
  CHECK(count_images(train, train.categories[0].id) == 4);
  CHECK(count_images(train, train.categories[1].id) == 6);
  CHECK(count_images(train, train.categories[2].id) == 16);

  CHECK(*train.categories[0].frequency_bucket == sd::FrequencyBucket::kRare);
  CHECK(*train.categories[1].frequency_bucket == sd::FrequencyBucket::kRare);
  CHECK(*train.categories[2].frequency_bucket == sd::FrequencyBucket::kCommon);
  // Validation inherits training buckets rather than recomputing them.
  CHECK(val.categories == train.categories);

  for (const auto& im : train.images) {
    CHECK(std::filesystem::exists(corpus_root() / im.file_name));
  }
}

TEST_CASE("pipeline config round-trips and accepts partial json") {
  sd::PipelineConfig cfg = base_config("cfgjson");
  cfg.training.tau_i = 0.3;
  cfg.toggles.use_image_filter = false;
  cfg.subsample_fraction = 0.5;
  auto dir = temp_dir("cfgio");
  sd::save_pipeline_config(cfg, dir / "c.json");
  sd::PipelineConfig back = sd::load_pipeline_config(dir / "c.json");
  CHECK(back.real_train_json == cfg.real_train_json);
  CHECK(back.seed == cfg.seed);
  CHECK(back.copies == cfg.copies);
  CHECK(back.subsample_fraction == cfg.subsample_fraction);
  CHECK(back.training == cfg.training);
  CHECK(back.toggles == cfg.toggles);
  CHECK(back.image_filter.tau_a == cfg.image_filter.tau_a);
  CHECK(back.detector_filter == cfg.detector_filter);

  sd::PipelineConfig partial = sd::pipeline_config_from_json("{\"seed\": 9}");
  CHECK(partial.seed == 9);
  CHECK(partial.copies == 2);
  CHECK(partial.training.tau_i == 0.0);
  CHECK(partial.toggles.use_sampling);

  sd::PipelineConfig bad = cfg;
  bad.training.sampler.p = 1.5;
  CHECK_THROWS_AS(sd::validate_pipeline_config(bad), sd::Error);
  bad = cfg;
  bad.toggles.use_real_data = false;
  bad.toggles.use_synthetic_data = false;
  CHECK_THROWS_AS(sd::validate_pipeline_config(bad), sd::Error);
}

TEST_CASE("config hash ignores the output directory only") {
  sd::PipelineConfig a = base_config("hash_a");
  sd::PipelineConfig b = a;
  b.output_dir = "/somewhere/else";
  CHECK(sd::pipeline_config_hash(a) == sd::pipeline_config_hash(b));
  b.training.sampler.p = 0.4;
  CHECK(sd::pipeline_config_hash(a) != sd::pipeline_config_hash(b));
  b = a;
  b.seed = 12;
  CHECK(sd::pipeline_config_hash(a) != sd::pipeline_config_hash(b));
}

TEST_CASE("full pipeline run persists every stage artifact") {
  sd::PipelineConfig cfg = base_config("full");
  sd::RunReport r = sd::run_pipeline(cfg);
  const std::filesystem::path out(cfg.output_dir);

  for (const char* name :
       {"config_hash.txt", "config.json", "synthetic_raw.json",
        "synthetic_after_image_filter.json", "image_filter_report.jsonl",
        "filter_detector.json", "synthetic_after_instance_filter.json",
        "instance_filter_report.jsonl", "filter_predictions.jsonl",
        "final_detector.json", "telemetry.jsonl", "val_predictions.jsonl",
        "eval.json", "run_report.json"}) {
    CHECK_MESSAGE(std::filesystem::exists(out / name), name);
  }

  CHECK(r.config_hash == sd::pipeline_config_hash(cfg));
  CHECK(r.synthetic_images_generated == 24);  // 24 real x 1 copy
  REQUIRE(r.image_filter.has_value());
  CHECK(r.image_filter->decisions.size() == 24);
  CHECK(r.images_discarded ==
        static_cast<int>(r.image_filter->discarded_ids().size()));
  REQUIRE(r.instance_filter.has_value());
  CHECK(r.instances_removed == r.instance_filter->removed_count());
  CHECK(r.wall_time_s > 0.0);

  // The flagged dataset still holds every annotation that survived the
  // image filter: instance filtering flags, never deletes.
  sd::Dataset after_img =
      sd::load_dataset(out / "synthetic_after_image_filter.json");
  sd::Dataset after_inst =
      sd::load_dataset(out / "synthetic_after_instance_filter.json");
  CHECK(after_inst.annotations.size() == after_img.annotations.size());
  int flagged = 0;
  for (const auto& a : after_inst.annotations) flagged += a.filtered_out;
  CHECK(flagged == r.instances_removed);
}

TEST_CASE("identical configs reproduce identical reports") {
  sd::PipelineConfig a = base_config("det_a");
  sd::PipelineConfig b = base_config("det_b");
  sd::RunReport ra = sd::run_pipeline(a);
  sd::RunReport rb = sd::run_pipeline(b);
  rb.output_dir = ra.output_dir;  // the only legitimately different field
  CHECK(sd::run_report_to_json(ra, false) == sd::run_report_to_json(rb, false));
}

TEST_CASE("an existing artifact resumes instead of recomputing") {
  sd::PipelineConfig cfg = base_config("resume");
  sd::RunReport first = sd::run_pipeline(cfg);
  const std::filesystem::path out(cfg.output_dir);

  // Wipe only the tail stages; the rerun must reuse the kept artifacts and
  // land on the same result.
  std::filesystem::remove(out / "eval.json");
  std::filesystem::remove(out / "run_report.json");
  sd::RunReport second = sd::run_pipeline(cfg);
  CHECK(sd::run_report_to_json(first, false) ==
        sd::run_report_to_json(second, false));

  // A full rerun with everything present is a pure replay.
  sd::RunReport third = sd::run_pipeline(cfg);
  CHECK(sd::run_report_to_json(first, false) ==
        sd::run_report_to_json(third, false));
}

TEST_CASE("an output directory refuses a different config") {
  sd::PipelineConfig cfg = base_config("guard");
  (void)sd::run_pipeline(cfg);
  sd::PipelineConfig other = cfg;
  other.training.tau_i = 0.4;
  try {
    (void)sd::run_pipeline(other);
    FAIL("expected a raised error");
  } catch (const sd::Error& e) {
    CHECK(std::string(e.what()).find("refusing") != std::string::npos);
  }
}

TEST_CASE("disabled stages are identity transforms") {
  SUBCASE("image filter off keeps the raw synthetic set") {
    sd::PipelineConfig cfg = base_config("no_imgf");
    cfg.toggles.use_image_filter = false;
    sd::RunReport r = sd::run_pipeline(cfg);
    const std::filesystem::path out(cfg.output_dir);
    CHECK_FALSE(std::filesystem::exists(
        out / "synthetic_after_image_filter.json"));
    CHECK_FALSE(r.image_filter.has_value());
    CHECK(r.images_discarded == 0);
    // The instance filter consumed the raw set.
    sd::Dataset raw = sd::load_dataset(out / "synthetic_raw.json");
    sd::Dataset flagged =
        sd::load_dataset(out / "synthetic_after_instance_filter.json");
    CHECK(flagged.images.size() == raw.images.size());
  }

  SUBCASE("detector filter off leaves all annotations live") {
    sd::PipelineConfig cfg = base_config("no_detf");
    cfg.toggles.use_detector_filter = false;
    sd::RunReport r = sd::run_pipeline(cfg);
    const std::filesystem::path out(cfg.output_dir);
    CHECK_FALSE(std::filesystem::exists(out / "filter_detector.json"));
    CHECK_FALSE(r.instance_filter.has_value());
    CHECK(r.instances_removed == 0);
  }

  SUBCASE("synthetic off trains on real data alone") {
    sd::PipelineConfig cfg = base_config("no_synth");
    cfg.toggles.use_synthetic_data = false;
    sd::RunReport r = sd::run_pipeline(cfg);
    const std::filesystem::path out(cfg.output_dir);
    CHECK_FALSE(std::filesystem::exists(out / "synthetic_raw.json"));
    CHECK(r.synthetic_images_generated == 0);
    CHECK(std::filesystem::exists(out / "final_detector.json"));
    // Every training batch came from the real pool.
    std::ifstream f(out / "telemetry.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(f, line)) {
      CHECK(line.find("\"source\":\"real\"") != std::string::npos);
      ++lines;
    }
    CHECK(lines == cfg.training.iterations);
  }

  SUBCASE("sampling off merges both pools into every batch") {
    sd::PipelineConfig cfg = base_config("no_sampling");
    cfg.toggles.use_sampling = false;
    (void)sd::run_pipeline(cfg);
    std::ifstream f(std::filesystem::path(cfg.output_dir) /
                    "telemetry.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(f, line)) {
      CHECK(line.find("\"source\":\"mixed\"") != std::string::npos);
      ++lines;
    }
    CHECK(lines == cfg.training.iterations);
  }
}

TEST_CASE("low-data fraction subsamples the real training set") {
  sd::PipelineConfig cfg = base_config("fraction");
  cfg.subsample_fraction = 0.5;
  cfg.toggles.use_image_filter = false;
  cfg.toggles.use_detector_filter = false;
  sd::RunReport r = sd::run_pipeline(cfg);
  const std::filesystem::path out(cfg.output_dir);
  sd::Dataset sub = sd::load_dataset(out / "real_subsampled.json");
  CHECK(sub.images.size() == 12);  // half of 24
  // Generation ran on the subsample, not on the full set.
  CHECK(r.synthetic_images_generated == 12);
}

TEST_CASE("sweep runs one pipeline per value in its own directory") {
  sd::PipelineConfig cfg = base_config("sweep");
  std::vector<double> values = {0.0, 0.3};
  std::vector<sd::RunReport> reports = sd::sweep(cfg, "p", values);
  REQUIRE(reports.size() == 2);
  for (size_t i = 0; i < reports.size(); ++i) {
    CHECK(reports[i].swept_axis == "p");
    CHECK(reports[i].swept_value == values[i]);
  }
  const std::filesystem::path base(cfg.output_dir);
  CHECK(std::filesystem::exists(base / "p_0" / "run_report.json"));
  CHECK(std::filesystem::exists(base / "p_0.3" / "run_report.json"));

  // Same seed everywhere: only the axis differs between subruns.
  sd::PipelineConfig c0 =
      sd::load_pipeline_config(base / "p_0" / "config.json");
  sd::PipelineConfig c1 =
      sd::load_pipeline_config(base / "p_0.3" / "config.json");
  CHECK(c0.seed == c1.seed);
  CHECK(c0.training.sampler.p == 0.0);
  CHECK(c1.training.sampler.p == 0.3);

  sd::write_reports(reports, cfg.output_dir);
  CHECK(std::filesystem::exists(base / "report.md"));
  CHECK(std::filesystem::exists(base / "ap_vs_p.svg"));
  std::string md = slurp(base / "report.md");
  CHECK(md.find("| p |") != std::string::npos);
  CHECK(md.find("0.3") != std::string::npos);
  std::string svg = slurp(base / "ap_vs_p.svg");
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("default sweep grids") {
  CHECK(sd::default_sweep_values("p") ==
        std::vector<double>{0.0, 0.1, 0.2, 0.3, 0.4, 0.5});
  CHECK(sd::default_sweep_values("tau_i") ==
        std::vector<double>{0.0, 0.1, 0.2, 0.3, 0.4, 0.5});
  CHECK(sd::default_sweep_values("tau_s") ==
        std::vector<double>{0.0, 0.1, 0.2, 0.3, 0.4, 0.5});
  CHECK(sd::default_sweep_values("copies") == std::vector<double>{1, 2, 3});
  CHECK(sd::default_sweep_values("fraction").size() == 8);
  CHECK_THROWS_AS((void)sd::default_sweep_values("nonsense"), sd::Error);
}

TEST_CASE("run reports round-trip and the stable form omits wall time") {
  sd::PipelineConfig cfg = base_config("report_io");
  cfg.toggles.use_detector_filter = false;
  cfg.toggles.use_image_filter = false;
  sd::RunReport r = sd::run_pipeline(cfg);
  auto dir = temp_dir("report_io_files");
  sd::save_run_report(r, dir / "r.json");
  sd::RunReport back = sd::load_run_report(dir / "r.json");
  CHECK(back.config_hash == r.config_hash);
  CHECK(back.synthetic_images_generated == r.synthetic_images_generated);
  CHECK(back.eval.ap == doctest::Approx(r.eval.ap).epsilon(1e-15));

  std::string stable = sd::run_report_to_json(r, false);
  CHECK(stable.find("wall_time") == std::string::npos);
  std::string full = sd::run_report_to_json(r, true);
  CHECK(full.find("wall_time_s") != std::string::npos);
}
