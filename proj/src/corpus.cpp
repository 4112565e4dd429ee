// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#include "synthdet/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "synthdet/check.hpp"
#include "synthdet/glyph.hpp"
#include "synthdet/rng.hpp"

namespace synthdet {
namespace {

constexpr int kLayoutTries = 30;      // placements per instance
constexpr int kLayoutRestarts = 20;   // whole-image relayouts
constexpr double kMaxLayoutIou = 0.05;

void check_config(const CorpusConfig& cfg) {
  SD_CHECK(cfg.canvas_size >= 32, "canvas too small: " << cfg.canvas_size);
  SD_CHECK(!cfg.train_counts.empty() &&
               cfg.train_counts.size() == cfg.val_counts.size(),
           "train and val category counts must align");
  SD_CHECK(cfg.train_counts.size() <= static_cast<size_t>(kNumGlyphStyles),
           "at most " << kNumGlyphStyles << " categories supported");
  for (int c : cfg.train_counts) {
    SD_CHECK(c >= 1 && c <= cfg.num_train_images,
             "train count out of range: " << c);
  }
  for (int c : cfg.val_counts) {
    SD_CHECK(c >= 1 && c <= cfg.num_val_images,
             "val count out of range: " << c);
  }
  SD_CHECK(cfg.min_side >= kMinGlyphSide && cfg.max_side >= cfg.min_side &&
               cfg.max_side < cfg.canvas_size,
           "bad box side range [" << cfg.min_side << ", " << cfg.max_side
                                  << "]");
}

std::string padded_name(const char* prefix, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "images/%s_%04d.ppm", prefix, index);
  return buf;
}

// One split: picks which categories land on which images (exact per-category
// image counts), lays out non-overlapping boxes and renders the glyphs.
void build_split(const CorpusConfig& cfg, const std::vector<int>& counts,
                 int num_images, int64_t id_base, const char* prefix,
                 uint64_t seed, Dataset* out,
                 std::unordered_map<int64_t, Image>* pixels) {
  const int k_cats = static_cast<int>(counts.size());
  std::vector<std::vector<int>> cats_per_image(num_images);
  for (int c = 0; c < k_cats; ++c) {
    std::vector<int> idx(num_images);
    for (int i = 0; i < num_images; ++i) idx[i] = i;
    Rng rng(mix_seed({seed, 100 + static_cast<uint64_t>(c)}));
    // Partial Fisher-Yates: the first counts[c] entries are the selection.
    for (int i = 0; i < counts[c]; ++i) {
      int j = i + static_cast<int>(rng.uniform_int(num_images - i));
      std::swap(idx[i], idx[j]);
    }
    std::vector<int> picked(idx.begin(), idx.begin() + counts[c]);
    std::sort(picked.begin(), picked.end());
    for (int i : picked) cats_per_image[i].push_back(c);
  }

  int64_t next_ann_id = 1;
  for (int i = 0; i < num_images; ++i) {
    const std::vector<int>& cats = cats_per_image[i];
    const int k = static_cast<int>(cats.size());
    Rng rng(mix_seed({seed, 10000 + static_cast<uint64_t>(i)}));

    // Dense images get smaller boxes so a low-overlap layout stays feasible.
    double side_cap = cfg.max_side;
    if (k > 0) {
      double area_cap = std::sqrt(0.5 * cfg.canvas_size * cfg.canvas_size / k);
      side_cap = std::min(side_cap, std::max(cfg.min_side, area_cap));
    }

    std::vector<Box> placed;
    bool done = k == 0;
    for (int attempt = 0; attempt < kLayoutRestarts && !done; ++attempt) {
      placed.clear();
      done = true;
      for (int j = 0; j < k; ++j) {
        double s = rng.uniform(cfg.min_side, side_cap);
        double u = rng.uniform(0.93, 1.08);
        double w = std::min(s * u, static_cast<double>(cfg.canvas_size) - 1);
        double h = std::min(s / u, static_cast<double>(cfg.canvas_size) - 1);
        bool found = false;
        for (int t = 0; t < kLayoutTries; ++t) {
          Box cand{rng.uniform(0.0, cfg.canvas_size - w),
                   rng.uniform(0.0, cfg.canvas_size - h), w, h};
          bool free = true;
          for (const Box& b : placed) {
            if (iou(cand, b) > kMaxLayoutIou) {
              free = false;
              break;
            }
          }
          if (free) {
            placed.push_back(cand);
            found = true;
            break;
          }
        }
        if (!found) {
          done = false;
          break;
        }
      }
    }
    SD_CHECK(done, "could not lay out " << k << " boxes on image " << i
                                        << " of split " << prefix);

    Image img(cfg.canvas_size, cfg.canvas_size);
    {
      Rng bg_rng(mix_seed({seed, 20000 + static_cast<uint64_t>(i)}));
      render_background(img, bg_rng);
    }
    ImageRecord rec;
    rec.id = id_base + i + 1;
    rec.width = cfg.canvas_size;
    rec.height = cfg.canvas_size;
    rec.file_name = padded_name(prefix, i + 1);
    rec.source = Source::kReal;
    for (int j = 0; j < k; ++j) {
      GlyphJitter jitter = sample_glyph_jitter(rng);
      render_glyph(img, placed[j], glyph_style(cats[j]), jitter);
      InstanceAnnotation ann;
      ann.id = next_ann_id++;
      ann.image_id = rec.id;
      ann.category_id = cats[j] + 1;
      ann.bbox = placed[j];
      out->annotations.push_back(ann);
    }
    out->images.push_back(rec);
    pixels->emplace(rec.id, std::move(img));
  }
}

}  // namespace

ToyCorpus build_toy_corpus(const CorpusConfig& cfg, uint64_t seed) {
  check_config(cfg);
  ToyCorpus corpus;
  corpus.train.source = Source::kReal;
  corpus.val.source = Source::kReal;
  for (size_t c = 0; c < cfg.train_counts.size(); ++c) {
    Category cat;
    cat.id = static_cast<int32_t>(c) + 1;
    cat.name = glyph_style(static_cast<int>(c)).name;
    corpus.train.categories.push_back(cat);
    corpus.val.categories.push_back(cat);
  }
  build_split(cfg, cfg.train_counts, cfg.num_train_images, /*id_base=*/0,
              "train", mix_seed({seed, 1}), &corpus.train, &corpus.pixels);
  build_split(cfg, cfg.val_counts, cfg.num_val_images, /*id_base=*/1000000,
              "val", mix_seed({seed, 2}), &corpus.val, &corpus.pixels);
  corpus.train = assign_frequency_buckets(corpus.train);
  // Buckets come from training-set frequency; the val set inherits them.
  corpus.val.categories = corpus.train.categories;
  validate_dataset(corpus.train);
  validate_dataset(corpus.val);
  return corpus;
}

ImageProvider corpus_image_provider(const ToyCorpus& corpus) {
  return [&corpus](const ImageRecord& rec) {
    auto it = corpus.pixels.find(rec.id);
    SD_CHECK(it != corpus.pixels.end(),
             "no pixels for image " << rec.id << " in the corpus");
    return it->second;
  };
}

void write_corpus(const ToyCorpus& corpus, const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "images");
  for (const auto& d : {&corpus.train, &corpus.val}) {
    for (const auto& rec : d->images) {
      save_ppm(corpus.pixels.at(rec.id), root / rec.file_name);
    }
  }
  save_dataset(corpus.train, root / "train.json");
  save_dataset(corpus.val, root / "val.json");
}

}  // namespace synthdet
