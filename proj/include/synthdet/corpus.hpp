// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <unordered_map>
#include <vector>

#include "synthdet/dataset.hpp"
#include "synthdet/detector.hpp"
#include "synthdet/image.hpp"

namespace synthdet {

// Long-tailed glyph corpus: category c appears in exactly train_counts[c]
// training images, so the head/tail split is designed rather than sampled.
// Defaults put two categories in each of the rare (<= 10 images), common
// (11..100) and frequent (> 100) buckets.
//
// The default box sides sit in [17, 19] on purpose: with single-scale 18px
// anchors every centered anchor lands in the positive or iou-ignore band,
// so the only hard negatives the linear detector sees are spatially offset
// windows. That keeps the toy task learnable to high AP by design.
struct CorpusConfig {
  int canvas_size = 64;
  std::vector<int> train_counts = {130, 10, 150, 90, 100, 10};
  std::vector<int> val_counts = {15, 10, 15, 10, 10, 10};
  int num_train_images = 200;
  int num_val_images = 60;
  double min_side = 17.0;
  double max_side = 19.0;
};

struct ToyCorpus {
  Dataset train;  // source = real, frequency buckets assigned
  Dataset val;    // buckets copied from the training set
  std::unordered_map<int64_t, Image> pixels;  // by image id, train and val
};

ToyCorpus build_toy_corpus(const CorpusConfig& cfg, uint64_t seed);

// Serves corpus pixels from memory.
ImageProvider corpus_image_provider(const ToyCorpus& corpus);

// Writes root/train.json, root/val.json and root/images/*.ppm.
void write_corpus(const ToyCorpus& corpus, const std::filesystem::path& root);

}  // namespace synthdet
