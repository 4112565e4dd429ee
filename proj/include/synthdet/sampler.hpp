// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "synthdet/dataset.hpp"
#include "synthdet/rng.hpp"

namespace synthdet {

struct SamplerConfig {
  double p = 0.2;      // probability a batch is drawn from the synthetic pool
  int batch_size = 8;
  uint64_t seed = 0;

  bool operator==(const SamplerConfig& o) const = default;
};

struct Batch {
  std::vector<int64_t> examples;  // image ids
  Source source = Source::kReal;  // batches are homogeneous
};

// Substream tags for the sampler's independent RNG streams. Published so a
// reference training loop can reproduce the exact id sequence.
inline constexpr uint64_t kRealStreamTag = 1;
inline constexpr uint64_t kSynthStreamTag = 2;
inline constexpr uint64_t kChoiceStreamTag = 3;

// Shuffled without-replacement traversal of an id pool; reshuffles when
// exhausted, so a batch that straddles the boundary wraps into the next
// epoch and batch size stays constant.
class EpochCursor {
 public:
  EpochCursor(std::vector<int64_t> ids, uint64_t seed);

  int64_t next();
  size_t pool_size() const { return ids_.size(); }

  std::string save_state() const;
  void load_state(const std::string& text);

 private:
  std::vector<int64_t> ids_;  // current shuffled order
  size_t pos_ = 0;
  bool started_ = false;
  Rng rng_;
};

// Draws homogeneous batches: Bernoulli(p) picks the source, then batch_size
// ids come off that source's epoch cursor. The source choice, the real
// traversal and the synthetic traversal use independent RNG streams, and the
// degenerate probabilities 0 and 1 skip the Bernoulli draw entirely, so
// p = 0 yields the identical real id sequence a plain single-pool loop with
// the same seed would produce.
class BatchSampler {
 public:
  BatchSampler(std::vector<int64_t> real_ids, std::vector<int64_t> synth_ids,
               const SamplerConfig& cfg);

  Batch next_batch();

  std::string save_state() const;
  void load_state(const std::string& text);

 private:
  SamplerConfig cfg_;
  Rng choice_rng_;
  EpochCursor real_;
  EpochCursor synth_;
};

}  // namespace synthdet
