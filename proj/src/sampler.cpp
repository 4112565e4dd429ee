// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#include "synthdet/sampler.hpp"

#include <json.hpp>

#include "synthdet/check.hpp"

namespace synthdet {

using nlohmann::json;

EpochCursor::EpochCursor(std::vector<int64_t> ids, uint64_t seed)
    : ids_(std::move(ids)), rng_(seed) {}

int64_t EpochCursor::next() {
  SD_CHECK(!ids_.empty(), "drawing from an empty pool");
  if (!started_ || pos_ == ids_.size()) {
    rng_.shuffle(ids_);
    pos_ = 0;
    started_ = true;
  }
  return ids_[pos_++];
}

std::string EpochCursor::save_state() const {
  json j{{"ids", ids_},
         {"pos", pos_},
         {"started", started_},
         {"rng", rng_.save_state()}};
  return j.dump();
}

void EpochCursor::load_state(const std::string& text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  SD_CHECK(!j.is_discarded(), "cursor state: malformed JSON");
  try {
    ids_ = j.at("ids").get<std::vector<int64_t>>();
    pos_ = j.at("pos").get<size_t>();
    started_ = j.at("started").get<bool>();
    rng_.load_state(j.at("rng").get<std::string>());
  } catch (const json::exception& e) {
    SD_FAIL("cursor state: " << e.what());
  }
  SD_CHECK(pos_ <= ids_.size(), "cursor state: position past end");
}

BatchSampler::BatchSampler(std::vector<int64_t> real_ids,
                           std::vector<int64_t> synth_ids,
                           const SamplerConfig& cfg)
    : cfg_(cfg),
      choice_rng_(mix_seed({cfg.seed, kChoiceStreamTag})),
      real_(std::move(real_ids), mix_seed({cfg.seed, kRealStreamTag})),
      synth_(std::move(synth_ids), mix_seed({cfg.seed, kSynthStreamTag})) {
  SD_CHECK(cfg_.p >= 0.0 && cfg_.p <= 1.0, "p out of [0, 1]: " << cfg_.p);
  SD_CHECK(cfg_.batch_size >= 1, "batch_size must be >= 1: " << cfg_.batch_size);
  SD_CHECK(cfg_.p == 0.0 || synth_.pool_size() > 0,
           "p > 0 with an empty synthetic pool");
  SD_CHECK(cfg_.p == 1.0 || real_.pool_size() > 0,
           "p < 1 with an empty real pool");
}

Batch BatchSampler::next_batch() {
  bool synthetic;
  if (cfg_.p <= 0.0) {
    synthetic = false;
  } else if (cfg_.p >= 1.0) {
    synthetic = true;
  } else {
    synthetic = choice_rng_.bernoulli(cfg_.p);
  }
  Batch b;
  b.source = synthetic ? Source::kSynthetic : Source::kReal;
  EpochCursor& cursor = synthetic ? synth_ : real_;
  b.examples.reserve(cfg_.batch_size);
  for (int i = 0; i < cfg_.batch_size; ++i) b.examples.push_back(cursor.next());
  return b;
}

std::string BatchSampler::save_state() const {
  json j{{"choice_rng", choice_rng_.save_state()},
         {"real", json::parse(real_.save_state())},
         {"synth", json::parse(synth_.save_state())}};
  return j.dump();
}

void BatchSampler::load_state(const std::string& text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  SD_CHECK(!j.is_discarded(), "sampler state: malformed JSON");
  try {
    choice_rng_.load_state(j.at("choice_rng").get<std::string>());
    real_.load_state(j.at("real").dump());
    synth_.load_state(j.at("synth").dump());
  } catch (const json::exception& e) {
    SD_FAIL("sampler state: " << e.what());
  }
}

}  // namespace synthdet
