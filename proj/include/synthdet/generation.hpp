// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "synthdet/dataset.hpp"
#include "synthdet/glyph.hpp"
#include "synthdet/image.hpp"

namespace synthdet {

enum class CorruptionKind { kWrongCategory, kBlank, kMisplaced };

std::string to_string(CorruptionKind k);

// One box to inpaint: geometry plus the prompts built for it.
struct BoxCondition {
  Box box;
  int32_t category_id = 0;
  std::string category_name;
  std::string prompt;  // box-level prompt
};

struct GenerationRequest {
  Image image;
  std::vector<BoxCondition> boxes;
  std::string image_prompt;
  uint64_t seed = 0;
};

struct BoxGenMetadata {
  bool corrupted = false;
  CorruptionKind kind = CorruptionKind::kWrongCategory;
};

struct GenerationResult {
  Image image;  // same dimensions as the request image
  uint64_t seed = 0;
  // Mock-only ground truth; present iff produced by the mock generator.
  std::vector<BoxGenMetadata> per_box_metadata;
  std::vector<Box> hallucinated_boxes;
  bool has_mock_metadata = false;
};

// Test double for the inpainting diffusion model. Corruptions model the two
// generation failure families (bad quality, wrong class); hallucinations
// model extra unannotated instances.
struct MockGenConfig {
  double corruption_rate = 0.0;
  double hallucination_rate = 0.0;
  // Forces the corruption kind instead of sampling it uniformly.
  std::optional<CorruptionKind> forced_kind;
};

// Pure function of (request, config); every draw derives from request.seed.
GenerationResult mock_inpaint(const GenerationRequest& req,
                              const MockGenConfig& cfg);

// Adapter contract for an inpainting service. Implementations must return
// an image of the same dimensions as the input.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual GenerationResult inpaint(const GenerationRequest& req) = 0;
  // Upper bound on concurrent in-flight requests.
  virtual int max_concurrency() const { return 1; }
};

class MockBackend : public GenerationBackend {
 public:
  explicit MockBackend(MockGenConfig cfg) : cfg_(cfg) {}
  GenerationResult inpaint(const GenerationRequest& req) override;
  int max_concurrency() const override { return 4; }

 private:
  MockGenConfig cfg_;
};

// HTTP/JSON adapter for a real inference service. One request per image,
// base64 PPM pixel payload, bounded retries with exponential backoff.
class HttpGenerationBackend : public GenerationBackend {
 public:
  HttpGenerationBackend(std::string host, int port, int max_retries = 3,
                        int concurrency = 4, double timeout_s = 30.0);
  GenerationResult inpaint(const GenerationRequest& req) override;
  int max_concurrency() const override { return concurrency_; }

 private:
  std::string host_;
  int port_;
  int max_retries_;
  int concurrency_;
  double timeout_s_;
};

// Wire codec shared by the client adapter and any test server.
std::string generation_request_to_json(const GenerationRequest& req);
GenerationRequest generation_request_from_json(const std::string& body);
std::string generation_result_to_json(const GenerationResult& res);
GenerationResult generation_result_from_json(const std::string& body);

// Builds the request for one annotated image (prompts from prompt_builder).
GenerationRequest build_generation_request(const Dataset& d,
                                           const ImageRecord& im,
                                           const Image& pixels, uint64_t seed);

// Seed for (base_seed, image, copy): reproducible multi-copy generation.
uint64_t generation_seed(uint64_t base_seed, int64_t image_id, int copy_index);

// Generates `copies` synthetic images per real image, reusing each real
// image's annotation layout unchanged. Pixels are written as PPM files under
// out_root; the returned dataset has source = synthetic. Requests run on up
// to backend.max_concurrency() threads; outputs are ordered by input slot,
// so results do not depend on scheduling.
Dataset generate_synthetic_dataset(const Dataset& real,
                                   const std::filesystem::path& real_root,
                                   int copies, uint64_t base_seed,
                                   GenerationBackend& backend,
                                   const std::filesystem::path& out_root);

}  // namespace synthdet
