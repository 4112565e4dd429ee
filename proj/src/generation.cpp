// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#include "synthdet/generation.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "synthdet/check.hpp"
#include "synthdet/prompt.hpp"
#include "synthdet/rng.hpp"

namespace synthdet {
namespace {

using nlohmann::json;

constexpr int kPlacementTries = 30;
constexpr double kMaxPlacementIou = 0.05;

// Style lookup by label keeps the wire format free of category ids: a mock
// server on the far side of the HTTP adapter reproduces the exact image the
// in-process mock would produce from the same request.
int style_index_for_label(const std::string& label) {
  for (int i = 0; i < kNumGlyphStyles; ++i) {
    if (glyph_style(i).name == label) return i;
  }
  return static_cast<int>(fnv1a64(label) % kNumGlyphStyles);
}

// Samples a box of the given size whose IoU with every box in `taken` is at
// most kMaxPlacementIou. Returns false when no placement is found.
bool find_free_location(Rng& rng, int img_w, int img_h, double w, double h,
                        const std::vector<BoxCondition>& taken, Box* out) {
  if (w > img_w || h > img_h) return false;
  for (int t = 0; t < kPlacementTries; ++t) {
    Box cand{rng.uniform(0.0, img_w - w), rng.uniform(0.0, img_h - h), w, h};
    bool free = true;
    for (const auto& bc : taken) {
      if (iou(cand, bc.box) > kMaxPlacementIou) {
        free = false;
        break;
      }
    }
    if (free) {
      *out = cand;
      return true;
    }
  }
  return false;
}

json box_condition_to_json(const BoxCondition& bc) {
  return json{{"x", bc.box.x},       {"y", bc.box.y},
              {"w", bc.box.w},       {"h", bc.box.h},
              {"label", bc.category_name}, {"prompt", bc.prompt}};
}

}  // namespace

std::string to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::kWrongCategory:
      return "wrong_category";
    case CorruptionKind::kBlank:
      return "blank";
    case CorruptionKind::kMisplaced:
      return "misplaced";
  }
  SD_FAIL("unknown corruption kind");
}

GenerationResult mock_inpaint(const GenerationRequest& req,
                              const MockGenConfig& cfg) {
  SD_CHECK(req.image.width > 0 && req.image.height > 0,
           "mock_inpaint: empty request image");
  SD_CHECK(cfg.corruption_rate >= 0.0 && cfg.corruption_rate <= 1.0,
           "corruption_rate out of [0, 1]: " << cfg.corruption_rate);
  SD_CHECK(cfg.hallucination_rate >= 0.0 && cfg.hallucination_rate <= 1.0,
           "hallucination_rate out of [0, 1]: " << cfg.hallucination_rate);

  GenerationResult out;
  out.seed = req.seed;
  out.has_mock_metadata = true;
  out.image = Image(req.image.width, req.image.height);
  {
    Rng bg_rng(mix_seed({req.seed, 17}));
    render_background(out.image, bg_rng);
  }

  // Each box draws from its own substream so adding or reordering boxes
  // elsewhere in the image never changes what this box renders.
  for (size_t i = 0; i < req.boxes.size(); ++i) {
    const BoxCondition& bc = req.boxes[i];
    Rng rng(mix_seed({req.seed, 1000 + static_cast<uint64_t>(i)}));
    BoxGenMetadata meta;
    meta.corrupted = rng.bernoulli(cfg.corruption_rate);
    CorruptionKind kind =
        cfg.forced_kind ? *cfg.forced_kind
                        : static_cast<CorruptionKind>(rng.uniform_int(3));
    GlyphJitter jitter = sample_glyph_jitter(rng);
    int style = style_index_for_label(bc.category_name);

    if (!meta.corrupted) {
      render_glyph(out.image, bc.box, glyph_style(style), jitter);
    } else {
      meta.kind = kind;
      switch (kind) {
        case CorruptionKind::kWrongCategory: {
          int alt = (style + 1 +
                     static_cast<int>(rng.uniform_int(kNumGlyphStyles - 1))) %
                    kNumGlyphStyles;
          render_glyph(out.image, bc.box, glyph_style(alt), jitter);
          break;
        }
        case CorruptionKind::kBlank:
          break;  // box region stays background
        case CorruptionKind::kMisplaced: {
          // Object exists but not where annotated: the annotated box stays
          // background and the glyph lands at an unclaimed location.
          Box where;
          if (find_free_location(rng, out.image.width, out.image.height,
                                 bc.box.w, bc.box.h, req.boxes, &where)) {
            render_glyph(out.image, where, glyph_style(style), jitter);
          }
          break;
        }
      }
    }
    out.per_box_metadata.push_back(meta);
  }

  // At most one hallucinated instance per image, on its own substream.
  Rng hal_rng(mix_seed({req.seed, 999}));
  if (hal_rng.bernoulli(cfg.hallucination_rate)) {
    double side_cap = std::min({28.0, static_cast<double>(req.image.width),
                                static_cast<double>(req.image.height)});
    double w = hal_rng.uniform(12.0, side_cap);
    double h = hal_rng.uniform(12.0, side_cap);
    int style = static_cast<int>(hal_rng.uniform_int(kNumGlyphStyles));
    GlyphJitter jitter = sample_glyph_jitter(hal_rng);
    Box where;
    if (find_free_location(hal_rng, out.image.width, out.image.height, w, h,
                           req.boxes, &where)) {
      render_glyph(out.image, where, glyph_style(style), jitter);
      out.hallucinated_boxes.push_back(where);
    }
  }
  return out;
}

GenerationResult MockBackend::inpaint(const GenerationRequest& req) {
  return mock_inpaint(req, cfg_);
}

std::string generation_request_to_json(const GenerationRequest& req) {
  json boxes = json::array();
  for (const auto& bc : req.boxes) boxes.push_back(box_condition_to_json(bc));
  json j{{"image_b64", base64_encode(encode_ppm_bytes(req.image))},
         {"boxes", std::move(boxes)},
         {"image_prompt", req.image_prompt},
         {"seed", req.seed}};
  return j.dump();
}

GenerationRequest generation_request_from_json(const std::string& body) {
  json j = json::parse(body, nullptr, /*allow_exceptions=*/false);
  SD_CHECK(!j.is_discarded(), "generation request: malformed JSON");
  GenerationRequest req;
  try {
    req.image = decode_ppm_bytes(base64_decode(j.at("image_b64")));
    req.image_prompt = j.at("image_prompt");
    req.seed = j.at("seed").get<uint64_t>();
    for (const auto& b : j.at("boxes")) {
      BoxCondition bc;
      bc.box = Box{b.at("x"), b.at("y"), b.at("w"), b.at("h")};
      bc.category_name = b.at("label");
      bc.prompt = b.at("prompt");
      req.boxes.push_back(std::move(bc));
    }
  } catch (const json::exception& e) {
    SD_FAIL("generation request: " << e.what());
  }
  return req;
}

// The wire response carries only pixels and the seed; mock bookkeeping such
// as per_box_metadata never crosses the service boundary.
std::string generation_result_to_json(const GenerationResult& res) {
  json j{{"image_b64", base64_encode(encode_ppm_bytes(res.image))},
         {"seed", res.seed}};
  return j.dump();
}

GenerationResult generation_result_from_json(const std::string& body) {
  json j = json::parse(body, nullptr, /*allow_exceptions=*/false);
  SD_CHECK(!j.is_discarded(), "generation response: malformed JSON");
  GenerationResult res;
  try {
    res.image = decode_ppm_bytes(base64_decode(j.at("image_b64")));
    res.seed = j.at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    SD_FAIL("generation response: " << e.what());
  }
  res.has_mock_metadata = false;
  return res;
}

HttpGenerationBackend::HttpGenerationBackend(std::string host, int port,
                                             int max_retries, int concurrency,
                                             double timeout_s)
    : host_(std::move(host)),
      port_(port),
      max_retries_(max_retries),
      concurrency_(concurrency),
      timeout_s_(timeout_s) {
  SD_CHECK(max_retries_ >= 1, "max_retries must be >= 1: " << max_retries_);
  SD_CHECK(concurrency_ >= 1, "concurrency must be >= 1: " << concurrency_);
}

GenerationResult HttpGenerationBackend::inpaint(const GenerationRequest& req) {
  const std::string body = generation_request_to_json(req);
  std::string last_error;
  for (int attempt = 0; attempt < max_retries_; ++attempt) {
    if (attempt > 0) {
      auto backoff = std::chrono::milliseconds(50LL << (attempt - 1));
      std::this_thread::sleep_for(backoff);
    }
    httplib::Client cli(host_, port_);
    cli.set_connection_timeout(std::chrono::duration<double>(timeout_s_));
    cli.set_read_timeout(std::chrono::duration<double>(timeout_s_));
    auto res = cli.Post("/inpaint", body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    GenerationResult out = generation_result_from_json(res->body);
    SD_CHECK(out.image.width == req.image.width &&
                 out.image.height == req.image.height,
             "generation service returned " << out.image.width << "x"
                                            << out.image.height
                                            << " for a " << req.image.width
                                            << "x" << req.image.height
                                            << " request");
    return out;
  }
  SD_FAIL("generation request failed after " << max_retries_
                                             << " attempts; last error: "
                                             << last_error);
}

GenerationRequest build_generation_request(const Dataset& d,
                                           const ImageRecord& im,
                                           const Image& pixels,
                                           uint64_t seed) {
  SD_CHECK(pixels.width == im.width && pixels.height == im.height,
           "image " << im.id << ": pixel buffer " << pixels.width << "x"
                    << pixels.height << " does not match record " << im.width
                    << "x" << im.height);
  PromptSet prompts = build_prompts(d, im.id);
  GenerationRequest req;
  req.image = pixels;
  req.image_prompt = prompts.image_prompt;
  req.seed = seed;
  size_t pi = 0;
  for (const auto& ann : d.annotations) {
    if (ann.image_id != im.id) continue;
    const Category* cat = d.find_category(ann.category_id);
    SD_CHECK(cat != nullptr, "annotation " << ann.id << ": unknown category "
                                           << ann.category_id);
    SD_CHECK(pi < prompts.box_prompts.size() &&
                 prompts.box_prompts[pi].first == ann.id,
             "prompt list out of sync at annotation " << ann.id);
    BoxCondition bc;
    bc.box = ann.bbox;
    bc.category_id = ann.category_id;
    bc.category_name = cat->name;
    bc.prompt = prompts.box_prompts[pi].second;
    req.boxes.push_back(std::move(bc));
    ++pi;
  }
  return req;
}

uint64_t generation_seed(uint64_t base_seed, int64_t image_id,
                         int copy_index) {
  return mix_seed({base_seed, static_cast<uint64_t>(image_id),
                   static_cast<uint64_t>(copy_index)});
}

Dataset generate_synthetic_dataset(const Dataset& real,
                                   const std::filesystem::path& real_root,
                                   int copies, uint64_t base_seed,
                                   GenerationBackend& backend,
                                   const std::filesystem::path& out_root) {
  SD_CHECK(copies >= 1, "copies must be >= 1: " << copies);
  validate_dataset(real);
  std::filesystem::create_directories(out_root);

  struct Slot {
    const ImageRecord* src = nullptr;
    int copy = 0;
    uint64_t seed = 0;
    GenerationResult result;
  };
  std::vector<Slot> slots;
  slots.reserve(real.images.size() * static_cast<size_t>(copies));
  for (const auto& im : real.images) {
    for (int c = 0; c < copies; ++c) {
      Slot s;
      s.src = &im;
      s.copy = c;
      s.seed = generation_seed(base_seed, im.id, c);
      slots.push_back(std::move(s));
    }
  }

  // Fixed slot list + atomic cursor: worker scheduling cannot change which
  // request gets which seed or where its result lands.
  std::atomic<size_t> cursor{0};
  std::vector<std::exception_ptr> errors(slots.size());
  int threads = std::max(1, std::min<int>(backend.max_concurrency(),
                                          static_cast<int>(slots.size())));
  auto worker = [&] {
    for (;;) {
      size_t i = cursor.fetch_add(1);
      if (i >= slots.size()) return;
      try {
        Slot& s = slots[i];
        Image pixels = load_ppm(real_root / s.src->file_name);
        GenerationRequest req =
            build_generation_request(real, *s.src, pixels, s.seed);
        s.result = backend.inpaint(req);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  int64_t max_image_id = 0;
  int64_t max_ann_id = 0;
  for (const auto& im : real.images) max_image_id = std::max(max_image_id, im.id);
  for (const auto& a : real.annotations) max_ann_id = std::max(max_ann_id, a.id);

  Dataset synth;
  synth.source = Source::kSynthetic;
  synth.categories = real.categories;
  auto by_image = real.annotations_by_image();
  int64_t next_ann_id = max_ann_id + 1;
  for (size_t i = 0; i < slots.size(); ++i) {
    const Slot& s = slots[i];
    ImageRecord rec;
    rec.id = max_image_id + 1 + static_cast<int64_t>(i);
    rec.width = s.src->width;
    rec.height = s.src->height;
    rec.file_name =
        "syn_" + std::to_string(s.src->id) + "_c" + std::to_string(s.copy) +
        ".ppm";
    rec.source = Source::kSynthetic;
    rec.generation_seed = s.seed;
    rec.source_image_id = s.src->id;
    save_ppm(s.result.image, out_root / rec.file_name);

    auto it = by_image.find(s.src->id);
    const std::vector<size_t> none;
    const std::vector<size_t>& ann_idx = it == by_image.end() ? none : it->second;
    if (s.result.has_mock_metadata) {
      SD_CHECK(s.result.per_box_metadata.size() == ann_idx.size(),
               "image " << s.src->id << ": generator returned "
                        << s.result.per_box_metadata.size()
                        << " box records for " << ann_idx.size()
                        << " annotations");
    }
    for (size_t k = 0; k < ann_idx.size(); ++k) {
      InstanceAnnotation ann = real.annotations[ann_idx[k]];
      ann.id = next_ann_id++;
      ann.image_id = rec.id;
      ann.filtered_out = false;
      ann.mock_corruption_kind.reset();
      if (s.result.has_mock_metadata && s.result.per_box_metadata[k].corrupted) {
        ann.mock_corruption_kind = to_string(s.result.per_box_metadata[k].kind);
      }
      synth.annotations.push_back(std::move(ann));
    }
    synth.images.push_back(std::move(rec));
  }
  validate_dataset(synth);
  return synth;
}

}  // namespace synthdet
