// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#include "synthdet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "synthdet/check.hpp"
#include "synthdet/rng.hpp"

namespace synthdet {

using nlohmann::json;

// Extension keys live under this vendor prefix so standard COCO tools still
// parse the files.
static constexpr const char* kExtKey = "x_synthdet";

std::string to_string(Source s) {
  return s == Source::kReal ? "real" : "synthetic";
}

Source source_from_string(const std::string& s) {
  if (s == "real") return Source::kReal;
  if (s == "synthetic") return Source::kSynthetic;
  SD_FAIL("unknown source tag '" << s << "'");
}

std::string to_string(FrequencyBucket b) {
  switch (b) {
    case FrequencyBucket::kRare: return "rare";
    case FrequencyBucket::kCommon: return "common";
    case FrequencyBucket::kFrequent: return "frequent";
  }
  SD_FAIL("bad bucket value");
}

FrequencyBucket bucket_from_string(const std::string& s) {
  if (s == "rare") return FrequencyBucket::kRare;
  if (s == "common") return FrequencyBucket::kCommon;
  if (s == "frequent") return FrequencyBucket::kFrequent;
  SD_FAIL("unknown frequency bucket '" << s << "'");
}

const ImageRecord* Dataset::find_image(int64_t id) const {
  for (const auto& im : images)
    if (im.id == id) return &im;
  return nullptr;
}

const Category* Dataset::find_category(int32_t id) const {
  for (const auto& c : categories)
    if (c.id == id) return &c;
  return nullptr;
}

std::unordered_map<int64_t, std::vector<size_t>> Dataset::annotations_by_image()
    const {
  std::unordered_map<int64_t, std::vector<size_t>> out;
  for (size_t i = 0; i < annotations.size(); ++i)
    out[annotations[i].image_id].push_back(i);
  return out;
}

void validate_dataset(const Dataset& d) {
  std::unordered_map<int64_t, const ImageRecord*> images;
  for (const auto& im : d.images) {
    SD_CHECK(im.width > 0 && im.height > 0,
             "image " << im.id << " has non-positive dimensions " << im.width
                      << "x" << im.height);
    SD_CHECK(images.emplace(im.id, &im).second,
             "duplicate image id " << im.id);
  }
  std::unordered_set<int32_t> cats;
  for (const auto& c : d.categories)
    SD_CHECK(cats.insert(c.id).second, "duplicate category id " << c.id);
  std::unordered_set<int64_t> ann_ids;
  for (const auto& a : d.annotations) {
    SD_CHECK(ann_ids.insert(a.id).second, "duplicate annotation id " << a.id);
    auto it = images.find(a.image_id);
    SD_CHECK(it != images.end(), "annotation " << a.id
                                               << " references missing image "
                                               << a.image_id);
    SD_CHECK(cats.count(a.category_id) > 0,
             "annotation " << a.id << " references missing category "
                           << a.category_id);
    SD_CHECK(a.bbox.w > 0.0 && a.bbox.h > 0.0,
             "annotation " << a.id << " has zero-area bbox");
    const ImageRecord& im = *it->second;
    SD_CHECK(a.bbox.x >= 0.0 && a.bbox.y >= 0.0 &&
                 a.bbox.right() <= im.width + 1e-9 &&
                 a.bbox.bottom() <= im.height + 1e-9,
             "annotation " << a.id << " bbox exceeds image " << im.id
                           << " bounds");
  }
}

namespace {

json ext_of(const json& obj) {
  if (obj.contains(kExtKey)) return obj.at(kExtKey);
  return json::object();
}

json image_to_json(const ImageRecord& im) {
  json j{{"id", im.id},
         {"width", im.width},
         {"height", im.height},
         {"file_name", im.file_name}};
  json ext{{"source", to_string(im.source)}};
  if (im.aesthetic_score) ext["aesthetic_score"] = *im.aesthetic_score;
  if (im.generation_seed) ext["generation_seed"] = *im.generation_seed;
  if (im.source_image_id) ext["source_image_id"] = *im.source_image_id;
  j[kExtKey] = ext;
  return j;
}

ImageRecord image_from_json(const json& j, Source dataset_source) {
  for (const char* field : {"id", "width", "height", "file_name"})
    SD_CHECK(j.contains(field), "image record missing field '" << field
                                                               << "': " << j);
  ImageRecord im;
  im.id = j.at("id").get<int64_t>();
  im.width = j.at("width").get<int>();
  im.height = j.at("height").get<int>();
  im.file_name = j.at("file_name").get<std::string>();
  im.source = dataset_source;
  json ext = ext_of(j);
  if (ext.contains("source"))
    im.source = source_from_string(ext.at("source").get<std::string>());
  if (ext.contains("aesthetic_score"))
    im.aesthetic_score = ext.at("aesthetic_score").get<double>();
  if (ext.contains("generation_seed"))
    im.generation_seed = ext.at("generation_seed").get<uint64_t>();
  if (ext.contains("source_image_id"))
    im.source_image_id = ext.at("source_image_id").get<int64_t>();
  return im;
}

json annotation_to_json(const InstanceAnnotation& a) {
  json j{{"id", a.id},
         {"image_id", a.image_id},
         {"category_id", a.category_id},
         {"bbox", {a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h}},
         {"area", a.bbox.area()},
         {"iscrowd", 0}};
  json ext{{"filtered_out", a.filtered_out}};
  if (a.mock_corruption_kind) ext["mock_corruption_kind"] = *a.mock_corruption_kind;
  j[kExtKey] = ext;
  return j;
}

InstanceAnnotation annotation_from_json(const json& j, const Dataset& d) {
  for (const char* field : {"id", "image_id", "category_id", "bbox"})
    SD_CHECK(j.contains(field),
             "annotation record missing field '" << field << "': " << j);
  InstanceAnnotation a;
  a.id = j.at("id").get<int64_t>();
  a.image_id = j.at("image_id").get<int64_t>();
  a.category_id = j.at("category_id").get<int32_t>();
  const auto& bb = j.at("bbox");
  SD_CHECK(bb.is_array() && bb.size() == 4,
           "annotation " << a.id << " bbox must be [x, y, w, h]");
  a.bbox = Box{bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(),
               bb[3].get<double>()};
  if (j.contains("iscrowd"))
    SD_CHECK(j.at("iscrowd").get<int>() == 0,
             "annotation " << a.id << ": crowd annotations are unsupported");
  const ImageRecord* im = d.find_image(a.image_id);
  SD_CHECK(im != nullptr, "annotation " << a.id
                                        << " references missing image "
                                        << a.image_id);
  // Boxes are clipped to image bounds; a box entirely outside (zero area
  // after clipping) is a schema violation, not repairable.
  a.bbox = clip_box(a.bbox, im->width, im->height);
  SD_CHECK(a.bbox.w > 0.0 && a.bbox.h > 0.0,
           "annotation " << a.id << " has zero-area bbox after clipping");
  json ext = ext_of(j);
  if (ext.contains("filtered_out"))
    a.filtered_out = ext.at("filtered_out").get<bool>();
  if (ext.contains("mock_corruption_kind"))
    a.mock_corruption_kind = ext.at("mock_corruption_kind").get<std::string>();
  return a;
}

json category_to_json(const Category& c) {
  json j{{"id", c.id}, {"name", c.name}};
  json ext = json::object();
  if (c.frequency_bucket) ext["frequency_bucket"] = to_string(*c.frequency_bucket);
  if (c.image_count) ext["image_count"] = *c.image_count;
  if (!ext.empty()) j[kExtKey] = ext;
  return j;
}

Category category_from_json(const json& j) {
  for (const char* field : {"id", "name"})
    SD_CHECK(j.contains(field), "category record missing field '" << field
                                                                  << "': " << j);
  Category c;
  c.id = j.at("id").get<int32_t>();
  c.name = j.at("name").get<std::string>();
  json ext = ext_of(j);
  if (ext.contains("frequency_bucket"))
    c.frequency_bucket =
        bucket_from_string(ext.at("frequency_bucket").get<std::string>());
  if (ext.contains("image_count"))
    c.image_count = ext.at("image_count").get<int>();
  return c;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  SD_CHECK(in.good(), "missing dataset file: " << path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    SD_FAIL("cannot parse " << path << ": " << e.what());
  }
  for (const char* key : {"images", "annotations", "categories"})
    SD_CHECK(j.contains(key) && j.at(key).is_array(),
             path << " missing COCO top-level array '" << key << "'");

  Dataset d;
  if (j.contains(kExtKey) && j.at(kExtKey).contains("source"))
    d.source =
        source_from_string(j.at(kExtKey).at("source").get<std::string>());
  for (const auto& ji : j.at("images"))
    d.images.push_back(image_from_json(ji, d.source));
  for (const auto& jc : j.at("categories"))
    d.categories.push_back(category_from_json(jc));
  for (const auto& ja : j.at("annotations"))
    d.annotations.push_back(annotation_from_json(ja, d));
  validate_dataset(d);
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  validate_dataset(d);
  json j;
  j["images"] = json::array();
  for (const auto& im : d.images) j["images"].push_back(image_to_json(im));
  j["annotations"] = json::array();
  for (const auto& a : d.annotations)
    j["annotations"].push_back(annotation_to_json(a));
  j["categories"] = json::array();
  for (const auto& c : d.categories)
    j["categories"].push_back(category_to_json(c));
  j[kExtKey] = {{"source", to_string(d.source)}};
  std::ofstream out(path);
  SD_CHECK(out.good(), "cannot open " << path << " for writing");
  out << j.dump(1) << "\n";
  SD_CHECK(out.good(), "short write to " << path);
}

Dataset subsample(const Dataset& d, double fraction, uint64_t seed) {
  SD_CHECK(fraction > 0.0 && fraction <= 1.0,
           "fraction must be in (0, 1], got " << fraction);
  SD_CHECK(d.source == Source::kReal, "subsample applies to real datasets");
  const size_t n = d.images.size();
  const size_t k = static_cast<size_t>(
      std::floor(fraction * static_cast<double>(n) + 0.5));
  SD_CHECK(k > 0, "fraction " << fraction << " of " << n
                              << " images rounds to zero images");
  if (k == n) return d;

  // Partial Fisher-Yates: first k entries of a seeded shuffle.
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed({seed, 0x5ba3b1eULL ^ n}));
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(rng.uniform_int(n - i));
    std::swap(order[i], order[j]);
  }
  std::vector<size_t> picked(order.begin(), order.begin() + k);
  std::sort(picked.begin(), picked.end());  // keep original image order

  Dataset out;
  out.source = d.source;
  out.categories = d.categories;
  std::unordered_set<int64_t> kept_ids;
  for (size_t idx : picked) {
    out.images.push_back(d.images[idx]);
    kept_ids.insert(d.images[idx].id);
  }
  for (const auto& a : d.annotations)
    if (kept_ids.count(a.image_id)) out.annotations.push_back(a);
  return out;
}

Dataset assign_frequency_buckets(const Dataset& d, int r_max, int c_max) {
  std::unordered_map<int32_t, std::unordered_set<int64_t>> images_of;
  for (const auto& a : d.annotations)
    images_of[a.category_id].insert(a.image_id);
  Dataset out = d;
  for (auto& c : out.categories) {
    const int count = static_cast<int>(images_of[c.id].size());
    c.image_count = count;
    if (count <= r_max)
      c.frequency_bucket = FrequencyBucket::kRare;
    else if (count <= c_max)
      c.frequency_bucket = FrequencyBucket::kCommon;
    else
      c.frequency_bucket = FrequencyBucket::kFrequent;
  }
  return out;
}

}  // namespace synthdet
