// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace synthdet {

// Interleaved 8-bit RGB pixel buffer.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;  // 3 * width * height bytes, row-major

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(3u * w * h, 0) {}

  uint8_t& at(int x, int y, int c) { return data[3u * (y * width + x) + c]; }
  uint8_t at(int x, int y, int c) const {
    return data[3u * (y * width + x) + c];
  }

  bool operator==(const Image& o) const = default;
};

// Binary PPM (P6, maxval 255) round-trip.
void save_ppm(const Image& img, const std::filesystem::path& path);
Image load_ppm(const std::filesystem::path& path);

std::string base64_encode(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> base64_decode(const std::string& text);

// PPM bytes in memory; the wire payload for the generation service.
std::vector<uint8_t> encode_ppm_bytes(const Image& img);
Image decode_ppm_bytes(const std::vector<uint8_t>& bytes);

}  // namespace synthdet
