// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#include "synthdet/image.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "synthdet/check.hpp"

namespace synthdet {

std::vector<uint8_t> encode_ppm_bytes(const Image& img) {
  SD_CHECK(img.width > 0 && img.height > 0, "cannot encode empty image");
  std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
      "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

Image decode_ppm_bytes(const std::vector<uint8_t>& bytes) {
  std::string text(bytes.begin(),
                   bytes.begin() + std::min<size_t>(bytes.size(), 64));
  std::istringstream header(text);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  header >> magic >> w >> h >> maxval;
  SD_CHECK(magic == "P6" && maxval == 255 && w > 0 && h > 0,
           "not a P6/255 ppm payload");
  // pixel data starts one byte after maxval
  size_t offset = static_cast<size_t>(header.tellg()) + 1;
  Image img(w, h);
  SD_CHECK(bytes.size() >= offset + img.data.size(),
           "truncated ppm payload: have " << bytes.size() << " bytes, need "
                                          << offset + img.data.size());
  std::memcpy(img.data.data(), bytes.data() + offset, img.data.size());
  return img;
}

void save_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  SD_CHECK(out.good(), "cannot open " << path << " for writing");
  auto bytes = encode_ppm_bytes(img);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  SD_CHECK(out.good(), "short write to " << path);
}

Image load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  SD_CHECK(in.good(), "missing image file: " << path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return decode_ppm_bytes(bytes);
}

namespace {
constexpr char kB64[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}
}  // namespace

std::string base64_encode(const std::vector<uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out.push_back(kB64[v & 63]);
  }
  const size_t rest = bytes.size() - i;
  if (rest == 1) {
    uint32_t v = bytes[i] << 16;
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.append("==");
  } else if (rest == 2) {
    uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<uint8_t> base64_decode(const std::string& text) {
  SD_CHECK(text.size() % 4 == 0, "base64 length must be a multiple of 4");
  std::vector<uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    int vals[4] = {0, 0, 0, 0};
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      char c = text[i + k];
      if (c == '=') {
        ++pad;
        vals[k] = 0;
      } else {
        SD_CHECK(pad == 0, "base64 padding in the middle of input");
        vals[k] = b64_value(c);
        SD_CHECK(vals[k] >= 0, "invalid base64 character '" << c << "'");
      }
    }
    uint32_t v = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
    out.push_back((v >> 16) & 0xff);
    if (pad < 2) out.push_back((v >> 8) & 0xff);
    if (pad < 1) out.push_back(v & 0xff);
  }
  return out;
}

}  // namespace synthdet
