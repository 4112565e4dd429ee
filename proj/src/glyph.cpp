// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#include "synthdet/glyph.hpp"

#include <algorithm>
#include <cmath>

#include "synthdet/check.hpp"

namespace synthdet {

GlyphStyle glyph_style(int index) {
  static const GlyphStyle kStyles[kNumGlyphStyles] = {
      {GlyphShape::kSquare, {230, 40, 40}, "square"},
      {GlyphShape::kDisc, {40, 210, 40}, "disc"},
      {GlyphShape::kTriangle, {50, 80, 235}, "triangle"},
      {GlyphShape::kDiamond, {235, 220, 40}, "diamond"},
      {GlyphShape::kCross, {225, 45, 220}, "cross"},
      {GlyphShape::kRing, {40, 215, 215}, "ring"},
      {GlyphShape::kChevron, {240, 140, 30}, "chevron"},
      {GlyphShape::kChecker, {150, 60, 240}, "checker"},
  };
  SD_CHECK(index >= 0, "glyph index must be non-negative");
  return kStyles[index % kNumGlyphStyles];
}

GlyphJitter sample_glyph_jitter(Rng& rng) {
  GlyphJitter j;
  for (int c = 0; c < 3; ++c) j.color_delta[c] = rng.uniform_range(-18, 18);
  j.scale = rng.uniform(0.75, 0.95);
  j.dx_frac = rng.uniform(-0.06, 0.06);
  j.dy_frac = rng.uniform(-0.06, 0.06);
  return j;
}

namespace {

constexpr int kBgBase = 36;

uint8_t clamp_u8(int v) {
  return static_cast<uint8_t>(std::clamp(v, 0, 255));
}

void speckle_pixel(Image& img, int x, int y, int base, Rng& rng) {
  const int n = rng.uniform_range(-6, 6);
  img.at(x, y, 0) = clamp_u8(base + n);
  img.at(x, y, 1) = clamp_u8(base + n);
  img.at(x, y, 2) = clamp_u8(base + 2 + n);
}

// Membership test for each shape on unit coordinates u, v in [-1, 1].
bool inside_shape(GlyphShape shape, double u, double v) {
  switch (shape) {
    case GlyphShape::kSquare:
      return true;
    case GlyphShape::kDisc:
      return u * u + v * v <= 1.0;
    case GlyphShape::kTriangle:
      // apex up: y from -1 (top) to +1 (bottom)
      return std::abs(u) <= (v + 1.0) * 0.5;
    case GlyphShape::kDiamond:
      return std::abs(u) + std::abs(v) <= 1.0;
    case GlyphShape::kCross:
      return std::abs(u) <= 0.34 || std::abs(v) <= 0.34;
    case GlyphShape::kRing: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.36;
    }
    case GlyphShape::kChevron:
      return std::abs(v - 0.55 * (std::abs(u) - 0.5)) <= 0.38;
    case GlyphShape::kChecker: {
      const int cu = static_cast<int>(std::floor((u + 1.0) * 2.0));
      const int cv = static_cast<int>(std::floor((v + 1.0) * 2.0));
      return ((cu + cv) & 1) == 0;
    }
  }
  return false;
}

}  // namespace

void render_background(Image& img, Rng& rng) {
  const int base = kBgBase + rng.uniform_range(-8, 8);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) speckle_pixel(img, x, y, base, rng);
}

void render_background_patch(Image& img, const Box& region, Rng& rng) {
  const Box r = clip_box(region, img.width, img.height);
  const int base = kBgBase + rng.uniform_range(-8, 8);
  const int x0 = static_cast<int>(std::floor(r.x));
  const int y0 = static_cast<int>(std::floor(r.y));
  const int x1 = static_cast<int>(std::ceil(r.right()));
  const int y1 = static_cast<int>(std::ceil(r.bottom()));
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) speckle_pixel(img, x, y, base, rng);
}

void render_glyph(Image& img, const Box& box, const GlyphStyle& style,
                  const GlyphJitter& jitter) {
  SD_CHECK(box.w >= kMinGlyphSide && box.h >= kMinGlyphSide,
           "box too small to render glyph: " << box.w << "x" << box.h
                                             << " (min " << kMinGlyphSide
                                             << ")");
  const double gw = box.w * jitter.scale;
  const double gh = box.h * jitter.scale;
  const double cx = box.cx() + jitter.dx_frac * box.w;
  const double cy = box.cy() + jitter.dy_frac * box.h;
  std::array<uint8_t, 3> col;
  for (int c = 0; c < 3; ++c)
    col[c] = clamp_u8(static_cast<int>(style.color[c]) + jitter.color_delta[c]);

  const int x0 = std::max(0, static_cast<int>(std::floor(cx - gw / 2)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - gh / 2)));
  const int x1 = std::min(img.width, static_cast<int>(std::ceil(cx + gw / 2)));
  const int y1 = std::min(img.height, static_cast<int>(std::ceil(cy + gh / 2)));
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double u = (x + 0.5 - cx) / (gw / 2);
      const double v = (y + 0.5 - cy) / (gh / 2);
      if (std::abs(u) > 1.0 || std::abs(v) > 1.0) continue;
      if (!inside_shape(style.shape, u, v)) continue;
      img.at(x, y, 0) = col[0];
      img.at(x, y, 1) = col[1];
      img.at(x, y, 2) = col[2];
    }
  }
}

}  // namespace synthdet
