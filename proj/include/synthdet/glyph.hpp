// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "synthdet/box.hpp"
#include "synthdet/image.hpp"
#include "synthdet/rng.hpp"

namespace synthdet {

enum class GlyphShape {
  kSquare,
  kDisc,
  kTriangle,
  kDiamond,
  kCross,
  kRing,
  kChevron,
  kChecker,
};

// One distinctive (shape, hue) pair per category so a small detector can
// learn to recognize instances.
struct GlyphStyle {
  GlyphShape shape = GlyphShape::kSquare;
  std::array<uint8_t, 3> color = {255, 0, 0};
  std::string name;  // canonical category name for this style
};

// Deterministic mapping from category index to glyph style; cycles after
// kNumGlyphStyles entries.
inline constexpr int kNumGlyphStyles = 8;
GlyphStyle glyph_style(int index);

// Appearance jitter applied per rendered instance: small color shift, scale
// in [0.75, 0.95] of the box, and a center offset. Mirrors the instance
// variability a generative model produces for the same layout.
struct GlyphJitter {
  std::array<int, 3> color_delta = {0, 0, 0};
  double scale = 0.85;
  double dx_frac = 0.0;
  double dy_frac = 0.0;
};

GlyphJitter sample_glyph_jitter(Rng& rng);

// Fills the image with a flat dark background plus light per-pixel speckle.
void render_background(Image& img, Rng& rng);

// Fills only `region` with background (used when inpainting erases a box).
void render_background_patch(Image& img, const Box& region, Rng& rng);

inline constexpr int kMinGlyphSide = 4;  // boxes smaller than this reject

// Draws the glyph inside `box` with the given jitter. Throws if the box is
// smaller than kMinGlyphSide in either dimension.
void render_glyph(Image& img, const Box& box, const GlyphStyle& style,
                  const GlyphJitter& jitter);

}  // namespace synthdet
