// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>

namespace synthdet {

// Axis-aligned box in pixels, top-left origin, stored as (x, y, w, h)
// floats matching the COCO bbox convention.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }

  bool operator==(const Box& o) const = default;
};

double intersection_area(const Box& a, const Box& b);

// Intersection over union. Throws on a box with non-positive area.
double iou(const Box& a, const Box& b);

// Clips the box to [0, img_w] x [0, img_h]; may produce a zero-area box.
Box clip_box(const Box& b, double img_w, double img_h);

}  // namespace synthdet
