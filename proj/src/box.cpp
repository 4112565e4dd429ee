// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#include "synthdet/box.hpp"

#include "synthdet/check.hpp"

namespace synthdet {

double intersection_area(const Box& a, const Box& b) {
  const double ix = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double iy = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  return ix * iy;
}

double iou(const Box& a, const Box& b) {
  SD_CHECK(a.area() > 0.0 && b.area() > 0.0,
           "iou requires positive-area boxes, got areas " << a.area() << " and "
                                                          << b.area());
  const double inter = intersection_area(a, b);
  return inter / (a.area() + b.area() - inter);
}

Box clip_box(const Box& b, double img_w, double img_h) {
  const double x0 = std::clamp(b.x, 0.0, img_w);
  const double y0 = std::clamp(b.y, 0.0, img_h);
  const double x1 = std::clamp(b.right(), 0.0, img_w);
  const double y1 = std::clamp(b.bottom(), 0.0, img_h);
  return Box{x0, y0, x1 - x0, y1 - y0};
}

}  // namespace synthdet
