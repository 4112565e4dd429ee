// Copyright 2026 The synthdet Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0
#include "synthdet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "synthdet/check.hpp"
#include "synthdet/json_io.hpp"

namespace synthdet {
namespace {

using nlohmann::json;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) - t * z, in the overflow-safe form.
double bce_with_logits(double z, double t) {
  return std::max(z, 0.0) - t * z + std::log1p(std::exp(-std::abs(z)));
}

double logsumexp(const std::vector<double>& z) {
  double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

void softmax(const std::vector<double>& z, std::vector<double>* out) {
  double m = *std::max_element(z.begin(), z.end());
  out->resize(z.size());
  double s = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    (*out)[i] = std::exp(z[i] - m);
    s += (*out)[i];
  }
  for (double& v : *out) v /= s;
}

double dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Mean over the half-open pixel rect [x0, x1) x [y0, y1).
double rect_mean(const std::vector<double>& sat, int stride, int x0, int y0,
                 int x1, int y1) {
  double sum = sat[y1 * stride + x1] - sat[y0 * stride + x1] -
               sat[y1 * stride + x0] + sat[y0 * stride + x0];
  return sum / (static_cast<double>(x1 - x0) * (y1 - y0));
}

constexpr double kMaxLogDelta = 4.0;  // caps exp() when decoding boxes

}  // namespace

// ---------------------------------------------------------------------------
// Anchors and matching

AnchorGrid build_anchors(int image_width, int image_height,
                         const AnchorConfig& cfg) {
  SD_CHECK(cfg.stride > 0, "anchor stride must be positive: " << cfg.stride);
  SD_CHECK(!cfg.scales.empty(), "anchor scales are empty");
  for (double s : cfg.scales) {
    SD_CHECK(s > 0.0, "anchor scale must be positive: " << s);
  }
  SD_CHECK(image_width >= cfg.stride && image_height >= cfg.stride,
           "image " << image_width << "x" << image_height
                    << " smaller than one anchor cell");
  AnchorGrid grid;
  grid.image_width = image_width;
  grid.image_height = image_height;
  grid.cells_x = image_width / cfg.stride;
  grid.cells_y = image_height / cfg.stride;
  grid.anchors.reserve(static_cast<size_t>(grid.cells_x) * grid.cells_y *
                       cfg.scales.size());
  for (int gy = 0; gy < grid.cells_y; ++gy) {
    for (int gx = 0; gx < grid.cells_x; ++gx) {
      double cx = (gx + 0.5) * cfg.stride;
      double cy = (gy + 0.5) * cfg.stride;
      for (double s : cfg.scales) {
        Box b{cx - s / 2.0, cy - s / 2.0, s, s};
        grid.anchors.push_back(clip_box(b, image_width, image_height));
      }
    }
  }
  return grid;
}

std::vector<MatchLabel> match_anchors(const AnchorGrid& grid,
                                      const std::vector<GtBox>& gt,
                                      const std::vector<Box>& filtered_boxes) {
  std::vector<MatchLabel> labels(grid.anchors.size());
  for (size_t i = 0; i < grid.anchors.size(); ++i) {
    const Box& a = grid.anchors[i];
    double best = 0.0;
    int best_gt = -1;
    for (size_t g = 0; g < gt.size(); ++g) {
      double v = iou(a, gt[g].box);
      if (v > best) {
        best = v;
        best_gt = static_cast<int>(g);
      }
    }
    MatchLabel& m = labels[i];
    if (best >= kPositiveIou) {
      m.kind = MatchKind::kPositive;
      m.gt_index = best_gt;
    } else if (best < kBackgroundIou) {
      m.kind = MatchKind::kBackground;
    } else {
      m.kind = MatchKind::kIouIgnore;
    }
    // A region that held a removed annotation is neither a negative nor a
    // positive; it may still contain the (unsupported) rendered object.
    for (const Box& fb : filtered_boxes) {
      if (iou(a, fb) >= kPositiveIou) {
        m.kind = MatchKind::kIouIgnore;
        m.gt_index = -1;
        break;
      }
    }
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Featurizer

ImageFeatures compute_image_features(const Image& img) {
  SD_CHECK(img.width > 0 && img.height > 0, "empty image");
  const int w = img.width;
  const int h = img.height;
  const int stride = w + 1;
  ImageFeatures f;
  f.width = w;
  f.height = h;
  f.sat_r.assign(static_cast<size_t>(stride) * (h + 1), 0.0);
  f.sat_g = f.sat_r;
  f.sat_b = f.sat_r;
  f.sat_e = f.sat_r;

  std::vector<double> gray(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      gray[y * w + x] =
          (img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2)) / 3.0;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double g = gray[y * w + x];
      double ex = x + 1 < w ? std::abs(gray[y * w + x + 1] - g) : 0.0;
      double ey = y + 1 < h ? std::abs(gray[(y + 1) * w + x] - g) : 0.0;
      double edge = (ex + ey) / 510.0;
      size_t i = static_cast<size_t>(y + 1) * stride + (x + 1);
      size_t up = i - stride;
      f.sat_r[i] = img.at(x, y, 0) / 255.0 + f.sat_r[up] + f.sat_r[i - 1] -
                   f.sat_r[up - 1];
      f.sat_g[i] = img.at(x, y, 1) / 255.0 + f.sat_g[up] + f.sat_g[i - 1] -
                   f.sat_g[up - 1];
      f.sat_b[i] = img.at(x, y, 2) / 255.0 + f.sat_b[up] + f.sat_b[i - 1] -
                   f.sat_b[up - 1];
      f.sat_e[i] = edge + f.sat_e[up] + f.sat_e[i - 1] - f.sat_e[up - 1];
    }
  }
  return f;
}

void window_features(const ImageFeatures& f, const Box& window,
                     double out[kFeatureDim]) {
  const int stride = f.width + 1;
  int x0 = std::clamp(static_cast<int>(std::floor(window.x)), 0, f.width - 1);
  int y0 = std::clamp(static_cast<int>(std::floor(window.y)), 0, f.height - 1);
  int x1 = std::clamp(static_cast<int>(std::ceil(window.right())), x0 + 1,
                      f.width);
  int y1 = std::clamp(static_cast<int>(std::ceil(window.bottom())), y0 + 1,
                      f.height);

  auto fill = [&](int ax0, int ay0, int ax1, int ay1, double* dst) {
    dst[0] = rect_mean(f.sat_r, stride, ax0, ay0, ax1, ay1);
    dst[1] = rect_mean(f.sat_g, stride, ax0, ay0, ax1, ay1);
    dst[2] = rect_mean(f.sat_b, stride, ax0, ay0, ax1, ay1);
    dst[3] = rect_mean(f.sat_e, stride, ax0, ay0, ax1, ay1);
  };
  fill(x0, y0, x1, y1, out);

  int xm = x0 + (x1 - x0) / 2;
  int ym = y0 + (y1 - y0) / 2;
  const int qx[4][2] = {{x0, xm}, {xm, x1}, {x0, xm}, {xm, x1}};
  const int qy[4][2] = {{y0, ym}, {y0, ym}, {ym, y1}, {ym, y1}};
  for (int q = 0; q < 4; ++q) {
    double* dst = out + 4 + 4 * q;
    if (qx[q][1] <= qx[q][0] || qy[q][1] <= qy[q][0]) {
      // Degenerate quadrant of a 1-pixel-wide window: fall back to the
      // whole-window statistics.
      std::copy(out, out + 4, dst);
    } else {
      fill(qx[q][0], qy[q][0], qx[q][1], qy[q][1], dst);
    }
  }
  out[kFeatureDim - 1] = 1.0;  // bias
}

std::vector<double> anchor_features(const ImageFeatures& f,
                                    const AnchorGrid& grid) {
  SD_CHECK(f.width == grid.image_width && f.height == grid.image_height,
           "feature map " << f.width << "x" << f.height
                          << " does not match grid " << grid.image_width << "x"
                          << grid.image_height);
  std::vector<double> feats(grid.anchors.size() * kFeatureDim);
  for (size_t i = 0; i < grid.anchors.size(); ++i) {
    window_features(f, grid.anchors[i], &feats[i * kFeatureDim]);
  }
  return feats;
}

// ---------------------------------------------------------------------------
// Linear heads

DetectorParams DetectorParams::zeros(int num_classes) {
  SD_CHECK(num_classes >= 1, "num_classes must be >= 1: " << num_classes);
  DetectorParams p;
  p.num_classes = num_classes;
  p.w_obj.assign(kFeatureDim, 0.0);
  p.w_cls.assign(static_cast<size_t>(num_classes + 1) * kFeatureDim, 0.0);
  p.w_box.assign(4 * kFeatureDim, 0.0);
  p.w_mask.assign(kFeatureDim, 0.0);
  return p;
}

HeadOutputs forward_anchor(const DetectorParams& p, const double* feat) {
  SD_CHECK(p.w_obj.size() == kFeatureDim &&
               p.w_cls.size() ==
                   static_cast<size_t>(p.num_classes + 1) * kFeatureDim &&
               p.w_box.size() == 4 * kFeatureDim &&
               p.w_mask.size() == kFeatureDim,
           "parameter shapes do not match " << p.num_classes << " classes");
  HeadOutputs o;
  o.obj_logit = dot(p.w_obj.data(), feat, kFeatureDim);
  o.cls_logits.resize(p.num_classes + 1);
  for (int j = 0; j <= p.num_classes; ++j) {
    o.cls_logits[j] = dot(&p.w_cls[j * kFeatureDim], feat, kFeatureDim);
  }
  for (int r = 0; r < 4; ++r) {
    o.box_deltas[r] = dot(&p.w_box[r * kFeatureDim], feat, kFeatureDim);
  }
  o.mask_logit = dot(p.w_mask.data(), feat, kFeatureDim);
  return o;
}

std::vector<HeadOutputs> forward_all(const DetectorParams& p,
                                     const std::vector<double>& feats) {
  SD_CHECK(feats.size() % kFeatureDim == 0, "feature buffer size not a "
                                            "multiple of the feature dim");
  size_t n = feats.size() / kFeatureDim;
  std::vector<HeadOutputs> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    out.push_back(forward_anchor(p, &feats[i * kFeatureDim]));
  }
  return out;
}

std::array<double, 4> encode_box_delta(const Box& anchor, const Box& gt) {
  SD_CHECK(anchor.w > 0 && anchor.h > 0 && gt.w > 0 && gt.h > 0,
           "degenerate box in delta encoding");
  return {(gt.cx() - anchor.cx()) / anchor.w, (gt.cy() - anchor.cy()) / anchor.h,
          std::log(gt.w / anchor.w), std::log(gt.h / anchor.h)};
}

Box decode_box_delta(const Box& anchor, const std::array<double, 4>& d) {
  double cx = anchor.cx() + d[0] * anchor.w;
  double cy = anchor.cy() + d[1] * anchor.h;
  double w = anchor.w * std::exp(std::clamp(d[2], -kMaxLogDelta, kMaxLogDelta));
  double h = anchor.h * std::exp(std::clamp(d[3], -kMaxLogDelta, kMaxLogDelta));
  return Box{cx - w / 2.0, cy - h / 2.0, w, h};
}

// ---------------------------------------------------------------------------
// Loss assembly

LossBreakdown assemble_loss(const AnchorGrid& grid,
                            const std::vector<HeadOutputs>& outputs,
                            const std::vector<MatchLabel>& matches,
                            const std::vector<GtBox>& gt, Source source,
                            const TrainingConfig& cfg,
                            std::vector<OutputGrads>* output_grads) {
  const size_t n = grid.anchors.size();
  SD_CHECK(outputs.size() == n && matches.size() == n,
           "outputs/matches size does not match anchor count " << n);
  SD_CHECK(cfg.tau_i >= 0.0 && cfg.tau_i <= 1.0,
           "tau_i out of [0, 1]: " << cfg.tau_i);
  const int num_cls_out = outputs.empty() ? 0
                                          : static_cast<int>(
                                                outputs[0].cls_logits.size());

  LossBreakdown lb;
  lb.excluded_objectness.assign(n, 0);
  lb.excluded_head.assign(n, 0);
  lb.per_anchor_excluded.assign(n, 0);
  if (output_grads) {
    output_grads->assign(n, OutputGrads{});
    for (auto& g : *output_grads) g.d_cls.assign(num_cls_out, 0.0);
  }

  const bool ignore_active = source == Source::kSynthetic && cfg.use_bg_ignore;
  const bool mask_active =
      source == Source::kReal || cfg.apply_mask_loss_on_synthetic;

  // First pass: counts and exclusion decisions (they set the normalizers).
  for (size_t i = 0; i < n; ++i) {
    switch (matches[i].kind) {
      case MatchKind::kIouIgnore:
        ++lb.num_iou_ignore;
        break;
      case MatchKind::kPositive:
        ++lb.num_positives;
        break;
      case MatchKind::kBackground: {
        ++lb.num_background;
        if (ignore_active) {
          if (sigmoid(outputs[i].obj_logit) > cfg.tau_i) {
            lb.excluded_objectness[i] = 1;
            ++lb.num_excluded_objectness;
          }
          std::vector<double> probs;
          softmax(outputs[i].cls_logits, &probs);
          if (1.0 - probs[0] > cfg.tau_i) {
            lb.excluded_head[i] = 1;
            ++lb.num_excluded_head;
          }
          lb.per_anchor_excluded[i] =
              lb.excluded_objectness[i] | lb.excluded_head[i];
        }
        break;
      }
    }
  }

  const int n_obj =
      lb.num_positives + lb.num_background - lb.num_excluded_objectness;
  const double obj_norm = n_obj > 0 ? 1.0 / n_obj : 0.0;
  const double pos_norm =
      lb.num_positives > 0 ? 1.0 / lb.num_positives : 0.0;

  for (size_t i = 0; i < n; ++i) {
    const MatchLabel& m = matches[i];
    if (m.kind == MatchKind::kIouIgnore) continue;
    const HeadOutputs& o = outputs[i];
    OutputGrads* g = output_grads ? &(*output_grads)[i] : nullptr;

    if (m.kind == MatchKind::kPositive) {
      SD_CHECK(m.gt_index >= 0 && m.gt_index < static_cast<int>(gt.size()),
               "positive match with bad gt index " << m.gt_index);
      const GtBox& t = gt[m.gt_index];
      SD_CHECK(t.class_index >= 0 && t.class_index + 1 < num_cls_out,
               "class index " << t.class_index << " out of range");

      lb.objectness_loss += obj_norm * bce_with_logits(o.obj_logit, 1.0);
      if (g) g->d_obj += obj_norm * (sigmoid(o.obj_logit) - 1.0);

      const int target = t.class_index + 1;
      std::vector<double> probs;
      softmax(o.cls_logits, &probs);
      lb.classification_loss +=
          pos_norm * (logsumexp(o.cls_logits) - o.cls_logits[target]);
      if (g) {
        for (int j = 0; j < num_cls_out; ++j) {
          g->d_cls[j] += pos_norm * (probs[j] - (j == target ? 1.0 : 0.0));
        }
      }

      const std::array<double, 4> tgt = encode_box_delta(grid.anchors[i], t.box);
      for (int r = 0; r < 4; ++r) {
        double diff = o.box_deltas[r] - tgt[r];
        lb.box_regression_loss += pos_norm * 0.5 * diff * diff;
        if (g) g->d_box[r] += pos_norm * diff;
      }

      if (mask_active) {
        lb.mask_loss += pos_norm * bce_with_logits(o.mask_logit, 1.0);
        if (g) g->d_mask += pos_norm * (sigmoid(o.mask_logit) - 1.0);
      }
    } else {  // background
      if (!lb.excluded_objectness[i]) {
        lb.objectness_loss += obj_norm * bce_with_logits(o.obj_logit, 0.0);
        if (g) g->d_obj += obj_norm * sigmoid(o.obj_logit);
      }
      if (!lb.excluded_head[i] && lb.num_positives > 0) {
        std::vector<double> probs;
        softmax(o.cls_logits, &probs);
        lb.classification_loss +=
            pos_norm * (logsumexp(o.cls_logits) - o.cls_logits[0]);
        if (g) {
          for (int j = 0; j < num_cls_out; ++j) {
            g->d_cls[j] += pos_norm * (probs[j] - (j == 0 ? 1.0 : 0.0));
          }
        }
      }
    }
  }
  return lb;
}

ParamGrads ParamGrads::zeros(int num_classes) {
  ParamGrads g;
  g.w_obj.assign(kFeatureDim, 0.0);
  g.w_cls.assign(static_cast<size_t>(num_classes + 1) * kFeatureDim, 0.0);
  g.w_box.assign(4 * kFeatureDim, 0.0);
  g.w_mask.assign(kFeatureDim, 0.0);
  return g;
}

void ParamGrads::scale(double s) {
  for (double& v : w_obj) v *= s;
  for (double& v : w_cls) v *= s;
  for (double& v : w_box) v *= s;
  for (double& v : w_mask) v *= s;
}

void accumulate_param_grads(const std::vector<double>& feats,
                            const std::vector<OutputGrads>& output_grads,
                            ParamGrads* grads) {
  SD_CHECK(grads != nullptr, "null gradient accumulator");
  SD_CHECK(feats.size() == output_grads.size() * kFeatureDim,
           "feature buffer does not match output gradient count");
  const int num_cls_out = static_cast<int>(grads->w_cls.size() / kFeatureDim);
  for (size_t i = 0; i < output_grads.size(); ++i) {
    const OutputGrads& og = output_grads[i];
    const double* f = &feats[i * kFeatureDim];
    if (og.d_obj != 0.0) {
      for (int k = 0; k < kFeatureDim; ++k) grads->w_obj[k] += og.d_obj * f[k];
    }
    if (!og.d_cls.empty()) {
      SD_CHECK(static_cast<int>(og.d_cls.size()) == num_cls_out,
               "class gradient width mismatch");
      for (int j = 0; j < num_cls_out; ++j) {
        if (og.d_cls[j] == 0.0) continue;
        double* row = &grads->w_cls[static_cast<size_t>(j) * kFeatureDim];
        for (int k = 0; k < kFeatureDim; ++k) row[k] += og.d_cls[j] * f[k];
      }
    }
    for (int r = 0; r < 4; ++r) {
      if (og.d_box[r] == 0.0) continue;
      double* row = &grads->w_box[r * kFeatureDim];
      for (int k = 0; k < kFeatureDim; ++k) row[k] += og.d_box[r] * f[k];
    }
    if (og.d_mask != 0.0) {
      for (int k = 0; k < kFeatureDim; ++k) {
        grads->w_mask[k] += og.d_mask * f[k];
      }
    }
  }
}

void apply_sgd(DetectorParams* params, const ParamGrads& grads, double lr) {
  SD_CHECK(params != nullptr, "null params");
  SD_CHECK(params->w_obj.size() == grads.w_obj.size() &&
               params->w_cls.size() == grads.w_cls.size() &&
               params->w_box.size() == grads.w_box.size() &&
               params->w_mask.size() == grads.w_mask.size(),
           "gradient shapes do not match parameters");
  for (size_t i = 0; i < params->w_obj.size(); ++i)
    params->w_obj[i] -= lr * grads.w_obj[i];
  for (size_t i = 0; i < params->w_cls.size(); ++i)
    params->w_cls[i] -= lr * grads.w_cls[i];
  for (size_t i = 0; i < params->w_box.size(); ++i)
    params->w_box[i] -= lr * grads.w_box[i];
  for (size_t i = 0; i < params->w_mask.size(); ++i)
    params->w_mask[i] -= lr * grads.w_mask[i];
}

// ---------------------------------------------------------------------------
// Training

ImageTargets collect_targets(
    const Dataset& d, int64_t image_id,
    const std::unordered_map<int32_t, int>& cat_index) {
  ImageTargets t;
  for (const auto& ann : d.annotations) {
    if (ann.image_id != image_id) continue;
    if (ann.filtered_out) {
      t.filtered.push_back(ann.bbox);
      continue;
    }
    auto it = cat_index.find(ann.category_id);
    SD_CHECK(it != cat_index.end(), "annotation " << ann.id
                                                  << ": category "
                                                  << ann.category_id
                                                  << " has no class slot");
    t.gt.push_back({ann.bbox, it->second});
  }
  return t;
}

PreparedImage prepare_image(const Image& pixels, const ImageTargets& targets,
                            Source source, const AnchorGrid& grid) {
  SD_CHECK(pixels.width == grid.image_width &&
               pixels.height == grid.image_height,
           "pixels " << pixels.width << "x" << pixels.height
                     << " do not match grid " << grid.image_width << "x"
                     << grid.image_height);
  PreparedImage p;
  p.grid = &grid;
  p.feats = anchor_features(compute_image_features(pixels), grid);
  p.matches = match_anchors(grid, targets.gt, targets.filtered);
  p.gt = targets.gt;
  p.source = source;
  return p;
}

LossBreakdown image_loss(const DetectorParams& params,
                         const PreparedImage& img, const TrainingConfig& cfg,
                         ParamGrads* param_grads,
                         std::vector<OutputGrads>* output_grads) {
  std::vector<HeadOutputs> outputs = forward_all(params, img.feats);
  std::vector<OutputGrads> local;
  std::vector<OutputGrads>* og =
      output_grads ? output_grads : (param_grads ? &local : nullptr);
  LossBreakdown lb = assemble_loss(*img.grid, outputs, img.matches, img.gt,
                                   img.source, cfg, og);
  if (param_grads && og) accumulate_param_grads(img.feats, *og, param_grads);
  return lb;
}

ImageProvider file_image_provider(std::filesystem::path real_root,
                                  std::filesystem::path synth_root) {
  return [real_root = std::move(real_root),
          synth_root = std::move(synth_root)](const ImageRecord& rec) {
    const auto& root = rec.source == Source::kReal ? real_root : synth_root;
    return load_ppm(root / rec.file_name);
  };
}

uint64_t training_config_hash(const TrainingConfig& cfg) {
  return fnv1a64(json(cfg).dump());
}

namespace {

struct PreparedPool {
  std::unordered_map<int64_t, PreparedImage> by_id;
  std::map<std::pair<int, int>, std::unique_ptr<AnchorGrid>> grids;
  std::vector<int64_t> real_ids, synth_ids;
};

void prepare_dataset(const Dataset& d, const ImageProvider& provider,
                     const std::unordered_map<int32_t, int>& cat_index,
                     const AnchorConfig& anchors, PreparedPool* pool) {
  auto by_image = d.annotations_by_image();
  for (const auto& rec : d.images) {
    SD_CHECK(!pool->by_id.count(rec.id),
             "image id " << rec.id << " appears in both training pools");
    Image px = provider(rec);
    SD_CHECK(px.width == rec.width && px.height == rec.height,
             "image " << rec.id << ": provider returned " << px.width << "x"
                      << px.height << ", record says " << rec.width << "x"
                      << rec.height);
    auto key = std::make_pair(rec.width, rec.height);
    auto it = pool->grids.find(key);
    if (it == pool->grids.end()) {
      it = pool->grids
               .emplace(key, std::make_unique<AnchorGrid>(
                                 build_anchors(rec.width, rec.height, anchors)))
               .first;
    }
    ImageTargets targets = collect_targets(d, rec.id, cat_index);
    pool->by_id.emplace(
        rec.id, prepare_image(px, targets, rec.source, *it->second));
    (rec.source == Source::kReal ? pool->real_ids : pool->synth_ids)
        .push_back(rec.id);
  }
}

std::vector<int32_t> class_slots(const Dataset& real, const Dataset& synth) {
  const std::vector<Category>* cats = nullptr;
  if (!real.images.empty()) {
    cats = &real.categories;
  } else if (!synth.images.empty()) {
    cats = &synth.categories;
  }
  SD_CHECK(cats != nullptr, "both training pools are empty");
  SD_CHECK(!cats->empty(), "dataset has no categories");
  std::set<int32_t> ids;
  for (const auto& c : *cats) ids.insert(c.id);
  if (!real.images.empty() && !synth.images.empty()) {
    std::set<int32_t> sids;
    for (const auto& c : synth.categories) sids.insert(c.id);
    SD_CHECK(ids == sids, "real and synthetic category sets differ");
  }
  return {ids.begin(), ids.end()};
}

}  // namespace

TrainState train(const Dataset& real, const Dataset& synth,
                 const TrainingConfig& cfg, const ImageProvider& provider,
                 BatchMode mode, const TelemetrySink& sink) {
  SD_CHECK(std::isfinite(cfg.learning_rate) && cfg.learning_rate > 0.0,
           "learning_rate must be positive: " << cfg.learning_rate);
  SD_CHECK(cfg.iterations >= 0, "iterations must be >= 0: " << cfg.iterations);
  SD_CHECK(cfg.tau_i >= 0.0 && cfg.tau_i <= 1.0,
           "tau_i out of [0, 1]: " << cfg.tau_i);

  std::vector<int32_t> category_ids = class_slots(real, synth);
  std::unordered_map<int32_t, int> cat_index;
  for (size_t i = 0; i < category_ids.size(); ++i) {
    cat_index[category_ids[i]] = static_cast<int>(i);
  }

  PreparedPool pool;
  prepare_dataset(real, provider, cat_index, cfg.anchors, &pool);
  prepare_dataset(synth, provider, cat_index, cfg.anchors, &pool);

  TrainState st;
  st.params = DetectorParams::zeros(static_cast<int>(category_ids.size()));
  st.config = cfg;
  st.category_ids = category_ids;
  st.config_hash = training_config_hash(cfg);

  std::optional<BatchSampler> sampler;
  std::optional<EpochCursor> merged;
  if (mode == BatchMode::kSampled) {
    sampler.emplace(pool.real_ids, pool.synth_ids, cfg.sampler);
  } else {
    std::vector<int64_t> ids = pool.real_ids;
    ids.insert(ids.end(), pool.synth_ids.begin(), pool.synth_ids.end());
    SD_CHECK(!ids.empty(), "both training pools are empty");
    merged.emplace(std::move(ids),
                   mix_seed({cfg.sampler.seed, kRealStreamTag}));
  }

  const int batch_size = cfg.sampler.batch_size;
  for (int step = 0; step < cfg.iterations; ++step) {
    std::vector<int64_t> ids;
    std::string source_label;
    if (sampler) {
      Batch b = sampler->next_batch();
      ids = std::move(b.examples);
      source_label = to_string(b.source);
    } else {
      ids.reserve(batch_size);
      for (int i = 0; i < batch_size; ++i) ids.push_back(merged->next());
      source_label = "mixed";
    }

    ParamGrads grads =
        ParamGrads::zeros(static_cast<int>(category_ids.size()));
    StepTelemetry tel;
    tel.step = step;
    tel.source = source_label;
    std::vector<OutputGrads> og;
    for (int64_t id : ids) {
      const PreparedImage& pi = pool.by_id.at(id);
      LossBreakdown lb = image_loss(st.params, pi, cfg, &grads, &og);
      tel.objectness_loss += lb.objectness_loss;
      tel.classification_loss += lb.classification_loss;
      tel.box_regression_loss += lb.box_regression_loss;
      tel.mask_loss += lb.mask_loss;
      tel.ignored_anchor_count += lb.num_iou_ignore;
      for (uint8_t e : lb.per_anchor_excluded) tel.ignored_anchor_count += e;
    }
    const double inv_b = 1.0 / ids.size();
    grads.scale(inv_b);
    tel.objectness_loss *= inv_b;
    tel.classification_loss *= inv_b;
    tel.box_regression_loss *= inv_b;
    tel.mask_loss *= inv_b;
    tel.total_loss = tel.objectness_loss + tel.classification_loss +
                     tel.box_regression_loss + tel.mask_loss;
    SD_CHECK(std::isfinite(tel.total_loss),
             "training diverged at step " << step << ": loss "
                                          << tel.total_loss);
    apply_sgd(&st.params, grads, cfg.learning_rate);
    if (sink) sink(tel);
  }

  st.sampler_state = sampler ? sampler->save_state() : merged->save_state();
  st.steps_completed = cfg.iterations;
  return st;
}

// ---------------------------------------------------------------------------
// Prediction

std::vector<Detection> predict(const TrainState& state, const Image& pixels,
                               int64_t image_id, double nms_iou,
                               double score_floor) {
  SD_CHECK(nms_iou >= 0.0 && nms_iou <= 1.0, "nms_iou out of [0, 1]");
  AnchorGrid grid =
      build_anchors(pixels.width, pixels.height, state.config.anchors);
  std::vector<double> feats =
      anchor_features(compute_image_features(pixels), grid);
  std::vector<HeadOutputs> outputs = forward_all(state.params, feats);

  struct Candidate {
    double score;
    int class_slot;  // 1-based head slot
    Box box;
    size_t anchor;
  };
  std::vector<Candidate> cands;
  for (size_t i = 0; i < outputs.size(); ++i) {
    const HeadOutputs& o = outputs[i];
    std::vector<double> probs;
    softmax(o.cls_logits, &probs);
    int best = 1;
    for (int j = 2; j < static_cast<int>(probs.size()); ++j) {
      if (probs[j] > probs[best]) best = j;
    }
    double p_obj = 1.0 / (1.0 + std::exp(-o.obj_logit));
    double score = p_obj * probs[best];
    if (score < score_floor) continue;
    Box b = clip_box(decode_box_delta(grid.anchors[i], o.box_deltas),
                     pixels.width, pixels.height);
    if (b.w <= 0.0 || b.h <= 0.0) continue;
    cands.push_back({score, best, b, i});
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a,
                                           const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.anchor != b.anchor) return a.anchor < b.anchor;
    return a.class_slot < b.class_slot;
  });

  std::vector<Detection> kept;
  std::vector<const Candidate*> kept_cands;
  for (const Candidate& c : cands) {
    bool suppressed = false;
    for (const Candidate* k : kept_cands) {
      if (k->class_slot == c.class_slot && iou(k->box, c.box) > nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (suppressed) continue;
    kept_cands.push_back(&c);
    kept.push_back({image_id, state.category_ids[c.class_slot - 1], c.box,
                    c.score});
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Serialization

void save_telemetry(const std::vector<StepTelemetry>& steps,
                    const std::filesystem::path& path) {
  std::ofstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string() << " for writing");
  for (const auto& t : steps) {
    json j{{"step", t.step},
           {"source", t.source},
           {"objectness_loss", t.objectness_loss},
           {"classification_loss", t.classification_loss},
           {"box_regression_loss", t.box_regression_loss},
           {"mask_loss", t.mask_loss},
           {"total_loss", t.total_loss},
           {"ignored_anchor_count", t.ignored_anchor_count}};
    f << j.dump() << "\n";
  }
  SD_CHECK(f.good(), "failed writing " << path.string());
}

void save_train_state(const TrainState& state,
                      const std::filesystem::path& path) {
  json j{{"params",
          {{"num_classes", state.params.num_classes},
           {"w_obj", state.params.w_obj},
           {"w_cls", state.params.w_cls},
           {"w_box", state.params.w_box},
           {"w_mask", state.params.w_mask}}},
         {"config", json(state.config)},
         {"category_ids", state.category_ids},
         {"config_hash", state.config_hash},
         {"sampler_state", state.sampler_state},
         {"steps_completed", state.steps_completed}};
  std::ofstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string() << " for writing");
  f << j.dump(1) << "\n";
  SD_CHECK(f.good(), "failed writing " << path.string());
}

TrainState load_train_state(const std::filesystem::path& path) {
  std::ifstream f(path);
  SD_CHECK(f.good(), "cannot open " << path.string());
  json j = json::parse(f, nullptr, /*allow_exceptions=*/false);
  SD_CHECK(!j.is_discarded(), "malformed checkpoint: " << path.string());
  TrainState st;
  try {
    const json& p = j.at("params");
    st.params.num_classes = p.at("num_classes").get<int>();
    st.params.w_obj = p.at("w_obj").get<std::vector<double>>();
    st.params.w_cls = p.at("w_cls").get<std::vector<double>>();
    st.params.w_box = p.at("w_box").get<std::vector<double>>();
    st.params.w_mask = p.at("w_mask").get<std::vector<double>>();
    st.config = j.at("config").get<TrainingConfig>();
    st.category_ids = j.at("category_ids").get<std::vector<int32_t>>();
    st.config_hash = j.at("config_hash").get<uint64_t>();
    st.sampler_state = j.at("sampler_state").get<std::string>();
    st.steps_completed = j.at("steps_completed").get<int>();
  } catch (const json::exception& e) {
    SD_FAIL("checkpoint " << path.string() << ": " << e.what());
  }
  SD_CHECK(st.params.w_obj.size() == kFeatureDim &&
               st.params.w_cls.size() ==
                   static_cast<size_t>(st.params.num_classes + 1) *
                       kFeatureDim &&
               st.params.w_box.size() == 4 * kFeatureDim &&
               st.params.w_mask.size() == kFeatureDim,
           "checkpoint " << path.string() << ": parameter shapes corrupt");
  SD_CHECK(st.category_ids.size() ==
               static_cast<size_t>(st.params.num_classes),
           "checkpoint " << path.string() << ": category list does not match "
                         << st.params.num_classes << " classes");
  return st;
}

}  // namespace synthdet
