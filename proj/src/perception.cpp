#include "vistrack/perception.hpp"

#include <algorithm>
#include <cmath>

#include "vistrack/errors.hpp"

namespace vistrack {

void PerceptionConfig::validate() const {
  if (levels.empty()) throw ValidationError("perception.levels: must be non-empty");
  for (size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] < 3 || levels[i] > 5)
      throw ValidationError("perception.levels: only levels 3..5 are supported");
    if (i > 0 && levels[i] != levels[i - 1] + 1)
      throw ValidationError("perception.levels: must be contiguous ascending");
  }
  if (scale_breaks.size() + 1 != levels.size())
    throw ValidationError("perception.scale_breaks: need one break between adjacent levels");
  if (mask_size != 2 * roi_size)
    throw ValidationError("perception.mask_size: must equal 2 * roi_size");
  if (num_classes < 1) throw ValidationError("perception.num_classes: must be >= 1");
}

PyramidGeometry PyramidFeatures::geometry() const {
  PyramidGeometry g;
  g.levels = levels;
  g.strides = strides;
  for (const Var& v : grids) {
    g.heights.push_back(v.value().dim(1));
    g.widths.push_back(v.value().dim(2));
  }
  g.image_height = image_height;
  g.image_width = image_width;
  return g;
}

std::vector<GtBox> gt_boxes_for_frame(const GroundTruth& gt, int frame) {
  std::vector<GtBox> out;
  for (const auto& obj : gt.objects) {
    if (!obj.present[frame]) continue;
    Box b = gt.object_box(frame, obj.track_id);
    if (b[2] <= b[0] || b[3] <= b[1]) continue;
    out.push_back({obj.track_id, obj.category_id, b});
  }
  return out;
}

Perception::Perception(const PerceptionConfig& cfg, ParamSet& params, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  int c = cfg_.channels;
  int max_level = cfg_.levels.back();

  stem_.init(params, "perception/backbone/stem", 16, 3, 3, 2, 1, rng);
  stage2_.init(params, "perception/backbone/stage2", 24, 16, 3, 2, 1, rng);
  stage3_.init(params, "perception/backbone/stage3", 32, 24, 3, 2, 1, rng);
  if (max_level >= 4) stage4_.init(params, "perception/backbone/stage4", 48, 32, 3, 2, 1, rng);
  if (max_level >= 5) stage5_.init(params, "perception/backbone/stage5", 64, 48, 3, 2, 1, rng);

  const int stage_channels[3] = {32, 48, 64};  // at strides 8, 16, 32
  lateral_.resize(cfg_.levels.size());
  smooth_.resize(cfg_.levels.size());
  for (size_t i = 0; i < cfg_.levels.size(); ++i) {
    int level = cfg_.levels[i];
    lateral_[i].init(params, "perception/fpn/lateral" + std::to_string(level), c,
                     stage_channels[level - 3], 1, 1, 0, rng);
    smooth_[i].init(params, "perception/fpn/smooth" + std::to_string(level), c, c, 3, 1, 1, rng);
  }

  tower1_.init(params, "perception/head/tower1", c, c, 3, 1, 1, rng);
  tower2_.init(params, "perception/head/tower2", c, c, 3, 1, 1, rng);
  head_cls_.init(params, "perception/head/cls", cfg_.num_classes, c, 1, 1, 0, rng);
  head_box_.init(params, "perception/head/box", 4, c, 1, 1, 0, rng);
  head_ctr_.init(params, "perception/head/ctr", 1, c, 1, 1, 0, rng);
  // Focal-loss prior: start background probability near 1%.
  head_cls_.b.mutable_value().fill(-std::log(99.0));

  mask_conv1_.init(params, "perception/mask/conv1", c, c, 3, 1, 1, rng);
  mask_conv2_.init(params, "perception/mask/conv2", c, c, 3, 1, 1, rng);
  mask_attn_.init(params, "perception/mask/attn", 1, 2, 3, 1, 1, rng);
  mask_post_.init(params, "perception/mask/post", c, c, 3, 1, 1, rng);
  mask_out_.init(params, "perception/mask/out", cfg_.num_classes, c, 1, 1, 0, rng);
}

PyramidFeatures Perception::extract_pyramid(const Var& frame) const {
  const Tensor& img = frame.value();
  if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("extract_pyramid: expects [3,H,W]");
  int max_stride = 1 << cfg_.levels.back();
  if (img.dim(1) % max_stride != 0 || img.dim(2) % max_stride != 0)
    throw ShapeError("extract_pyramid: input size must be a multiple of " +
                     std::to_string(max_stride));

  int max_level = cfg_.levels.back();
  Var x = relu(stem_.forward(frame));     // /2
  x = relu(stage2_.forward(x));           // /4
  std::vector<Var> stages;                // features at strides 8/16/32
  Var c3 = relu(stage3_.forward(x));
  stages.push_back(c3);
  if (max_level >= 4) stages.push_back(relu(stage4_.forward(stages.back())));
  if (max_level >= 5) stages.push_back(relu(stage5_.forward(stages.back())));

  size_t n = cfg_.levels.size();
  std::vector<Var> merged(n);
  for (size_t i = n; i-- > 0;) {
    Var lat = lateral_[i].forward(stages[cfg_.levels[i] - 3]);
    merged[i] = (i + 1 < n) ? add(lat, upsample_nearest2(merged[i + 1])) : lat;
  }

  PyramidFeatures feats;
  feats.image_height = img.dim(1);
  feats.image_width = img.dim(2);
  for (size_t i = 0; i < n; ++i) {
    feats.levels.push_back(cfg_.levels[i]);
    feats.strides.push_back(1 << cfg_.levels[i]);
    feats.grids.push_back(smooth_[i].forward(merged[i]));
  }
  return feats;
}

DenseHeadOutput Perception::detect(const PyramidFeatures& feats) const {
  DenseHeadOutput out;
  for (size_t i = 0; i < feats.grids.size(); ++i) {
    Var t = relu(tower2_.forward(relu(tower1_.forward(feats.grids[i]))));
    out.cls.push_back(head_cls_.forward(t));
    // softplus keeps distances positive without exp overflow; scaled by stride.
    out.box.push_back(mul_scalar(softplus(head_box_.forward(t)), feats.strides[i]));
    out.ctr.push_back(head_ctr_.forward(t));
  }
  return out;
}

namespace {

struct Candidate {
  double score;
  Box box;
  int category;
  int level;
  int loc;
  int cls_idx;
};

}  // namespace

std::vector<Detection> Perception::decode_detections(const DenseHeadOutput& dense,
                                                     const PyramidGeometry& geom) const {
  std::vector<Candidate> cands;
  for (size_t li = 0; li < dense.cls.size(); ++li) {
    const Tensor& cls = dense.cls[li].value();
    const Tensor& box = dense.box[li].value();
    const Tensor& ctr = dense.ctr[li].value();
    int k = cls.dim(0), h = cls.dim(1), w = cls.dim(2);
    int stride = geom.strides[li];
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        double pc = 1.0 / (1.0 + std::exp(-ctr.at(0, r, c)));
        double x = static_cast<double>(c) * stride;
        double y = static_cast<double>(r) * stride;
        for (int ki = 0; ki < k; ++ki) {
          double p = 1.0 / (1.0 + std::exp(-cls.at(ki, r, c)));
          double score = std::sqrt(p * pc);
          if (score <= cfg_.score_threshold) continue;
          Box b = clip_box({x - box.at(0, r, c), y - box.at(1, r, c), x + box.at(2, r, c),
                            y + box.at(3, r, c)},
                           geom.image_width, geom.image_height);
          if (b[2] - b[0] <= 0 || b[3] - b[1] <= 0) continue;
          cands.push_back({score, b, ki + 1, geom.levels[li], r * w + c, ki});
        }
      }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.level != b.level) return a.level < b.level;
    if (a.loc != b.loc) return a.loc < b.loc;
    return a.cls_idx < b.cls_idx;
  });

  std::vector<Detection> kept;
  for (const Candidate& cand : cands) {
    bool suppressed = false;
    for (const Detection& d : kept) {
      if (d.category_id != cand.category) continue;
      if (box_iou(d.box, cand.box) > cfg_.nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (suppressed) continue;
    Detection det;
    det.box = cand.box;
    det.category_id = cand.category;
    det.score = cand.score;
    det.level = cand.level;
    kept.push_back(std::move(det));
    if (static_cast<int>(kept.size()) >= cfg_.max_detections) break;
  }
  return kept;
}

Var Perception::pooled_roi(const PyramidFeatures& feats, int level_index,
                           const Box& box_pixels) const {
  double s = feats.strides[level_index];
  std::array<double, 4> fbox = {box_pixels[0] / s, box_pixels[1] / s, box_pixels[2] / s,
                                box_pixels[3] / s};
  return roi_align(feats.grids[level_index], fbox, cfg_.roi_size);
}

Var Perception::attention_map(const Var& mask_tower_features) const {
  const Var& h = mask_tower_features;
  return sigmoid(mask_attn_.forward(concat_channels({channel_max(h), channel_mean(h)})));
}

Var Perception::mask_logits(const Var& roi_feature, int category_id) const {
  if (category_id < 1 || category_id > cfg_.num_classes)
    throw ValidationError("mask_logits: unknown category " + std::to_string(category_id));
  Var h = relu(mask_conv1_.forward(roi_feature));
  h = relu(mask_conv2_.forward(h));
  h = mul_chanmap(h, attention_map(h));
  h = relu(mask_post_.forward(upsample_nearest2(h)));
  Var logits = mask_out_.forward(h);
  return select_channel(logits, category_id - 1);
}

Tensor Perception::predict_mask(const Var& roi_feature, int category_id) const {
  return sigmoid(mask_logits(roi_feature, category_id)).detach();
}

int Perception::level_index_for_box(const Box& box) const {
  double key = std::max(box[2] - box[0], box[3] - box[1]) / 2.0;
  for (size_t i = 0; i < cfg_.scale_breaks.size(); ++i)
    if (key <= cfg_.scale_breaks[i]) return static_cast<int>(i);
  return static_cast<int>(cfg_.levels.size()) - 1;
}

DenseTargets assign_targets(const GroundTruth& gt, int frame, const PyramidGeometry& geom,
                            const PerceptionConfig& cfg) {
  std::vector<GtBox> boxes = gt_boxes_for_frame(gt, frame);
  DenseTargets targets;
  for (size_t li = 0; li < geom.levels.size(); ++li) {
    LevelTargets lt;
    lt.h = geom.heights[li];
    lt.w = geom.widths[li];
    lt.stride = geom.strides[li];
    lt.cls.assign(static_cast<size_t>(lt.h) * lt.w, 0);
    lt.ctr.assign(static_cast<size_t>(lt.h) * lt.w, 0.0);
    lt.ltrb = Tensor::zeros({4, lt.h, lt.w});

    double range_lo = li == 0 ? 0.0 : cfg.scale_breaks[li - 1];
    double range_hi = li < cfg.scale_breaks.size()
                          ? cfg.scale_breaks[li]
                          : std::numeric_limits<double>::infinity();

    for (int r = 0; r < lt.h; ++r)
      for (int c = 0; c < lt.w; ++c) {
        double x = static_cast<double>(c) * lt.stride;
        double y = static_cast<double>(r) * lt.stride;
        double best_area = std::numeric_limits<double>::infinity();
        const GtBox* best = nullptr;
        std::array<double, 4> best_ltrb{};
        for (const GtBox& gb : boxes) {
          double l = x - gb.box[0], t = y - gb.box[1];
          double rr = gb.box[2] - x, b = gb.box[3] - y;
          double mn = std::min(std::min(l, t), std::min(rr, b));
          if (mn <= 0.0) continue;
          double mx = std::max(std::max(l, t), std::max(rr, b));
          if (!(mx > range_lo && mx <= range_hi)) continue;
          double area = box_area(gb.box);
          if (area < best_area) {
            best_area = area;
            best = &gb;
            best_ltrb = {l, t, rr, b};
          }
        }
        if (!best) continue;
        int idx = r * lt.w + c;
        lt.cls[idx] = best->category_id;
        lt.ltrb.at(0, r, c) = best_ltrb[0];
        lt.ltrb.at(1, r, c) = best_ltrb[1];
        lt.ltrb.at(2, r, c) = best_ltrb[2];
        lt.ltrb.at(3, r, c) = best_ltrb[3];
        double lr = std::min(best_ltrb[0], best_ltrb[2]) / std::max(best_ltrb[0], best_ltrb[2]);
        double tb = std::min(best_ltrb[1], best_ltrb[3]) / std::max(best_ltrb[1], best_ltrb[3]);
        lt.ctr[idx] = std::sqrt(lr * tb);
        lt.positive.push_back(idx);
      }
    targets.total_positives += static_cast<int>(lt.positive.size());
    targets.levels.push_back(std::move(lt));
  }
  return targets;
}

MaskGrid mask_target_for_box(const MaskGrid& full_mask, const Box& box, int m) {
  MaskGrid target(m, m);
  double bw = (box[2] - box[0]) / m;
  double bh = (box[3] - box[1]) / m;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      int px = static_cast<int>(std::floor(box[0] + (j + 0.5) * bw));
      int py = static_cast<int>(std::floor(box[1] + (i + 0.5) * bh));
      if (px < 0 || px >= full_mask.width || py < 0 || py >= full_mask.height) continue;
      target.at(i, j) = full_mask.at(py, px);
    }
  return target;
}

DetectionLosses detection_losses(const DenseHeadOutput& dense, const DenseTargets& targets,
                                 const std::vector<Var>& roi_mask_logits,
                                 const std::vector<MaskGrid>& roi_mask_targets,
                                 const PerceptionConfig& cfg) {
  if (roi_mask_logits.size() != roi_mask_targets.size())
    throw ShapeError("detection_losses: mask logits/targets count mismatch");

  int total_pos = targets.total_positives;
  double pos_norm = std::max(1, total_pos);

  Var cls_sum = Var::constant(Tensor::scalar(0.0));
  Var box_sum = Var::constant(Tensor::scalar(0.0));
  Var ctr_sum = Var::constant(Tensor::scalar(0.0));

  for (size_t li = 0; li < dense.cls.size(); ++li) {
    const LevelTargets& lt = targets.levels[li];
    const Var& cls = dense.cls[li];
    int k = cls.value().dim(0);
    int hw = lt.h * lt.w;

    // Focal loss over every location and class.
    Tensor one_hot({k, lt.h, lt.w});
    Tensor one_hot_inv = Tensor::full({k, lt.h, lt.w}, 1.0);
    for (int idx = 0; idx < hw; ++idx) {
      int cat = lt.cls[idx];
      if (cat > 0) {
        one_hot[(static_cast<int64_t>(cat - 1)) * hw + idx] = 1.0;
        one_hot_inv[(static_cast<int64_t>(cat - 1)) * hw + idx] = 0.0;
      }
    }
    Var p = sigmoid(cls);
    Var q = sigmoid(mul_scalar(cls, -1.0));
    Var pos_term = mul(pow_scalar(q, cfg.focal_gamma), softplus(mul_scalar(cls, -1.0)));
    Var neg_term = mul(pow_scalar(p, cfg.focal_gamma), softplus(cls));
    Var focal = add(mul_scalar(mul(Var::constant(one_hot), pos_term), cfg.focal_alpha),
                    mul_scalar(mul(Var::constant(one_hot_inv), neg_term), 1.0 - cfg.focal_alpha));
    cls_sum = add(cls_sum, sum(focal));

    if (lt.positive.empty()) continue;

    // IoU loss over positive locations.
    auto gather_channel = [&](const Var& grid, int ch) {
      return gather_rows(reshape(select_channel(grid, ch), {hw}), lt.positive);
    };
    Var lp = gather_channel(dense.box[li], 0);
    Var tp = gather_channel(dense.box[li], 1);
    Var rp = gather_channel(dense.box[li], 2);
    Var bp = gather_channel(dense.box[li], 3);

    int np = static_cast<int>(lt.positive.size());
    Tensor lt_t({np}), tt_t({np}), rt_t({np}), bt_t({np}), ctr_t({np});
    for (int i = 0; i < np; ++i) {
      int idx = lt.positive[i];
      lt_t[i] = lt.ltrb[0 * static_cast<int64_t>(hw) + idx];
      tt_t[i] = lt.ltrb[1 * static_cast<int64_t>(hw) + idx];
      rt_t[i] = lt.ltrb[2 * static_cast<int64_t>(hw) + idx];
      bt_t[i] = lt.ltrb[3 * static_cast<int64_t>(hw) + idx];
      ctr_t[i] = lt.ctr[idx];
    }
    Var ltc = Var::constant(lt_t), ttc = Var::constant(tt_t);
    Var rtc = Var::constant(rt_t), btc = Var::constant(bt_t);

    Var inter_w = add(minimum(lp, ltc), minimum(rp, rtc));
    Var inter_h = add(minimum(tp, ttc), minimum(bp, btc));
    Var inter = mul(inter_w, inter_h);
    Var area_p = mul(add(lp, rp), add(tp, bp));
    Tensor area_t({np});
    for (int i = 0; i < np; ++i) area_t[i] = (lt_t[i] + rt_t[i]) * (tt_t[i] + bt_t[i]);
    Var uni = sub(add(area_p, Var::constant(area_t)), inter);
    Var iou_loss = mul_scalar(log(div(inter, uni)), -1.0);
    box_sum = add(box_sum, sum(iou_loss));

    // Centerness BCE over positives.
    Var ctr_logits = gather_channel(dense.ctr[li], 0);
    ctr_sum = add(ctr_sum, sum(bce_with_logits(ctr_logits, ctr_t)));
  }

  DetectionLosses losses;
  losses.cls = mul_scalar(cls_sum, 1.0 / pos_norm);
  if (total_pos > 0) {
    losses.box = mul_scalar(box_sum, 1.0 / total_pos);
    losses.ctr = mul_scalar(ctr_sum, 1.0 / total_pos);
  } else {
    losses.box = Var::constant(Tensor::scalar(0.0));
    losses.ctr = Var::constant(Tensor::scalar(0.0));
  }

  if (roi_mask_logits.empty()) {
    losses.mask = Var::constant(Tensor::scalar(0.0));
  } else {
    Var mask_sum = Var::constant(Tensor::scalar(0.0));
    int64_t pixel_count = 0;
    for (size_t i = 0; i < roi_mask_logits.size(); ++i) {
      const MaskGrid& mg = roi_mask_targets[i];
      Tensor target({mg.height, mg.width});
      for (int64_t p = 0; p < target.size(); ++p) target[p] = mg.data[p];
      mask_sum = add(mask_sum, sum(bce_with_logits(roi_mask_logits[i], target)));
      pixel_count += target.size();
    }
    losses.mask = mul_scalar(mask_sum, 1.0 / static_cast<double>(pixel_count));
  }
  return losses;
}

}  // namespace vistrack
