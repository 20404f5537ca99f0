#pragma once

#include <array>
#include <string>
#include <vector>

#include "vistrack/autograd.hpp"
#include "vistrack/boxes.hpp"
#include "vistrack/grid.hpp"
#include "vistrack/nn.hpp"
#include "vistrack/synthdata.hpp"

namespace vistrack {

struct PerceptionConfig {
  int channels = 32;   // pyramid width C
  int roi_size = 14;   // R; mask resolution M is fixed at 2R by the mask head
  int mask_size = 28;  // M
  std::vector<int> levels = {3, 4, 5};      // strides 2^level
  std::vector<double> scale_breaks = {64, 128};  // level i covers max-ltrb in (break_{i-1}, break_i]
  int num_classes = 4;
  double score_threshold = 0.05;
  double nms_iou = 0.5;
  int max_detections = 20;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;

  void validate() const;
};

struct PyramidGeometry {
  std::vector<int> levels, strides, heights, widths;
  int image_height = 0, image_width = 0;
};

struct PyramidFeatures {
  std::vector<int> levels;   // level indices, strictly increasing
  std::vector<int> strides;  // 2^level
  std::vector<Var> grids;    // each [C, H/s, W/s]
  int image_height = 0, image_width = 0;

  PyramidGeometry geometry() const;
  int channels() const { return grids.empty() ? 0 : grids[0].value().dim(0); }
};

struct DenseHeadOutput {
  // One entry per level: class logits [K,H,W], box distances [4,H,W]
  // (l,t,r,b in input pixels, positive), centerness logits [1,H,W].
  std::vector<Var> cls, box, ctr;
};

struct Detection {
  Box box{};  // clipped to image bounds
  int category_id = 0;
  double score = 0.0;
  int level = 0;  // pyramid level the detection decoded from
  Tensor roi_feature;        // [C,R,R], filled by the pipeline
  Grid<double> mask_local;   // MxM probabilities, filled by the pipeline
};

struct LevelTargets {
  int h = 0, w = 0, stride = 0;
  std::vector<int> cls;        // per location, 0 = background else category id
  Tensor ltrb;                 // [4,h,w] regression targets (pixels)
  std::vector<double> ctr;     // per location centerness target
  std::vector<int> positive;   // flattened positive location indices
};

struct DenseTargets {
  std::vector<LevelTargets> levels;
  int total_positives = 0;
};

struct GtBox {
  int track_id = 0;
  int category_id = 0;
  Box box{};
};

// Tight boxes of all objects visible in the given frame.
std::vector<GtBox> gt_boxes_for_frame(const GroundTruth& gt, int frame);

class Perception {
 public:
  Perception(const PerceptionConfig& cfg, ParamSet& params, Rng& rng);

  // frame [3,H,W]; H and W must be divisible by the largest stride.
  PyramidFeatures extract_pyramid(const Var& frame) const;

  DenseHeadOutput detect(const PyramidFeatures& feats) const;

  std::vector<Detection> decode_detections(const DenseHeadOutput& dense,
                                           const PyramidGeometry& geom) const;

  // RoI Align on one pyramid level; box is in input pixels.
  Var pooled_roi(const PyramidFeatures& feats, int level_index, const Box& box_pixels) const;

  Var mask_logits(const Var& roi_feature, int category_id) const;  // [M,M]
  Tensor predict_mask(const Var& roi_feature, int category_id) const;
  Var attention_map(const Var& mask_tower_features) const;  // [1,R,R] in (0,1)

  // Level whose scale range contains max(w,h)/2; used to pool gt-side RoIs.
  int level_index_for_box(const Box& box) const;

  const PerceptionConfig& config() const { return cfg_; }

 private:
  PerceptionConfig cfg_;
  Conv2dLayer stem_, stage2_, stage3_, stage4_, stage5_;
  std::vector<Conv2dLayer> lateral_, smooth_;
  Conv2dLayer tower1_, tower2_;
  Conv2dLayer head_cls_, head_box_, head_ctr_;
  Conv2dLayer mask_conv1_, mask_conv2_, mask_attn_, mask_post_, mask_out_;
};

DenseTargets assign_targets(const GroundTruth& gt, int frame, const PyramidGeometry& geom,
                            const PerceptionConfig& cfg);

// MxM binary target sampled from the instance mask inside the box.
MaskGrid mask_target_for_box(const MaskGrid& full_mask, const Box& box, int m);

struct DetectionLosses {
  Var cls, box, ctr, mask;
};

DetectionLosses detection_losses(const DenseHeadOutput& dense, const DenseTargets& targets,
                                 const std::vector<Var>& roi_mask_logits,
                                 const std::vector<MaskGrid>& roi_mask_targets,
                                 const PerceptionConfig& cfg);

}  // namespace vistrack
