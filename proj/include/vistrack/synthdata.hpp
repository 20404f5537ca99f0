#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vistrack/grid.hpp"
#include "vistrack/tensor.hpp"

namespace vistrack {

enum class MotionModel { kLinear, kLinearPlusJitter };

// Deterministic description of one synthetic clip.
struct ClipSpec {
  int num_frames = 8;
  int height = 128;
  int width = 128;
  int num_objects = 3;
  std::vector<int> category_set = {1, 2, 3, 4};
  MotionModel motion_model = MotionModel::kLinear;
  double occlusion_rate = 0.0;
  bool exit_reentry = false;
  uint64_t seed = 0;

  void validate() const;  // throws ValidationError naming the offending field
};

struct VideoClip {
  std::string clip_id;
  std::vector<Tensor> frames;  // each [3,H,W], values on the 8-bit grid
};

struct ObjectTrack {
  int track_id = 0;
  int category_id = 0;
  std::vector<bool> present;  // per frame
};

struct GroundTruth {
  std::vector<IdGrid> id_masks;  // per frame, 0 = background, value = track_id
  std::vector<ObjectTrack> objects;

  MaskGrid object_mask(int frame, int track_id) const;
  // Tight pixel-aligned box (x1,y1,x2,y2); all zeros when the object is absent.
  std::array<double, 4> object_box(int frame, int track_id) const;
};

// Shape categories: the synthetic stand-in for a semantic label set.
std::vector<std::pair<int, std::string>> shape_categories();
double analytic_shape_area(int category_id, double size);

std::pair<VideoClip, GroundTruth> generate_clip(const ClipSpec& spec);

// Corpus generation with per-clip seeds derived as seed XOR clip index.
std::pair<std::vector<VideoClip>, std::vector<GroundTruth>> generate_corpus(
    const ClipSpec& base, int num_clips, int num_objects_min = 0, int num_objects_max = 0);

// ---------------------------------------------------------------------------
// Run-length encoding: row-major, alternating runs starting with background.

struct RleMask {
  std::vector<int> counts;
  int height = 0;
  int width = 0;
};

RleMask encode_rle(const MaskGrid& mask);
MaskGrid decode_rle(const RleMask& r);

// ---------------------------------------------------------------------------
// Static-image-to-pseudo-video augmentation.

struct ParamRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct AffineBlurParams {
  ParamRange rot_deg{-10.0, 10.0};
  ParamRange translate_frac{-0.1, 0.1};  // drawn independently per axis
  ParamRange scale{0.9, 1.1};
  ParamRange shear_deg{-5.0, 5.0};
  int blur_len_min = 3;
  int blur_len_max = 9;

  static AffineBlurParams identity() {
    return {{0, 0}, {0, 0}, {1, 1}, {0, 0}, 1, 1};
  }
};

// gt must be single-frame; returns a 2-frame pseudo clip with warped frame 1.
std::pair<VideoClip, GroundTruth> augment_pair(const Tensor& image, const GroundTruth& gt,
                                               const AffineBlurParams& params, uint64_t seed);

// ---------------------------------------------------------------------------
// On-disk dataset.
//   root/annotations.json
//   root/clips/<clip_id>/frames/%05d.png   8-bit RGB
//   root/clips/<clip_id>/masks/%05d.png    16-bit instance ids

struct ClipInfo {
  std::string id;
  int num_frames = 0, height = 0, width = 0;
  std::vector<ObjectTrack> objects;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string root, std::vector<std::pair<int, std::string>> categories,
          std::vector<ClipInfo> clips);

  const std::string& root() const { return root_; }
  const std::vector<std::pair<int, std::string>>& categories() const { return categories_; }
  const std::vector<ClipInfo>& clips() const { return clips_; }
  const ClipInfo* find_clip(const std::string& clip_id) const;

  // Loads (and caches) frames plus ground truth for one clip.
  const std::pair<VideoClip, GroundTruth>& load_clip(const std::string& clip_id) const;

 private:
  std::string root_;
  std::vector<std::pair<int, std::string>> categories_;
  std::vector<ClipInfo> clips_;
  mutable std::map<std::string, std::shared_ptr<std::pair<VideoClip, GroundTruth>>> cache_;
};

void write_dataset(const std::vector<VideoClip>& clips, const std::vector<GroundTruth>& gts,
                   const std::string& root,
                   const std::vector<std::pair<int, std::string>>& categories = shape_categories());
Dataset read_dataset(const std::string& root);

}  // namespace vistrack
