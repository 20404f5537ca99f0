#pragma once

#include <map>
#include <string>
#include <vector>

#include "vistrack/grid.hpp"
#include "vistrack/synthdata.hpp"

namespace vistrack {

struct PredictedTrack {
  std::string clip_id;
  int track_id = 0;
  int category_id = 0;
  double score = 0.0;
  std::map<int, RleMask> masks;  // frame index -> mask; absent frames are empty
};

struct GtTrack {
  std::string clip_id;
  int track_id = 0;
  int category_id = 0;
  std::vector<MaskGrid> masks;  // dense, one per frame
};

struct EvalReport {
  double ap = 0, ap50 = 0, ap75 = 0, ar1 = 0, ar10 = 0;
  double j_mean = 0, j_recall = 0, j_decay = 0;
  double f_mean = 0, f_recall = 0, f_decay = 0;
  double jf_mean = 0;
};

std::vector<GtTrack> gt_tracks_for_clip(const GroundTruth& gt, const std::string& clip_id);

// Spatio-temporal IoU: summed per-frame intersections over summed unions.
double st_iou(const PredictedTrack& pred, const GtTrack& gt);

struct ApMetrics {
  double ap = 0, ap50 = 0, ap75 = 0, ar1 = 0, ar10 = 0;
};

// YouTube-VIS protocol: 10 IoU thresholds from 0.50 to 0.95, greedy matching
// in score order, 101-point PR interpolation, averaged per category first.
ApMetrics video_ap(const std::vector<PredictedTrack>& preds, const std::vector<GtTrack>& gts,
                   const std::vector<int>& category_ids);

struct RegionMetrics {
  double mean = 0, recall = 0, decay = 0;
};

// DAVIS-style region (J) and boundary (F) measures for one clip. Object
// correspondence comes from a highest-mean-IoU bipartite matching.
RegionMetrics j_measure(const std::vector<PredictedTrack>& preds, const std::vector<GtTrack>& gts);
RegionMetrics f_measure(const std::vector<PredictedTrack>& preds, const std::vector<GtTrack>& gts);

EvalReport evaluate_vis(const std::vector<PredictedTrack>& preds, const Dataset& dataset);
EvalReport evaluate_uvos(const std::vector<PredictedTrack>& preds, const Dataset& dataset);

void write_report(const std::string& path, const EvalReport& report);

// Identity stability: number of frames where the predicted identity covering a
// gt track changes relative to its previously covering identity.
int count_id_switches(const std::vector<PredictedTrack>& preds, const GroundTruth& gt,
                      const std::string& clip_id, double iou_threshold = 0.5);

// Optimal assignment (Hungarian); returns col index per row, -1 if unassigned.
// Used for metric correspondences; maximizes the total score.
std::vector<int> optimal_assignment(const std::vector<std::vector<double>>& score);

namespace detail {
// Boundary machinery shared with the tests' brute-force oracle.
MaskGrid boundary_pixels(const MaskGrid& mask);
double boundary_f_score(const MaskGrid& pred, const MaskGrid& gt, double tolerance);
}  // namespace detail

}  // namespace vistrack
