#pragma once

#include <vector>

#include "vistrack/boxes.hpp"
#include "vistrack/perception.hpp"
#include "vistrack/tensor.hpp"

namespace vistrack {

struct TrackerConfig {
  double alpha = 1.0;      // category-agreement weight
  double beta = 2.0;       // box-IoU weight
  double gamma = 1.0;      // detection-confidence weight
  double theta_new = 0.1;  // new-instance prior
  double epsilon = 1e-6;   // edge-score clamp before log
  double theta_iou = 0.3;  // IoU-baseline new-instance threshold
  enum class Mode { kEdge, kIou };
  Mode mode = Mode::kEdge;
};

// Online memory of every instance seen so far in a clip. Entries are never
// deleted, which is what makes re-entry matching possible.
struct TrackEntry {
  int track_id = 0;
  Tensor state;  // latest latent z, detached
  Box box{};
  int category_id = 0;
  double confidence = 0.0;
  int last_seen = -1;
};

struct TrackStore {
  std::vector<TrackEntry> entries;
  int next_id = 1;
};

struct Assignment {
  int track_id = 0;
  bool is_new = false;
};
using AssignmentResult = std::vector<Assignment>;

// Rows = detections, columns = store entries plus one trailing new-instance
// column. edge_scores is [|store|, |detections|], produced by the object
// graph with store states on the frame-t side.
Tensor score_matrix(const std::vector<Detection>& detections, const TrackStore& store,
                    const Tensor& edge_scores, const TrackerConfig& cfg);

// Greedy confidence-ordered assignment over the score matrix. Each store
// column is claimed at most once per frame; the new-instance column mints
// fresh ids. Ties break toward the lowest track id.
AssignmentResult associate(const std::vector<Detection>& detections, const TrackStore& store,
                           const Tensor& edge_scores, const TrackerConfig& cfg);

// Ablation-reference tracker: same greedy scheme with IoU-only scores.
AssignmentResult iou_baseline_associate(const std::vector<Detection>& detections,
                                        const TrackStore& store, const TrackerConfig& cfg);

// Applies an assignment: matched entries are overwritten with the detection's
// state/box/confidence/frame, new instances are appended, everything else is
// left untouched.
void update_store(TrackStore& store, const std::vector<Detection>& detections,
                  const std::vector<Tensor>& states, const AssignmentResult& assignment,
                  int frame);

}  // namespace vistrack
