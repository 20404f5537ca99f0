#include "vistrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vistrack/errors.hpp"

namespace vistrack {

Tensor score_matrix(const std::vector<Detection>& detections, const TrackStore& store,
                    const Tensor& edge_scores, const TrackerConfig& cfg) {
  int m = static_cast<int>(detections.size());
  int n = static_cast<int>(store.entries.size());
  if (n > 0 && (edge_scores.rank() != 2 || edge_scores.dim(0) != n || edge_scores.dim(1) != m))
    throw ShapeError("score_matrix: edge_scores must be [|store|, |detections|]");

  Tensor mat({m, n + 1});
  for (int d = 0; d < m; ++d) {
    const Detection& det = detections[d];
    double conf_term = cfg.gamma * std::log(std::max(det.score, cfg.epsilon));
    for (int s = 0; s < n; ++s) {
      const TrackEntry& entry = store.entries[s];
      double edge = std::clamp(edge_scores.at(s, d), cfg.epsilon, 1.0 - cfg.epsilon);
      mat.at(d, s) = std::log(edge) + cfg.alpha * (entry.category_id == det.category_id ? 1.0 : 0.0) +
                     cfg.beta * box_iou(entry.box, det.box) + conf_term;
    }
    mat.at(d, n) = std::log(cfg.theta_new);
  }
  return mat;
}

namespace {

AssignmentResult greedy_assign(const std::vector<Detection>& detections, const TrackStore& store,
                               const Tensor& mat, int& next_id) {
  int m = static_cast<int>(detections.size());
  int n = static_cast<int>(store.entries.size());

  // Process in descending confidence; stable on the input order.
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return detections[a].score > detections[b].score; });

  AssignmentResult result(m);
  std::vector<bool> taken(n, false);
  for (int d : order) {
    int best_col = n;  // new-instance column is always available
    double best = mat.at(d, n);
    for (int s = 0; s < n; ++s) {
      if (taken[s]) continue;
      if (mat.at(d, s) > best) {  // ties keep the earlier (lowest-id) column
        best = mat.at(d, s);
        best_col = s;
      }
    }
    if (best_col == n) {
      result[d] = {next_id++, true};
    } else {
      taken[best_col] = true;
      result[d] = {store.entries[best_col].track_id, false};
    }
  }
  return result;
}

}  // namespace

AssignmentResult associate(const std::vector<Detection>& detections, const TrackStore& store,
                           const Tensor& edge_scores, const TrackerConfig& cfg) {
  Tensor mat = score_matrix(detections, store, edge_scores, cfg);
  int next_id = store.next_id;
  return greedy_assign(detections, store, mat, next_id);
}

AssignmentResult iou_baseline_associate(const std::vector<Detection>& detections,
                                        const TrackStore& store, const TrackerConfig& cfg) {
  int m = static_cast<int>(detections.size());
  int n = static_cast<int>(store.entries.size());
  Tensor mat({m, n + 1});
  for (int d = 0; d < m; ++d) {
    for (int s = 0; s < n; ++s) mat.at(d, s) = box_iou(store.entries[s].box, detections[d].box);
    mat.at(d, n) = cfg.theta_iou;
  }
  int next_id = store.next_id;
  return greedy_assign(detections, store, mat, next_id);
}

void update_store(TrackStore& store, const std::vector<Detection>& detections,
                  const std::vector<Tensor>& states, const AssignmentResult& assignment,
                  int frame) {
  if (assignment.size() != detections.size() || states.size() != detections.size())
    throw ShapeError("update_store: assignment/state count mismatch");
  for (size_t d = 0; d < detections.size(); ++d) {
    const Assignment& a = assignment[d];
    if (a.is_new) {
      TrackEntry entry;
      entry.track_id = a.track_id;
      entry.state = states[d];
      entry.box = detections[d].box;
      entry.category_id = detections[d].category_id;
      entry.confidence = detections[d].score;
      entry.last_seen = frame;
      store.entries.push_back(std::move(entry));
      store.next_id = std::max(store.next_id, a.track_id + 1);
    } else {
      for (TrackEntry& entry : store.entries)
        if (entry.track_id == a.track_id) {
          entry.state = states[d];
          entry.box = detections[d].box;
          entry.confidence = detections[d].score;
          entry.last_seen = frame;
          break;
        }
    }
  }
}

}  // namespace vistrack
