#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vistrack/object_graph.hpp"
#include "vistrack/perception.hpp"
#include "vistrack/tracker.hpp"

namespace vistrack {

// Flat key=value configuration. Unknown keys are rejected.
struct Config {
  std::string data_train;
  std::string data_eval;

  int channels = 32;      // C
  int latent_dim = 64;    // D
  int edge_dim = 64;      // E
  int roi_size = 14;      // R
  int mask_size = 28;     // M
  std::vector<int> levels = {3, 4, 5};
  int num_classes = 4;

  double loss_cls = 1.0;
  double loss_box = 1.0;
  double loss_ctr = 1.0;
  double loss_mask = 1.0;
  double loss_edge = 1.0;
  double loss_trans = 0.1;

  double lr = 5e-3;
  double momentum = 0.9;
  int iterations = 5000;
  std::vector<int> milestones;  // empty = 60% and 85% of iterations
  int batch_size = 4;
  double p_img = 0.5;  // probability of a static-image pseudo pair per sample

  double tracker_alpha = 1.0;
  double tracker_beta = 2.0;
  double tracker_gamma = 1.0;
  double tracker_theta_new = 0.1;
  double tracker_epsilon = 1e-6;
  double tracker_theta_iou = 0.3;
  std::string tracker_mode = "edge";  // edge | iou

  bool resfuser_enabled = true;
  bool gnn_enabled = true;

  uint64_t seed = 0;

  void validate() const;
  std::vector<int> effective_milestones() const;

  PerceptionConfig perception_config() const;
  GnnConfig gnn_config() const;
  TrackerConfig tracker_config() const;

  std::string serialize() const;
  static Config parse(const std::string& text);
  static Config load(const std::string& path);
};

}  // namespace vistrack
