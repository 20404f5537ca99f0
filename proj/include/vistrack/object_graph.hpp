#pragma once

#include <utility>
#include <vector>

#include "vistrack/autograd.hpp"
#include "vistrack/boxes.hpp"
#include "vistrack/nn.hpp"
#include "vistrack/synthdata.hpp"

namespace vistrack {

enum class NodeSource { kGroundTruthNode, kProposalNode };

// Latent object state: the encoded RoI feature of one instance in one frame.
struct ObjectState {
  Var z;  // [D]
  NodeSource source = NodeSource::kProposalNode;
  int handle = 0;  // track_id for ground-truth nodes, detection index for proposals
  int frame = 0;
};

// Bipartite cross-frame graph for one consecutive-frame pair. Every frame-t
// node connects to every frame-(t+1) node by a directed edge.
struct TransitionGraph {
  std::vector<ObjectState> frame_t_nodes;
  std::vector<ObjectState> frame_t1_nodes;
  Var zt_matrix;   // [Kt, D]
  Var zt1_matrix;  // [Kt1, D]

  // Populated by message_pass:
  Var edge_embeddings;  // [Kt*Kt1, E], row (i*Kt1 + j)
  Var delta;            // [Kt1, D]
  bool messages_done = false;

  // Populated by score_edges:
  Var edge_logits;     // [Kt*Kt1]
  Tensor edge_scores;  // [Kt, Kt1] probabilities
  bool scores_done = false;

  int num_t() const { return static_cast<int>(frame_t_nodes.size()); }
  int num_t1() const { return static_cast<int>(frame_t1_nodes.size()); }
  int num_edges() const { return num_t() * num_t1(); }
};

struct GnnConfig {
  int channels = 32;   // RoI feature channels
  int roi_size = 14;   // RoI spatial size
  int latent_dim = 64; // D
  int edge_dim = 64;   // E
};

class ObjectGraph {
 public:
  ObjectGraph(const GnnConfig& cfg, ParamSet& params, Rng& rng);

  // roi [C,R,R] -> latent state of dimension D.
  ObjectState encode_object(const Var& roi, NodeSource source, int handle, int frame) const;

  static TransitionGraph build_graph(std::vector<ObjectState> states_t,
                                     std::vector<ObjectState> states_t1);

  // One step: e^{i,j} = f_e(z_t^i, z_{t+1}^j); dz^j = f_n(z^j, sum_i e^{i,j}).
  void message_pass(TransitionGraph& g) const;

  void score_edges(TransitionGraph& g) const;

  const GnnConfig& config() const { return cfg_; }

 private:
  GnnConfig cfg_;
  Conv2dLayer enc_conv1_, enc_conv2_;
  Mlp enc_mlp_, edge_fn_, node_fn_, score_head_;
};

// Predicted next state, Eq-style additive transition.
Var predict_transition(const Var& z_t, const Var& delta);

// Edge labels for association training. Frame-t nodes are ground-truth
// instances (given by track id); frame-(t+1) nodes are proposals (given by
// box). A proposal matches the gt object whose frame-(t+1) tight mask box has
// the highest IoU with it, if that IoU reaches the threshold.
struct AssociationLabels {
  std::vector<double> labels;  // one per edge, row-major (i*Kp + j)
  std::vector<std::pair<int, int>> positive_pairs;  // (frame-t index, proposal index)
};

AssociationLabels association_targets(const std::vector<int>& gt_track_ids_t,
                                      const std::vector<Box>& proposal_boxes_t1,
                                      const GroundTruth& gt, int frame_t1,
                                      double iou_match_threshold);

// Mean binary cross-entropy over all edges; scores are sigmoid(logits).
Var association_loss(const Var& edge_logits, const std::vector<double>& labels);

// Mean squared error between z_t^i + dz^j and the encoded z_{t+1}^j over
// positive pairs.
Var transition_consistency_loss(const TransitionGraph& g,
                                const std::vector<std::pair<int, int>>& positive_pairs);

}  // namespace vistrack
