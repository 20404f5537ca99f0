#include "vistrack/object_graph.hpp"

#include <algorithm>

#include "vistrack/errors.hpp"
#include "vistrack/perception.hpp"

namespace vistrack {

ObjectGraph::ObjectGraph(const GnnConfig& cfg, ParamSet& params, Rng& rng) : cfg_(cfg) {
  int c = cfg.channels;
  enc_conv1_.init(params, "object_graph/encoder/conv1", c, c, 3, 2, 1, rng);
  enc_conv2_.init(params, "object_graph/encoder/conv2", c, c, 3, 2, 1, rng);
  int spatial = (cfg.roi_size + 1) / 2;
  spatial = (spatial + 1) / 2;  // two stride-2 convs
  int flat = c * spatial * spatial;
  enc_mlp_.init(params, "object_graph/encoder/mlp", cfg.latent_dim, 2 * cfg.latent_dim, flat, rng);
  edge_fn_.init(params, "object_graph/edge_fn", cfg.edge_dim, cfg.edge_dim, 2 * cfg.latent_dim,
                rng);
  node_fn_.init(params, "object_graph/node_fn", cfg.latent_dim, cfg.latent_dim,
                cfg.latent_dim + cfg.edge_dim, rng);
  // Zero-initialized last layer: untrained edge scores sit at exactly 0.5.
  score_head_.init(params, "object_graph/score_head", 1, cfg.edge_dim, cfg.edge_dim, rng,
                   /*zero_init_last=*/true);
}

ObjectState ObjectGraph::encode_object(const Var& roi, NodeSource source, int handle,
                                       int frame) const {
  const Tensor& v = roi.value();
  if (v.rank() != 3 || v.dim(0) != cfg_.channels || v.dim(1) != cfg_.roi_size ||
      v.dim(2) != cfg_.roi_size)
    throw ShapeError("encode_object: expected [" + std::to_string(cfg_.channels) + "," +
                     std::to_string(cfg_.roi_size) + "," + std::to_string(cfg_.roi_size) +
                     "], got " + v.shape_str());
  Var h = relu(enc_conv1_.forward(roi));
  h = relu(enc_conv2_.forward(h));
  int flat = static_cast<int>(h.value().size());
  Var z = enc_mlp_.forward(reshape(h, {1, flat}));
  ObjectState state;
  state.z = reshape(z, {cfg_.latent_dim});
  state.source = source;
  state.handle = handle;
  state.frame = frame;
  return state;
}

TransitionGraph ObjectGraph::build_graph(std::vector<ObjectState> states_t,
                                         std::vector<ObjectState> states_t1) {
  TransitionGraph g;
  g.frame_t_nodes = std::move(states_t);
  g.frame_t1_nodes = std::move(states_t1);
  auto stack = [](const std::vector<ObjectState>& nodes, int d) {
    if (nodes.empty()) return Var::constant(Tensor::zeros({0, d}));
    std::vector<Var> rows;
    rows.reserve(nodes.size());
    for (const ObjectState& s : nodes) rows.push_back(s.z);
    return stack_rows(rows);
  };
  int d_t = g.frame_t_nodes.empty() ? 0 : static_cast<int>(g.frame_t_nodes[0].z.value().size());
  int d_t1 = g.frame_t1_nodes.empty() ? d_t : static_cast<int>(g.frame_t1_nodes[0].z.value().size());
  if (d_t == 0) d_t = d_t1;
  g.zt_matrix = stack(g.frame_t_nodes, d_t);
  g.zt1_matrix = stack(g.frame_t1_nodes, d_t1);
  return g;
}

void ObjectGraph::message_pass(TransitionGraph& g) const {
  int kt = g.num_t(), kt1 = g.num_t1();
  int d = cfg_.latent_dim, e = cfg_.edge_dim;

  if (kt > 0 && kt1 > 0) {
    Var pair_input = pairwise_concat(g.zt_matrix, g.zt1_matrix);  // [kt*kt1, 2D]
    g.edge_embeddings = edge_fn_.forward(pair_input);             // [kt*kt1, E]
  } else {
    g.edge_embeddings = Var::constant(Tensor::zeros({kt * kt1, e}));
  }

  if (kt1 > 0) {
    // Incoming-message sum per frame-(t+1) node; empty frame-t side gives zeros.
    Var agg = (kt > 0) ? sum_group_rows(g.edge_embeddings, kt, kt1)
                       : Var::constant(Tensor::zeros({kt1, e}));
    g.delta = node_fn_.forward(concat_cols(g.zt1_matrix, agg));  // [kt1, D]
  } else {
    g.delta = Var::constant(Tensor::zeros({0, d}));
  }
  g.messages_done = true;
}

void ObjectGraph::score_edges(TransitionGraph& g) const {
  if (!g.messages_done) throw ShapeError("score_edges: message_pass must run first");
  int kt = g.num_t(), kt1 = g.num_t1();
  if (kt * kt1 > 0) {
    g.edge_logits = reshape(score_head_.forward(g.edge_embeddings), {kt * kt1});
  } else {
    g.edge_logits = Var::constant(Tensor::zeros({0}));
  }
  g.edge_scores = Tensor::zeros({kt, kt1});
  for (int i = 0; i < kt; ++i)
    for (int j = 0; j < kt1; ++j) {
      double logit = g.edge_logits.value()[i * kt1 + j];
      g.edge_scores.at(i, j) = 1.0 / (1.0 + std::exp(-logit));
    }
  g.scores_done = true;
}

Var predict_transition(const Var& z_t, const Var& delta) { return add(z_t, delta); }

AssociationLabels association_targets(const std::vector<int>& gt_track_ids_t,
                                      const std::vector<Box>& proposal_boxes_t1,
                                      const GroundTruth& gt, int frame_t1,
                                      double iou_match_threshold) {
  int kt = static_cast<int>(gt_track_ids_t.size());
  int kp = static_cast<int>(proposal_boxes_t1.size());
  AssociationLabels out;
  out.labels.assign(static_cast<size_t>(kt) * kp, 0.0);

  // Match each proposal to the gt object with the best mask-box IoU at t+1.
  std::vector<int> matched_track(kp, -1);
  for (int j = 0; j < kp; ++j) {
    double best_iou = 0.0;
    int best_track = -1;
    for (const auto& obj : gt.objects) {
      if (!obj.present[frame_t1]) continue;
      Box gt_box = gt.object_box(frame_t1, obj.track_id);
      double iou = box_iou(proposal_boxes_t1[j], gt_box);
      if (iou > best_iou) {
        best_iou = iou;
        best_track = obj.track_id;
      }
    }
    if (best_iou >= iou_match_threshold) matched_track[j] = best_track;
  }

  for (int i = 0; i < kt; ++i)
    for (int j = 0; j < kp; ++j)
      if (matched_track[j] >= 0 && matched_track[j] == gt_track_ids_t[i]) {
        out.labels[static_cast<size_t>(i) * kp + j] = 1.0;
        out.positive_pairs.emplace_back(i, j);
      }
  return out;
}

Var association_loss(const Var& edge_logits, const std::vector<double>& labels) {
  int n = static_cast<int>(labels.size());
  if (edge_logits.value().size() != n)
    throw ShapeError("association_loss: one label per edge required");
  if (n == 0) return Var::constant(Tensor::scalar(0.0));
  Tensor targets({n});
  for (int i = 0; i < n; ++i) targets[i] = labels[i];
  return mean(bce_with_logits(edge_logits, targets));
}

Var transition_consistency_loss(const TransitionGraph& g,
                                const std::vector<std::pair<int, int>>& positive_pairs) {
  if (positive_pairs.empty()) return Var::constant(Tensor::scalar(0.0));
  if (!g.messages_done)
    throw ShapeError("transition_consistency_loss: message_pass must run first");
  std::vector<int> t_idx, j_idx;
  for (const auto& [i, j] : positive_pairs) {
    t_idx.push_back(i);
    j_idx.push_back(j);
  }
  Var zt = gather_rows(g.zt_matrix, t_idx);
  Var dz = gather_rows(g.delta, j_idx);
  Var zt1 = gather_rows(g.zt1_matrix, j_idx);
  Var residual = sub(predict_transition(zt, dz), zt1);
  return mean(square(residual));
}

}  // namespace vistrack
