#pragma once

#include <memory>

#include "vistrack/config.hpp"
#include "vistrack/nn.hpp"
#include "vistrack/object_graph.hpp"
#include "vistrack/perception.hpp"
#include "vistrack/resfuser.hpp"

namespace vistrack {

// The full two-frame pipeline: perception + residual fusion + object graph,
// sharing one parameter registry for the optimizer and checkpoints.
struct Model {
  Config config;
  ParamSet params;
  std::unique_ptr<Perception> perception;
  std::unique_ptr<ResFuser> resfuser;
  std::unique_ptr<ObjectGraph> graph;

  explicit Model(const Config& cfg);

  // Fused features for the frame pair (identity pass-through when the fuser is
  // disabled). For the first frame of a clip, pass curr as prev.
  PyramidFeatures fused(const PyramidFeatures& prev, const PyramidFeatures& curr) const;
};

}  // namespace vistrack
