#include "vistrack/model.hpp"

namespace vistrack {

Model::Model(const Config& cfg) : config(cfg) {
  config.validate();
  Rng init_rng(cfg.seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  perception = std::make_unique<Perception>(cfg.perception_config(), params, init_rng);
  resfuser = std::make_unique<ResFuser>(cfg.channels, cfg.levels, params, init_rng);
  graph = std::make_unique<ObjectGraph>(cfg.gnn_config(), params, init_rng);
}

PyramidFeatures Model::fused(const PyramidFeatures& prev, const PyramidFeatures& curr) const {
  if (!config.resfuser_enabled) return curr;
  return resfuser->fuse(prev, curr);
}

}  // namespace vistrack
