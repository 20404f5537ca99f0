#include "vistrack/resfuser.hpp"

#include "vistrack/errors.hpp"

namespace vistrack {

ResFuser::ResFuser(int channels, const std::vector<int>& levels, ParamSet& params, Rng& rng)
    : levels_(levels) {
  conv1_.resize(levels.size());
  conv2_.resize(levels.size());
  for (size_t i = 0; i < levels.size(); ++i) {
    std::string prefix = "resfuser/level" + std::to_string(levels[i]);
    conv1_[i].init(params, prefix + "/conv1", channels, 2 * channels, 3, 1, 1, rng);
    conv2_[i].init(params, prefix + "/conv2", channels, channels, 3, 1, 1, rng,
                   /*zero_init=*/true);
  }
}

PyramidFeatures ResFuser::fuse(const PyramidFeatures& prev, const PyramidFeatures& curr) const {
  if (prev.levels != curr.levels || prev.strides != curr.strides)
    throw ShapeError("fuse: pyramid level structure mismatch");
  if (prev.grids.size() != levels_.size())
    throw ShapeError("fuse: pyramid has " + std::to_string(prev.grids.size()) +
                     " levels, fuser built for " + std::to_string(levels_.size()));

  PyramidFeatures out;
  out.levels = curr.levels;
  out.strides = curr.strides;
  out.image_height = curr.image_height;
  out.image_width = curr.image_width;
  for (size_t i = 0; i < levels_.size(); ++i) {
    if (!prev.grids[i].value().same_shape(curr.grids[i].value()))
      throw ShapeError("fuse: shape mismatch at level " + std::to_string(levels_[i]) + ": " +
                       prev.grids[i].value().shape_str() + " vs " +
                       curr.grids[i].value().shape_str());
    Var residual =
        conv2_[i].forward(relu(conv1_[i].forward(concat_channels({prev.grids[i], curr.grids[i]}))));
    out.grids.push_back(add(residual, curr.grids[i]));
  }
  return out;
}

PyramidFeatures ResFuser::fuse_first_frame(const PyramidFeatures& curr) const {
  return fuse(curr, curr);
}

}  // namespace vistrack
