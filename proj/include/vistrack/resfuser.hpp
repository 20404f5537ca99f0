#pragma once

#include <vector>

#include "vistrack/nn.hpp"
#include "vistrack/perception.hpp"

namespace vistrack {

// Residual temporal fusion: per pyramid level a two-layer CNN maps the channel
// concatenation of the previous and current features to a correction that is
// added onto the current features. The final layer starts at zero so a fresh
// model reproduces the single-frame pipeline exactly.
class ResFuser {
 public:
  ResFuser(int channels, const std::vector<int>& levels, ParamSet& params, Rng& rng);

  PyramidFeatures fuse(const PyramidFeatures& prev, const PyramidFeatures& curr) const;
  // Boundary condition for the first frame of a clip: fuse(curr, curr).
  PyramidFeatures fuse_first_frame(const PyramidFeatures& curr) const;

 private:
  std::vector<int> levels_;
  std::vector<Conv2dLayer> conv1_, conv2_;
};

}  // namespace vistrack
