#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vistrack/config.hpp"
#include "vistrack/model.hpp"
#include "vistrack/tensor.hpp"

namespace vistrack {

struct Checkpoint {
  static constexpr uint32_t kVersion = 1;
  Config config;
  int iteration = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, Tensor>> parameters;  // keyed by module path
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint checkpoint_from_model(const Model& model, int iteration, const std::string& rng_state);
// Builds a model with the checkpoint's config and restores every parameter.
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace vistrack
