#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vistrack/autograd.hpp"
#include "vistrack/rng.hpp"

namespace vistrack {

// Ordered registry of named trainable tensors. Names double as checkpoint keys.
class ParamSet {
 public:
  Var create(const std::string& name, Tensor init);
  Var* find(const std::string& name);
  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Var>>& entries() { return entries_; }

  void zero_grads();
  int64_t total_size() const;

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

// He-normal initialized tensors.
Tensor he_normal(std::vector<int> shape, int fan_in, Rng& rng);

struct Conv2dLayer {
  Var w, b;
  int stride = 1;
  int pad = 1;

  void init(ParamSet& params, const std::string& name, int cout, int cin, int k, int stride,
            int pad, Rng& rng, bool zero_init = false);
  Var forward(const Var& x) const { return conv2d(x, w, b, stride, pad); }
};

struct LinearLayer {
  Var w, b;

  void init(ParamSet& params, const std::string& name, int out, int in, Rng& rng,
            bool zero_init = false);
  Var forward(const Var& x) const { return linear(x, w, b); }
};

// Two-layer MLP with one ReLU in between.
struct Mlp {
  LinearLayer fc1, fc2;

  void init(ParamSet& params, const std::string& name, int out, int hidden, int in, Rng& rng,
            bool zero_init_last = false);
  Var forward(const Var& x) const { return fc2.forward(relu(fc1.forward(x))); }
};

// SGD with momentum and step-decay learning rate.
class SgdOptimizer {
 public:
  SgdOptimizer(ParamSet& params, double lr, double momentum);

  // milestones: iterations after which lr is multiplied by decay_factor.
  void set_schedule(std::vector<int> milestones, double decay_factor);
  double learning_rate(int iteration) const;

  void step(int iteration);
  void zero_grads() { params_->zero_grads(); }

 private:
  ParamSet* params_;
  double base_lr_;
  double momentum_;
  std::vector<int> milestones_;
  double decay_factor_ = 0.1;
  std::vector<Tensor> velocity_;
};

}  // namespace vistrack
