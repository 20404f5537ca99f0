#include "vistrack/nn.hpp"

#include <cmath>

#include "vistrack/errors.hpp"

namespace vistrack {

Var ParamSet::create(const std::string& name, Tensor init) {
  for (const auto& [n, v] : entries_)
    if (n == name) throw ValidationError("duplicate parameter name: " + name);
  Var v = Var::param(std::move(init));
  entries_.emplace_back(name, v);
  return v;
}

Var* ParamSet::find(const std::string& name) {
  for (auto& [n, v] : entries_)
    if (n == name) return &v;
  return nullptr;
}

void ParamSet::zero_grads() {
  for (auto& [n, v] : entries_)
    if (v.has_grad()) v.grad().zero();
}

int64_t ParamSet::total_size() const {
  int64_t total = 0;
  for (const auto& [n, v] : entries_) total += v.value().size();
  return total;
}

Tensor he_normal(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  double stddev = std::sqrt(2.0 / fan_in);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

void Conv2dLayer::init(ParamSet& params, const std::string& name, int cout, int cin, int k,
                       int stride_, int pad_, Rng& rng, bool zero_init) {
  stride = stride_;
  pad = pad_;
  Tensor wt = zero_init ? Tensor::zeros({cout, cin, k, k})
                        : he_normal({cout, cin, k, k}, cin * k * k, rng);
  w = params.create(name + "/w", std::move(wt));
  b = params.create(name + "/b", Tensor::zeros({cout}));
}

void LinearLayer::init(ParamSet& params, const std::string& name, int out, int in, Rng& rng,
                       bool zero_init) {
  Tensor wt = zero_init ? Tensor::zeros({out, in}) : he_normal({out, in}, in, rng);
  w = params.create(name + "/w", std::move(wt));
  b = params.create(name + "/b", Tensor::zeros({out}));
}

void Mlp::init(ParamSet& params, const std::string& name, int out, int hidden, int in, Rng& rng,
               bool zero_init_last) {
  fc1.init(params, name + "/fc1", hidden, in, rng);
  fc2.init(params, name + "/fc2", out, hidden, rng, zero_init_last);
}

SgdOptimizer::SgdOptimizer(ParamSet& params, double lr, double momentum)
    : params_(&params), base_lr_(lr), momentum_(momentum) {
  velocity_.reserve(params.entries().size());
  for (auto& [n, v] : params.entries()) velocity_.push_back(Tensor::zeros(v.value().shape()));
}

void SgdOptimizer::set_schedule(std::vector<int> milestones, double decay_factor) {
  milestones_ = std::move(milestones);
  decay_factor_ = decay_factor;
}

double SgdOptimizer::learning_rate(int iteration) const {
  double lr = base_lr_;
  for (int m : milestones_)
    if (iteration >= m) lr *= decay_factor_;
  return lr;
}

void SgdOptimizer::step(int iteration) {
  double lr = learning_rate(iteration);
  auto& entries = params_->entries();
  for (size_t p = 0; p < entries.size(); ++p) {
    Var& v = entries[p].second;
    if (!v.has_grad()) continue;
    Tensor& val = v.mutable_value();
    Tensor& g = v.grad();
    Tensor& vel = velocity_[p];
    for (int64_t i = 0; i < val.size(); ++i) {
      vel[i] = momentum_ * vel[i] + g[i];
      val[i] -= lr * vel[i];
    }
  }
}

}  // namespace vistrack
