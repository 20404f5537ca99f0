#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "vistrack/autograd.hpp"
#include "vistrack/nn.hpp"
#include "vistrack/rng.hpp"

namespace vistrack::testing {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int checked = 0;
};

// Central finite differences against the tape gradients. `fn` must rebuild the
// forward graph from the current parameter values and return a scalar loss.
// `n_samples` (param, element) pairs are drawn across the full parameter set.
inline GradCheckResult gradcheck(const std::function<Var()>& fn, std::vector<Var> params,
                                 int n_samples, Rng& rng, double step = 1e-5) {
  for (Var& p : params) p.grad().zero();
  Var loss = fn();
  backward(loss);

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Var& p : params) analytic.push_back(p.grad());

  GradCheckResult result;
  for (int s = 0; s < n_samples; ++s) {
    int pi = static_cast<int>(rng.randint(0, static_cast<int>(params.size()) - 1));
    Tensor& value = params[pi].mutable_value();
    int64_t ei = rng.randint(0, value.size() - 1);

    double saved = value[ei];
    value[ei] = saved + step;
    double f_plus = fn().value().item();
    value[ei] = saved - step;
    double f_minus = fn().value().item();
    value[ei] = saved;

    double fd = (f_plus - f_minus) / (2.0 * step);
    double an = analytic[pi][ei];
    double rel = std::abs(an - fd) / std::max(std::abs(an) + std::abs(fd), 1e-6);
    result.max_rel_err = std::max(result.max_rel_err, rel);
    ++result.checked;
  }
  for (Var& p : params) p.grad().zero();
  return result;
}

inline std::vector<Var> all_params(ParamSet& ps) {
  std::vector<Var> out;
  for (auto& [name, v] : ps.entries()) out.push_back(v);
  return out;
}

}  // namespace vistrack::testing
