#pragma once

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include "vistrack/tensor.hpp"

namespace vistrack {

// Reverse-mode autodiff over Tensors. Every op builds one tape node; backward()
// runs the tape in reverse topological order. Graphs are per-forward-pass
// values; parameters are long-lived nodes whose grads accumulate across
// backward calls until zeroed by the optimizer.

struct TapeNode {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<TapeNode>> parents;
  std::function<void(TapeNode&)> backfn;  // scatter node.grad into parents

  Tensor& ensure_grad() {
    if (!grad.defined()) grad = Tensor::zeros(value.shape());
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var constant(Tensor value) { return Var(std::move(value), false); }
  static Var param(Tensor value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  Tensor& grad() { return node_->ensure_grad(); }
  bool has_grad() const { return node_->grad.defined(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::vector<int>& shape() const { return node_->value.shape(); }

  Tensor detach() const { return node_->value; }

  std::shared_ptr<TapeNode> node() const { return node_; }

  static Var from_node(std::shared_ptr<TapeNode> n) {
    Var v;
    v.node_ = std::move(n);
    return v;
  }

 private:
  std::shared_ptr<TapeNode> node_;
};

// Runs reverse accumulation from a scalar root (size-1 tensor).
void backward(const Var& root);

// Elementwise arithmetic (shapes must match).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var minimum(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);

Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);

// Elementwise functions.
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var softplus(const Var& x);  // numerically stable log(1 + e^x)
Var exp(const Var& x);
Var log(const Var& x);
Var pow_scalar(const Var& x, double p);
Var square(const Var& x);

// Stable elementwise binary cross-entropy on logits against constant targets.
Var bce_with_logits(const Var& logits, const Tensor& targets);

// Reductions.
Var sum(const Var& x);
Var mean(const Var& x);

// Shape ops.
Var reshape(const Var& x, std::vector<int> shape);
Var gather_rows(const Var& x, const std::vector<int>& idx);  // first axis
Var select_channel(const Var& x, int c);                     // [C,H,W] -> [H,W]
Var concat_channels(const std::vector<Var>& xs);             // along axis 0 of [C,H,W]

// Spatial ops on [C,H,W].
Var channel_max(const Var& x);   // -> [1,H,W]
Var channel_mean(const Var& x);  // -> [1,H,W]
Var mul_chanmap(const Var& x, const Var& a);  // x[C,H,W] * a[1,H,W]
Var upsample_nearest2(const Var& x);

// conv2d: x [Cin,H,W], w [Cout,Cin,kh,kw], b [Cout].
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

// linear: x [N,in], w [out,in], b [out] -> [N,out].
Var linear(const Var& x, const Var& w, const Var& b);

// RoI Align on one feature grid. Box is in feature-grid coordinates
// (x1,y1,x2,y2), output R x R, 2x2 bilinear samples per cell, averaged.
// Feature value at integer (c,r) is located at continuous coords (c,r).
Var roi_align(const Var& feat, const std::array<double, 4>& box, int resolution);

// Stacks rank-1 tensors [D] into [K,D].
Var stack_rows(const std::vector<Var>& rows);
// Concatenates [K,A] and [K,B] into [K,A+B].
Var concat_cols(const Var& a, const Var& b);

// Graph helpers. a [Ka,D], b [Kb,D] -> [Ka*Kb, 2D], row (i*Kb + j) = [a_i | b_j].
Var pairwise_concat(const Var& a, const Var& b);
// e [Ka*Kb, E] -> [Kb, E], out_j = sum_i e[i*Kb + j].
Var sum_group_rows(const Var& e, int ka, int kb);

}  // namespace vistrack
