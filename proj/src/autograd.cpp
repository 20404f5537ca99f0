#include "vistrack/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "vistrack/errors.hpp"

namespace vistrack {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

std::shared_ptr<TapeNode> make_node(Tensor value, const std::vector<Var>& parents,
                                    std::function<void(TapeNode&)> backfn) {
  auto n = std::make_shared<TapeNode>();
  n->value = std::move(value);
  bool rg = false;
  for (const Var& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->parents.reserve(parents.size());
    for (const Var& p : parents) n->parents.push_back(p.node());
    n->backfn = std::move(backfn);
  }
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.value().shape_str() + " vs " +
                     b.value().shape_str());
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

Var::Var(Tensor value, bool requires_grad) {
  node_ = std::make_shared<TapeNode>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void backward(const Var& root) {
  if (root.value().size() != 1) throw ShapeError("backward: root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS for a reverse topological order.
  std::vector<TapeNode*> order;
  std::unordered_set<TapeNode*> seen;
  std::vector<std::pair<TapeNode*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TapeNode* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TapeNode* n = *it;
    if (n->backfn && n->grad.defined()) n->backfn(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  const double* bd = b.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  auto an = a.node(), bn = b.node();
  return Var::from_node(make_node(std::move(out), {a, b}, [an, bn](TapeNode& n) {
    if (an->requires_grad) {
      Tensor& g = an->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (bn->requires_grad) {
      Tensor& g = bn->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  }));
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  const double* bd = b.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  auto an = a.node(), bn = b.node();
  return Var::from_node(make_node(std::move(out), {a, b}, [an, bn](TapeNode& n) {
    if (an->requires_grad) {
      Tensor& g = an->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (bn->requires_grad) {
      Tensor& g = bn->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  }));
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  const double* bd = b.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  auto an = a.node(), bn = b.node();
  return Var::from_node(make_node(std::move(out), {a, b}, [an, bn](TapeNode& n) {
    if (an->requires_grad) {
      Tensor& g = an->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      Tensor& g = bn->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * an->value[i];
    }
  }));
}

Var div(const Var& a, const Var& b) {
  check_same_shape(a, b, "div");
  Tensor out = a.value();
  const double* bd = b.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] /= bd[i];
  auto an = a.node(), bn = b.node();
  return Var::from_node(make_node(std::move(out), {a, b}, [an, bn](TapeNode& n) {
    for (int64_t i = 0; i < n.value.size(); ++i) {
      double inv_b = 1.0 / bn->value[i];
      if (an->requires_grad) an->ensure_grad()[i] += n.grad[i] * inv_b;
      if (bn->requires_grad) bn->ensure_grad()[i] -= n.grad[i] * n.value[i] * inv_b;
    }
  }));
}

Var minimum(const Var& a, const Var& b) {
  check_same_shape(a, b, "minimum");
  Tensor out = a.value();
  const double* bd = b.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], bd[i]);
  auto an = a.node(), bn = b.node();
  return Var::from_node(make_node(std::move(out), {a, b}, [an, bn](TapeNode& n) {
    for (int64_t i = 0; i < n.value.size(); ++i) {
      bool take_a = an->value[i] <= bn->value[i];
      if (take_a && an->requires_grad) an->ensure_grad()[i] += n.grad[i];
      if (!take_a && bn->requires_grad) bn->ensure_grad()[i] += n.grad[i];
    }
  }));
}

Var maximum(const Var& a, const Var& b) {
  check_same_shape(a, b, "maximum");
  Tensor out = a.value();
  const double* bd = b.value().data();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], bd[i]);
  auto an = a.node(), bn = b.node();
  return Var::from_node(make_node(std::move(out), {a, b}, [an, bn](TapeNode& n) {
    for (int64_t i = 0; i < n.value.size(); ++i) {
      bool take_a = an->value[i] >= bn->value[i];
      if (take_a && an->requires_grad) an->ensure_grad()[i] += n.grad[i];
      if (!take_a && bn->requires_grad) bn->ensure_grad()[i] += n.grad[i];
    }
  }));
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] += s;
  auto an = a.node();
  return Var::from_node(make_node(std::move(out), {a}, [an](TapeNode& n) {
    if (!an->requires_grad) return;
    Tensor& g = an->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  }));
}

Var mul_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= s;
  auto an = a.node();
  return Var::from_node(make_node(std::move(out), {a}, [an, s](TapeNode& n) {
    if (!an->requires_grad) return;
    Tensor& g = an->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
  }));
}

// ---------------------------------------------------------------------------
// Elementwise functions

Var relu(const Var& x) {
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], 0.0);
  auto xn = x.node();
  return Var::from_node(make_node(std::move(out), {x}, [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      if (xn->value[i] > 0.0) g[i] += n.grad[i];
  }));
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(out[i]);
  auto xn = x.node();
  return Var::from_node(make_node(std::move(out), {x}, [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
  }));
}

Var softplus(const Var& x) {
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = stable_softplus(out[i]);
  auto xn = x.node();
  return Var::from_node(make_node(std::move(out), {x}, [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * stable_sigmoid(xn->value[i]);
  }));
}

Var exp(const Var& x) {
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  auto xn = x.node();
  return Var::from_node(make_node(std::move(out), {x}, [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i];
  }));
}

Var log(const Var& x) {
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  auto xn = x.node();
  return Var::from_node(make_node(std::move(out), {x}, [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / xn->value[i];
  }));
}

Var pow_scalar(const Var& x, double p) {
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::pow(out[i], p);
  auto xn = x.node();
  return Var::from_node(make_node(std::move(out), {x}, [xn, p](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      g[i] += n.grad[i] * p * std::pow(xn->value[i], p - 1.0);
  }));
}

Var square(const Var& x) {
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= out[i];
  auto xn = x.node();
  return Var::from_node(make_node(std::move(out), {x}, [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * 2.0 * xn->value[i];
  }));
}

Var bce_with_logits(const Var& logits, const Tensor& targets) {
  if (!logits.value().same_shape(targets))
    throw ShapeError("bce_with_logits: target shape mismatch");
  Tensor out = logits.value();
  const double* t = targets.data();
  for (int64_t i = 0; i < out.size(); ++i) {
    double x = out[i];
    out[i] = std::max(x, 0.0) - x * t[i] + std::log1p(std::exp(-std::abs(x)));
  }
  auto xn = logits.node();
  Tensor tcopy = targets;
  return Var::from_node(make_node(std::move(out), {logits}, [xn, tcopy](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      g[i] += n.grad[i] * (stable_sigmoid(xn->value[i]) - tcopy[i]);
  }));
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(const Var& x) {
  double s = 0.0;
  for (int64_t i = 0; i < x.value().size(); ++i) s += x.value()[i];
  auto xn = x.node();
  return Var::from_node(make_node(Tensor::scalar(s), {x}, [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    double go = n.grad[0];
    for (int64_t i = 0; i < g.size(); ++i) g[i] += go;
  }));
}

Var mean(const Var& x) {
  int64_t count = x.value().size();
  double s = 0.0;
  for (int64_t i = 0; i < count; ++i) s += x.value()[i];
  auto xn = x.node();
  return Var::from_node(
      make_node(Tensor::scalar(s / static_cast<double>(count)), {x}, [xn, count](TapeNode& n) {
        if (!xn->requires_grad) return;
        Tensor& g = xn->ensure_grad();
        double go = n.grad[0] / static_cast<double>(count);
        for (int64_t i = 0; i < g.size(); ++i) g[i] += go;
      }));
}

// ---------------------------------------------------------------------------
// Shape ops

Var reshape(const Var& x, std::vector<int> shape) {
  if (shape_numel(shape) != x.value().size())
    throw ShapeError("reshape: element count mismatch");
  Tensor out = Tensor::from(std::move(shape), x.value().vec());
  auto xn = x.node();
  return Var::from_node(make_node(std::move(out), {x}, [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  }));
}

Var gather_rows(const Var& x, const std::vector<int>& idx) {
  const Tensor& v = x.value();
  int n_rows = v.dim(0);
  int64_t row_size = v.size() / n_rows;
  std::vector<int> out_shape = v.shape();
  out_shape[0] = static_cast<int>(idx.size());
  Tensor out(out_shape);
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= n_rows) throw ShapeError("gather_rows: index out of range");
    std::copy_n(v.data() + idx[r] * row_size, row_size, out.data() + r * row_size);
  }
  auto xn = x.node();
  std::vector<int> idx_copy = idx;
  return Var::from_node(make_node(std::move(out), {x}, [xn, idx_copy, row_size](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    for (size_t r = 0; r < idx_copy.size(); ++r)
      for (int64_t k = 0; k < row_size; ++k)
        g[idx_copy[r] * row_size + k] += n.grad[r * row_size + k];
  }));
}

Var select_channel(const Var& x, int c) {
  const Tensor& v = x.value();
  if (v.rank() != 3 || c < 0 || c >= v.dim(0)) throw ShapeError("select_channel: bad channel");
  int h = v.dim(1), w = v.dim(2);
  int64_t plane = static_cast<int64_t>(h) * w;
  Tensor out({h, w});
  std::copy_n(v.data() + c * plane, plane, out.data());
  auto xn = x.node();
  return Var::from_node(make_node(std::move(out), {x}, [xn, c, plane](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    for (int64_t i = 0; i < plane; ++i) g[c * plane + i] += n.grad[i];
  }));
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input");
  int h = xs[0].value().dim(1), w = xs[0].value().dim(2);
  int total_c = 0;
  for (const Var& x : xs) {
    if (x.value().rank() != 3 || x.value().dim(1) != h || x.value().dim(2) != w)
      throw ShapeError("concat_channels: spatial shape mismatch");
    total_c += x.value().dim(0);
  }
  Tensor out({total_c, h, w});
  int64_t offset = 0;
  for (const Var& x : xs) {
    std::copy_n(x.value().data(), x.value().size(), out.data() + offset);
    offset += x.value().size();
  }
  std::vector<std::shared_ptr<TapeNode>> nodes;
  for (const Var& x : xs) nodes.push_back(x.node());
  return Var::from_node(make_node(std::move(out), xs, [nodes](TapeNode& n) {
    int64_t offset = 0;
    for (auto& pn : nodes) {
      int64_t sz = pn->value.size();
      if (pn->requires_grad) {
        Tensor& g = pn->ensure_grad();
        for (int64_t i = 0; i < sz; ++i) g[i] += n.grad[offset + i];
      }
      offset += sz;
    }
  }));
}

// ---------------------------------------------------------------------------
// Spatial ops

Var channel_max(const Var& x) {
  const Tensor& v = x.value();
  int c = v.dim(0), h = v.dim(1), w = v.dim(2);
  int64_t plane = static_cast<int64_t>(h) * w;
  Tensor out({1, h, w});
  auto argmax = std::make_shared<std::vector<int>>(plane, 0);
  for (int64_t i = 0; i < plane; ++i) {
    double best = v[i];
    int bc = 0;
    for (int ci = 1; ci < c; ++ci) {
      double val = v[ci * plane + i];
      if (val > best) {
        best = val;
        bc = ci;
      }
    }
    out[i] = best;
    (*argmax)[i] = bc;
  }
  auto xn = x.node();
  return Var::from_node(make_node(std::move(out), {x}, [xn, argmax, plane](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    for (int64_t i = 0; i < plane; ++i) g[(*argmax)[i] * plane + i] += n.grad[i];
  }));
}

Var channel_mean(const Var& x) {
  const Tensor& v = x.value();
  int c = v.dim(0), h = v.dim(1), w = v.dim(2);
  int64_t plane = static_cast<int64_t>(h) * w;
  Tensor out({1, h, w});
  for (int64_t i = 0; i < plane; ++i) {
    double s = 0.0;
    for (int ci = 0; ci < c; ++ci) s += v[ci * plane + i];
    out[i] = s / c;
  }
  auto xn = x.node();
  return Var::from_node(make_node(std::move(out), {x}, [xn, c, plane](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    for (int64_t i = 0; i < plane; ++i) {
      double go = n.grad[i] / c;
      for (int ci = 0; ci < c; ++ci) g[ci * plane + i] += go;
    }
  }));
}

Var mul_chanmap(const Var& x, const Var& a) {
  const Tensor& v = x.value();
  const Tensor& m = a.value();
  if (m.rank() != 3 || m.dim(0) != 1 || m.dim(1) != v.dim(1) || m.dim(2) != v.dim(2))
    throw ShapeError("mul_chanmap: map shape mismatch");
  int c = v.dim(0);
  int64_t plane = static_cast<int64_t>(v.dim(1)) * v.dim(2);
  Tensor out = v;
  for (int ci = 0; ci < c; ++ci)
    for (int64_t i = 0; i < plane; ++i) out[ci * plane + i] *= m[i];
  auto xn = x.node(), an = a.node();
  return Var::from_node(make_node(std::move(out), {x, a}, [xn, an, c, plane](TapeNode& n) {
    if (xn->requires_grad) {
      Tensor& g = xn->ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int64_t i = 0; i < plane; ++i)
          g[ci * plane + i] += n.grad[ci * plane + i] * an->value[i];
    }
    if (an->requires_grad) {
      Tensor& g = an->ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int64_t i = 0; i < plane; ++i)
          g[i] += n.grad[ci * plane + i] * xn->value[ci * plane + i];
    }
  }));
}

Var upsample_nearest2(const Var& x) {
  const Tensor& v = x.value();
  int c = v.dim(0), h = v.dim(1), w = v.dim(2);
  Tensor out({c, 2 * h, 2 * w});
  for (int ci = 0; ci < c; ++ci)
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col) {
        double val = v.at(ci, r, col);
        out.at(ci, 2 * r, 2 * col) = val;
        out.at(ci, 2 * r, 2 * col + 1) = val;
        out.at(ci, 2 * r + 1, 2 * col) = val;
        out.at(ci, 2 * r + 1, 2 * col + 1) = val;
      }
  auto xn = x.node();
  return Var::from_node(make_node(std::move(out), {x}, [xn, c, h, w](TapeNode& n) {
    if (!xn->requires_grad) return;
    Tensor& g = xn->ensure_grad();
    for (int ci = 0; ci < c; ++ci)
      for (int r = 0; r < h; ++r)
        for (int col = 0; col < w; ++col)
          g.at(ci, r, col) += n.grad.at(ci, 2 * r, 2 * col) + n.grad.at(ci, 2 * r, 2 * col + 1) +
                              n.grad.at(ci, 2 * r + 1, 2 * col) +
                              n.grad.at(ci, 2 * r + 1, 2 * col + 1);
  }));
}

// ---------------------------------------------------------------------------
// conv2d (im2col + GEMM)

namespace {

Tensor im2col(const Tensor& x, int kh, int kw, int stride, int pad, int hout, int wout) {
  int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor col({cin * kh * kw, hout * wout});
  for (int ci = 0; ci < cin; ++ci)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        int row = (ci * kh + ky) * kw + kx;
        double* dst = col.data() + static_cast<int64_t>(row) * hout * wout;
        for (int oy = 0; oy < hout; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            dst += wout;
            continue;
          }
          const double* src = x.data() + (static_cast<int64_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < wout; ++ox, ++dst) {
            int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) *dst = src[ix];
          }
        }
      }
  return col;
}

void col2im_accumulate(const Tensor& col, Tensor& dx, int kh, int kw, int stride, int pad,
                       int hout, int wout) {
  int cin = dx.dim(0), h = dx.dim(1), w = dx.dim(2);
  for (int ci = 0; ci < cin; ++ci)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        int row = (ci * kh + ky) * kw + kx;
        const double* src = col.data() + static_cast<int64_t>(row) * hout * wout;
        for (int oy = 0; oy < hout; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            src += wout;
            continue;
          }
          double* dst = dx.data() + (static_cast<int64_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < wout; ++ox, ++src) {
            int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += *src;
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 3 || wv.rank() != 4) throw ShapeError("conv2d: expects x[C,H,W], w[O,C,kh,kw]");
  int cin = xv.dim(0), h = xv.dim(1), win = xv.dim(2);
  int cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != cin)
    throw ShapeError("conv2d: input channels " + std::to_string(cin) + " do not match weight " +
                     std::to_string(wv.dim(1)));
  int hout = (h + 2 * pad - kh) / stride + 1;
  int wout = (win + 2 * pad - kw) / stride + 1;
  if (hout <= 0 || wout <= 0) throw ShapeError("conv2d: output would be empty");

  auto col = std::make_shared<Tensor>(im2col(xv, kh, kw, stride, pad, hout, wout));
  int k = cin * kh * kw;
  int hw = hout * wout;

  Tensor out({cout, hout, wout});
  {
    CMapM wm(wv.data(), cout, k);
    CMapM cm(col->data(), k, hw);
    MapM om(out.data(), cout, hw);
    om.noalias() = wm * cm;
    for (int oc = 0; oc < cout; ++oc) om.row(oc).array() += b.value()[oc];
  }

  auto xn = x.node(), wn = w.node(), bn = b.node();
  return Var::from_node(make_node(
      std::move(out), {x, w, b}, [xn, wn, bn, col, stride, pad, kh, kw, hout, wout](TapeNode& n) {
        int cout = n.value.dim(0);
        int hw = hout * wout;
        int k = col->dim(0);
        CMapM gout(n.grad.data(), cout, hw);
        if (wn->requires_grad) {
          MapM dw(wn->ensure_grad().data(), cout, k);
          CMapM cm(col->data(), k, hw);
          dw.noalias() += gout * cm.transpose();
        }
        if (bn->requires_grad) {
          Tensor& db = bn->ensure_grad();
          for (int oc = 0; oc < cout; ++oc) db[oc] += gout.row(oc).sum();
        }
        if (xn->requires_grad) {
          Tensor dcol({k, hw});
          MapM dcm(dcol.data(), k, hw);
          CMapM wm(wn->value.data(), cout, k);
          dcm.noalias() = wm.transpose() * gout;
          col2im_accumulate(dcol, xn->ensure_grad(), kh, kw, stride, pad, hout, wout);
        }
      }));
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1))
    throw ShapeError("linear: shape mismatch " + xv.shape_str() + " vs " + wv.shape_str());
  int n_rows = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
  Tensor out({n_rows, out_dim});
  {
    CMapM xm(xv.data(), n_rows, in);
    CMapM wm(wv.data(), out_dim, in);
    MapM om(out.data(), n_rows, out_dim);
    om.noalias() = xm * wm.transpose();
    for (int r = 0; r < n_rows; ++r)
      for (int c = 0; c < out_dim; ++c) om(r, c) += b.value()[c];
  }
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return Var::from_node(make_node(std::move(out), {x, w, b}, [xn, wn, bn](TapeNode& n) {
    int n_rows = n.value.dim(0), out_dim = n.value.dim(1);
    int in = xn->value.dim(1);
    CMapM gout(n.grad.data(), n_rows, out_dim);
    CMapM xm(xn->value.data(), n_rows, in);
    CMapM wm(wn->value.data(), out_dim, in);
    if (wn->requires_grad) {
      MapM dw(wn->ensure_grad().data(), out_dim, in);
      dw.noalias() += gout.transpose() * xm;
    }
    if (bn->requires_grad) {
      Tensor& db = bn->ensure_grad();
      for (int c = 0; c < out_dim; ++c) db[c] += gout.col(c).sum();
    }
    if (xn->requires_grad) {
      MapM dx(xn->ensure_grad().data(), n_rows, in);
      dx.noalias() += gout * wm;
    }
  }));
}

// ---------------------------------------------------------------------------
// RoI Align

namespace {

struct BilinearTap {
  int x0, x1, y0, y1;
  double fx, fy;
};

BilinearTap clamped_tap(double x, double y, int w, int h) {
  BilinearTap t;
  double xc = std::min(std::max(x, 0.0), static_cast<double>(w - 1));
  double yc = std::min(std::max(y, 0.0), static_cast<double>(h - 1));
  t.x0 = static_cast<int>(std::floor(xc));
  t.y0 = static_cast<int>(std::floor(yc));
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.fx = xc - t.x0;
  t.fy = yc - t.y0;
  return t;
}

}  // namespace

Var roi_align(const Var& feat, const std::array<double, 4>& box, int resolution) {
  const Tensor& v = feat.value();
  if (v.rank() != 3) throw ShapeError("roi_align: expects [C,h,w] features");
  double x1 = box[0], y1 = box[1], x2 = box[2], y2 = box[3];
  if (!(x2 > x1) || !(y2 > y1)) throw ShapeError("roi_align: degenerate box");
  int c = v.dim(0), h = v.dim(1), w = v.dim(2);
  int r = resolution;
  double bw = (x2 - x1) / r;
  double bh = (y2 - y1) / r;

  // 2x2 sub-cell samples at fractions 0.25 and 0.75, averaged per cell.
  auto taps = std::make_shared<std::vector<BilinearTap>>();
  taps->reserve(static_cast<size_t>(r) * r * 4);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j)
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          double sxp = x1 + (j + 0.25 + 0.5 * sx) * bw;
          double syp = y1 + (i + 0.25 + 0.5 * sy) * bh;
          taps->push_back(clamped_tap(sxp, syp, w, h));
        }

  Tensor out({c, r, r});
  for (int ci = 0; ci < c; ++ci) {
    const double* plane = v.data() + static_cast<int64_t>(ci) * h * w;
    for (int cell = 0; cell < r * r; ++cell) {
      double acc = 0.0;
      for (int s = 0; s < 4; ++s) {
        const BilinearTap& t = (*taps)[cell * 4 + s];
        double top = plane[t.y0 * w + t.x0] * (1 - t.fx) + plane[t.y0 * w + t.x1] * t.fx;
        double bot = plane[t.y1 * w + t.x0] * (1 - t.fx) + plane[t.y1 * w + t.x1] * t.fx;
        acc += top * (1 - t.fy) + bot * t.fy;
      }
      out[static_cast<int64_t>(ci) * r * r + cell] = acc * 0.25;
    }
  }

  auto fn = feat.node();
  return Var::from_node(make_node(std::move(out), {feat}, [fn, taps, r](TapeNode& n) {
    if (!fn->requires_grad) return;
    int c = fn->value.dim(0), h = fn->value.dim(1), w = fn->value.dim(2);
    Tensor& g = fn->ensure_grad();
    for (int ci = 0; ci < c; ++ci) {
      double* gplane = g.data() + static_cast<int64_t>(ci) * h * w;
      for (int cell = 0; cell < r * r; ++cell) {
        double go = n.grad[static_cast<int64_t>(ci) * r * r + cell] * 0.25;
        for (int s = 0; s < 4; ++s) {
          const BilinearTap& t = (*taps)[cell * 4 + s];
          gplane[t.y0 * w + t.x0] += go * (1 - t.fx) * (1 - t.fy);
          gplane[t.y0 * w + t.x1] += go * t.fx * (1 - t.fy);
          gplane[t.y1 * w + t.x0] += go * (1 - t.fx) * t.fy;
          gplane[t.y1 * w + t.x1] += go * t.fx * t.fy;
        }
      }
    }
  }));
}

// ---------------------------------------------------------------------------
// Graph helpers

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: empty input");
  int d = static_cast<int>(rows[0].value().size());
  Tensor out({static_cast<int>(rows.size()), d});
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].value().size() != d) throw ShapeError("stack_rows: row size mismatch");
    std::copy_n(rows[r].value().data(), d, out.data() + r * d);
  }
  std::vector<std::shared_ptr<TapeNode>> nodes;
  for (const Var& r : rows) nodes.push_back(r.node());
  return Var::from_node(make_node(std::move(out), rows, [nodes, d](TapeNode& n) {
    for (size_t r = 0; r < nodes.size(); ++r) {
      if (!nodes[r]->requires_grad) continue;
      Tensor& g = nodes[r]->ensure_grad();
      for (int k = 0; k < d; ++k) g[k] += n.grad[r * d + k];
    }
  }));
}

Var concat_cols(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(0) != bv.dim(0))
    throw ShapeError("concat_cols: expects [K,A] and [K,B]");
  int k = av.dim(0), da = av.dim(1), db = bv.dim(1);
  Tensor out({k, da + db});
  for (int r = 0; r < k; ++r) {
    std::copy_n(av.data() + static_cast<int64_t>(r) * da, da,
                out.data() + static_cast<int64_t>(r) * (da + db));
    std::copy_n(bv.data() + static_cast<int64_t>(r) * db, db,
                out.data() + static_cast<int64_t>(r) * (da + db) + da);
  }
  auto an = a.node(), bn = b.node();
  return Var::from_node(make_node(std::move(out), {a, b}, [an, bn, k, da, db](TapeNode& n) {
    for (int r = 0; r < k; ++r) {
      const double* row = n.grad.data() + static_cast<int64_t>(r) * (da + db);
      if (an->requires_grad) {
        double* ga = an->ensure_grad().data() + static_cast<int64_t>(r) * da;
        for (int i = 0; i < da; ++i) ga[i] += row[i];
      }
      if (bn->requires_grad) {
        double* gb = bn->ensure_grad().data() + static_cast<int64_t>(r) * db;
        for (int i = 0; i < db; ++i) gb[i] += row[da + i];
      }
    }
  }));
}

Var pairwise_concat(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1))
    throw ShapeError("pairwise_concat: expects [Ka,D] and [Kb,D]");
  int ka = av.dim(0), kb = bv.dim(0), d = av.dim(1);
  Tensor out({ka * kb, 2 * d});
  for (int i = 0; i < ka; ++i)
    for (int j = 0; j < kb; ++j) {
      double* row = out.data() + static_cast<int64_t>(i * kb + j) * 2 * d;
      std::copy_n(av.data() + static_cast<int64_t>(i) * d, d, row);
      std::copy_n(bv.data() + static_cast<int64_t>(j) * d, d, row + d);
    }
  auto an = a.node(), bn = b.node();
  return Var::from_node(make_node(std::move(out), {a, b}, [an, bn, ka, kb, d](TapeNode& n) {
    for (int i = 0; i < ka; ++i)
      for (int j = 0; j < kb; ++j) {
        const double* row = n.grad.data() + static_cast<int64_t>(i * kb + j) * 2 * d;
        if (an->requires_grad) {
          double* ga = an->ensure_grad().data() + static_cast<int64_t>(i) * d;
          for (int k = 0; k < d; ++k) ga[k] += row[k];
        }
        if (bn->requires_grad) {
          double* gb = bn->ensure_grad().data() + static_cast<int64_t>(j) * d;
          for (int k = 0; k < d; ++k) gb[k] += row[d + k];
        }
      }
  }));
}

Var sum_group_rows(const Var& e, int ka, int kb) {
  const Tensor& v = e.value();
  if (v.rank() != 2 || v.dim(0) != ka * kb) throw ShapeError("sum_group_rows: bad edge count");
  int dim = v.dim(1);
  Tensor out({kb, dim});
  for (int i = 0; i < ka; ++i)
    for (int j = 0; j < kb; ++j) {
      const double* row = v.data() + static_cast<int64_t>(i * kb + j) * dim;
      double* dst = out.data() + static_cast<int64_t>(j) * dim;
      for (int k = 0; k < dim; ++k) dst[k] += row[k];
    }
  auto en = e.node();
  return Var::from_node(make_node(std::move(out), {e}, [en, ka, kb, dim](TapeNode& n) {
    if (!en->requires_grad) return;
    Tensor& g = en->ensure_grad();
    for (int i = 0; i < ka; ++i)
      for (int j = 0; j < kb; ++j) {
        double* row = g.data() + static_cast<int64_t>(i * kb + j) * dim;
        const double* src = n.grad.data() + static_cast<int64_t>(j) * dim;
        for (int k = 0; k < dim; ++k) row[k] += src[k];
      }
  }));
}

}  // namespace vistrack
