#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "skullstrip/errors.hpp"

namespace skullstrip {

// Reverse-mode tape over n-d float arrays. Each op builds a result node
// holding a closure that scatters the result's grad into its parents.
// First-order only; graphs are confined to one thread.

namespace autograd {

inline size_t numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  return n;
}

struct Node {
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;  // nonempty iff tracked
  bool tracked = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;
};

inline thread_local int no_grad_depth = 0;

}  // namespace autograd

/// RAII switch that disables tape recording (inference mode).
struct NoGradGuard {
  NoGradGuard() { ++autograd::no_grad_depth; }
  ~NoGradGuard() { --autograd::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class DiffTensor {
 public:
  DiffTensor() = default;

  static DiffTensor zeros(std::vector<int> shape, bool tracked = false) {
    return make(std::move(shape), {}, tracked, true);
  }
  static DiffTensor from(std::vector<int> shape, std::vector<float> values,
                         bool tracked = false) {
    return make(std::move(shape), std::move(values), tracked, false);
  }

  const std::vector<int>& shape() const { return node_->shape; }
  size_t numel() const { return node_->value.size(); }
  std::vector<float>& value() { return node_->value; }
  const std::vector<float>& value() const { return node_->value; }
  std::vector<float>& grad() { return node_->grad; }
  const std::vector<float>& grad() const { return node_->grad; }
  bool tracked() const { return node_->tracked; }

  void zero_grad() {
    if (node_->tracked) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
  }

  /// Drops any recorded producer; used when reusing parameter tensors
  /// across training steps.
  void detach_history() {
    node_->parents.clear();
    node_->backward_fn = nullptr;
  }

  std::shared_ptr<autograd::Node> node() const { return node_; }

  static DiffTensor wrap(std::shared_ptr<autograd::Node> node) {
    DiffTensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  static DiffTensor make(std::vector<int> shape, std::vector<float> values,
                         bool tracked, bool zero_fill) {
    auto node = std::make_shared<autograd::Node>();
    const size_t n = autograd::numel(shape);
    node->shape = std::move(shape);
    if (zero_fill)
      node->value.assign(n, 0.0f);
    else {
      if (values.size() != n)
        throw ShapeMismatch("tensor init: " + std::to_string(values.size()) +
                            " values for " + std::to_string(n) + " elements");
      node->value = std::move(values);
    }
    node->tracked = tracked;
    if (tracked) node->grad.assign(n, 0.0f);
    return wrap(node);
  }

  std::shared_ptr<autograd::Node> node_;
};

namespace autograd {

inline std::shared_ptr<Node> result_node(std::vector<int> shape,
                                         std::vector<std::shared_ptr<Node>> parents) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value.assign(numel(node->shape), 0.0f);
  bool track = no_grad_depth == 0 &&
               std::any_of(parents.begin(), parents.end(),
                           [](const auto& p) { return p->tracked; });
  node->tracked = track;
  if (track) {
    node->grad.assign(node->value.size(), 0.0f);
    node->parents = std::move(parents);
  }
  return node;
}

}  // namespace autograd

// ---------------------------------------------------------------------------
// operators

/// Zero-padded cross-correlation. input [N,C,H,W], kernel [F,C,kh,kw],
/// bias [F]. Per output element the sum starts at the bias and accumulates
/// terms in (c, kh, kw) order, in f32.
inline DiffTensor conv2d(const DiffTensor& input, const DiffTensor& kernel,
                         const DiffTensor& bias, int padding = 0, int stride = 1) {
  const auto& is = input.shape();
  const auto& ks = kernel.shape();
  if (is.size() != 4 || ks.size() != 4 || bias.shape().size() != 1)
    throw ShapeMismatch("conv2d: ranks must be 4/4/1");
  const int N = is[0], C = is[1], H = is[2], W = is[3];
  const int F = ks[0], kh = ks[2], kw = ks[3];
  if (ks[1] != C) throw ShapeMismatch("conv2d: channel mismatch");
  if (bias.shape()[0] != F) throw ShapeMismatch("conv2d: bias size mismatch");
  if (stride < 1) throw ShapeMismatch("conv2d: stride must be >= 1");
  if (kh > H + 2 * padding || kw > W + 2 * padding)
    throw ShapeMismatch("conv2d: kernel larger than padded input");
  const int OH = (H + 2 * padding - kh) / stride + 1;
  const int OW = (W + 2 * padding - kw) / stride + 1;

  auto in_n = input.node();
  auto k_n = kernel.node();
  auto b_n = bias.node();
  auto out = autograd::result_node({N, F, OH, OW}, {in_n, k_n, b_n});

  const float* in = in_n->value.data();
  const float* ker = k_n->value.data();
  const float* b = b_n->value.data();
  float* o = out->value.data();
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f) {
      float* oplane = o + (static_cast<size_t>(n) * F + f) * OH * OW;
      for (size_t i = 0; i < static_cast<size_t>(OH) * OW; ++i) oplane[i] = b[f];
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < kh; ++y)
          for (int x = 0; x < kw; ++x) {
            const float kv = ker[((static_cast<size_t>(f) * C + c) * kh + y) * kw + x];
            for (int oy = 0; oy < OH; ++oy) {
              const int iy = oy * stride + y - padding;
              if (iy < 0 || iy >= H) continue;
              float* orow = oplane + static_cast<size_t>(oy) * OW;
              const float* irow0 =
                  in + ((static_cast<size_t>(n) * C + c) * H + iy) * W;
              if (stride == 1) {
                const int x0 = std::max(0, padding - x);
                const int x1 = std::min(OW, W + padding - x);
                const float* irow = irow0 + (x0 + x - padding);
                for (int ox = x0; ox < x1; ++ox) orow[ox] += kv * irow[ox - x0];
              } else {
                for (int ox = 0; ox < OW; ++ox) {
                  const int ix = ox * stride + x - padding;
                  if (ix >= 0 && ix < W) orow[ox] += kv * irow0[ix];
                }
              }
            }
          }
    }

  if (out->tracked) {
    auto out_w = out;
    out->backward_fn = [out_w, in_n, k_n, b_n, N, C, H, W, F, kh, kw, OH, OW,
                        padding, stride]() {
      const float* go = out_w->grad.data();
      const float* in = in_n->value.data();
      const float* ker = k_n->value.data();
      for (int n = 0; n < N; ++n)
        for (int f = 0; f < F; ++f) {
          const float* gplane = go + (static_cast<size_t>(n) * F + f) * OH * OW;
          if (b_n->tracked) {
            float s = 0.0f;
            for (size_t i = 0; i < static_cast<size_t>(OH) * OW; ++i) s += gplane[i];
            b_n->grad[f] += s;
          }
          for (int c = 0; c < C; ++c)
            for (int y = 0; y < kh; ++y)
              for (int x = 0; x < kw; ++x) {
                const size_t ki = ((static_cast<size_t>(f) * C + c) * kh + y) * kw + x;
                const float kv = ker[ki];
                float gk = 0.0f;
                for (int oy = 0; oy < OH; ++oy) {
                  const int iy = oy * stride + y - padding;
                  if (iy < 0 || iy >= H) continue;
                  const float* grow = gplane + static_cast<size_t>(oy) * OW;
                  const size_t ibase =
                      ((static_cast<size_t>(n) * C + c) * H + iy) * W;
                  for (int ox = 0; ox < OW; ++ox) {
                    const int ix = ox * stride + x - padding;
                    if (ix < 0 || ix >= W) continue;
                    gk += grow[ox] * in[ibase + ix];
                    if (in_n->tracked) in_n->grad[ibase + ix] += kv * grow[ox];
                  }
                }
                if (k_n->tracked) k_n->grad[ki] += gk;
              }
        }
    };
  }
  return DiffTensor::wrap(out);
}

inline DiffTensor relu(const DiffTensor& x) {
  auto x_n = x.node();
  auto out = autograd::result_node(x.shape(), {x_n});
  for (size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = x_n->value[i] > 0.0f ? x_n->value[i] : 0.0f;
  if (out->tracked) {
    auto out_w = out;
    out->backward_fn = [out_w, x_n]() {
      for (size_t i = 0; i < out_w->grad.size(); ++i)
        if (x_n->value[i] > 0.0f) x_n->grad[i] += out_w->grad[i];
    };
  }
  return DiffTensor::wrap(out);
}

inline DiffTensor sigmoid(const DiffTensor& x) {
  auto x_n = x.node();
  auto out = autograd::result_node(x.shape(), {x_n});
  for (size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = 1.0f / (1.0f + std::exp(-x_n->value[i]));
  if (out->tracked) {
    auto out_w = out;
    out->backward_fn = [out_w, x_n]() {
      for (size_t i = 0; i < out_w->grad.size(); ++i) {
        const float s = out_w->value[i];
        x_n->grad[i] += out_w->grad[i] * s * (1.0f - s);
      }
    };
  }
  return DiffTensor::wrap(out);
}

/// 2x2 window, stride 2. Backward routes each window's grad to its argmax
/// (first occurrence in row-major window order on ties).
inline DiffTensor max_pool2d(const DiffTensor& x) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ShapeMismatch("max_pool2d: rank must be 4");
  const int N = s[0], C = s[1], H = s[2], W = s[3];
  if (H % 2 != 0 || W % 2 != 0) throw ShapeMismatch("max_pool2d: extents must be even");
  const int OH = H / 2, OW = W / 2;
  auto x_n = x.node();
  auto out = autograd::result_node({N, C, OH, OW}, {x_n});
  auto argmax = std::make_shared<std::vector<size_t>>(out->value.size());
  const float* in = x_n->value.data();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const size_t ibase = (static_cast<size_t>(n) * C + c) * H * W;
      const size_t obase = (static_cast<size_t>(n) * C + c) * OH * OW;
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          size_t best = ibase + static_cast<size_t>(2 * oy) * W + 2 * ox;
          float bv = in[best];
          const size_t cand[3] = {best + 1, best + W, best + W + 1};
          for (size_t idx : cand)
            if (in[idx] > bv) {
              bv = in[idx];
              best = idx;
            }
          out->value[obase + static_cast<size_t>(oy) * OW + ox] = bv;
          (*argmax)[obase + static_cast<size_t>(oy) * OW + ox] = best;
        }
    }
  if (out->tracked) {
    auto out_w = out;
    out->backward_fn = [out_w, x_n, argmax]() {
      for (size_t i = 0; i < out_w->grad.size(); ++i)
        x_n->grad[(*argmax)[i]] += out_w->grad[i];
    };
  }
  return DiffTensor::wrap(out);
}

/// Nearest-neighbor 2x upsampling; backward sums each 2x2 block.
inline DiffTensor upsample2x(const DiffTensor& x) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ShapeMismatch("upsample2x: rank must be 4");
  const int N = s[0], C = s[1], H = s[2], W = s[3];
  const int OH = 2 * H, OW = 2 * W;
  auto x_n = x.node();
  auto out = autograd::result_node({N, C, OH, OW}, {x_n});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const size_t ibase = (static_cast<size_t>(n) * C + c) * H * W;
      const size_t obase = (static_cast<size_t>(n) * C + c) * OH * OW;
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox)
          out->value[obase + static_cast<size_t>(oy) * OW + ox] =
              x_n->value[ibase + static_cast<size_t>(oy / 2) * W + ox / 2];
    }
  if (out->tracked) {
    auto out_w = out;
    out->backward_fn = [out_w, x_n, N, C, H, W, OH, OW]() {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const size_t ibase = (static_cast<size_t>(n) * C + c) * H * W;
          const size_t obase = (static_cast<size_t>(n) * C + c) * OH * OW;
          for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox)
              x_n->grad[ibase + static_cast<size_t>(oy / 2) * W + ox / 2] +=
                  out_w->grad[obase + static_cast<size_t>(oy) * OW + ox];
        }
    };
  }
  return DiffTensor::wrap(out);
}

/// Channel concatenation of [N,Ca,H,W] and [N,Cb,H,W].
inline DiffTensor concat_channels(const DiffTensor& a, const DiffTensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] ||
      sa[3] != sb[3])
    throw ShapeMismatch("concat_channels: N,H,W must match");
  const int N = sa[0], Ca = sa[1], Cb = sb[1], H = sa[2], W = sa[3];
  const size_t plane = static_cast<size_t>(H) * W;
  auto a_n = a.node();
  auto b_n = b.node();
  auto out = autograd::result_node({N, Ca + Cb, H, W}, {a_n, b_n});
  for (int n = 0; n < N; ++n) {
    std::copy_n(a_n->value.data() + static_cast<size_t>(n) * Ca * plane, Ca * plane,
                out->value.data() + static_cast<size_t>(n) * (Ca + Cb) * plane);
    std::copy_n(b_n->value.data() + static_cast<size_t>(n) * Cb * plane, Cb * plane,
                out->value.data() + (static_cast<size_t>(n) * (Ca + Cb) + Ca) * plane);
  }
  if (out->tracked) {
    auto out_w = out;
    out->backward_fn = [out_w, a_n, b_n, N, Ca, Cb, plane]() {
      for (int n = 0; n < N; ++n) {
        const float* g = out_w->grad.data() + static_cast<size_t>(n) * (Ca + Cb) * plane;
        if (a_n->tracked)
          for (size_t i = 0; i < Ca * plane; ++i)
            a_n->grad[static_cast<size_t>(n) * Ca * plane + i] += g[i];
        if (b_n->tracked)
          for (size_t i = 0; i < Cb * plane; ++i)
            b_n->grad[static_cast<size_t>(n) * Cb * plane + i] += g[Ca * plane + i];
      }
    };
  }
  return DiffTensor::wrap(out);
}

inline DiffTensor sum(const DiffTensor& x) {
  auto x_n = x.node();
  auto out = autograd::result_node({1}, {x_n});
  double acc = 0.0;
  for (float v : x_n->value) acc += v;
  out->value[0] = static_cast<float>(acc);
  if (out->tracked) {
    auto out_w = out;
    out->backward_fn = [out_w, x_n]() {
      for (auto& g : x_n->grad) g += out_w->grad[0];
    };
  }
  return DiffTensor::wrap(out);
}

inline DiffTensor mul(const DiffTensor& a, const DiffTensor& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("mul: shapes differ");
  auto a_n = a.node();
  auto b_n = b.node();
  auto out = autograd::result_node(a.shape(), {a_n, b_n});
  for (size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = a_n->value[i] * b_n->value[i];
  if (out->tracked) {
    auto out_w = out;
    out->backward_fn = [out_w, a_n, b_n]() {
      for (size_t i = 0; i < out_w->grad.size(); ++i) {
        if (a_n->tracked) a_n->grad[i] += out_w->grad[i] * b_n->value[i];
        if (b_n->tracked) b_n->grad[i] += out_w->grad[i] * a_n->value[i];
      }
    };
  }
  return DiffTensor::wrap(out);
}

/// Mean binary cross-entropy with predictions clamped to [eps, 1-eps]
/// (eps = 1e-7, applied in double). Gradient is zero where the clamp is
/// active; the target carries no gradient.
inline DiffTensor bce_loss(const DiffTensor& pred, const DiffTensor& target) {
  if (pred.shape() != target.shape()) throw ShapeMismatch("bce_loss: shapes differ");
  constexpr double kEps = 1e-7;
  auto p_n = pred.node();
  auto t_n = target.node();
  auto out = autograd::result_node({1}, {p_n, t_n});
  const size_t n = p_n->value.size();
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double p = std::clamp(static_cast<double>(p_n->value[i]), kEps, 1.0 - kEps);
    const double t = t_n->value[i];
    acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  out->value[0] = static_cast<float>(acc / static_cast<double>(n));
  if (out->tracked) {
    auto out_w = out;
    out->backward_fn = [out_w, p_n, t_n, n]() {
      if (!p_n->tracked) return;
      const double scale = static_cast<double>(out_w->grad[0]) / static_cast<double>(n);
      for (size_t i = 0; i < n; ++i) {
        const double p = p_n->value[i];
        if (p <= kEps || p >= 1.0 - kEps) continue;
        const double t = t_n->value[i];
        p_n->grad[i] += static_cast<float>(scale * (p - t) / (p * (1.0 - p)));
      }
    };
  }
  return DiffTensor::wrap(out);
}

/// Reverse topological traversal from a scalar loss; leaf grads accumulate
/// across repeated calls until zeroed explicitly.
inline void backward(const DiffTensor& loss) {
  if (loss.numel() != 1)
    throw NonScalarLoss("loss has " + std::to_string(loss.numel()) + " elements");
  auto root = loss.node();
  if (!root->tracked) return;

  std::vector<autograd::Node*> order;
  std::unordered_set<autograd::Node*> seen;
  std::vector<std::pair<autograd::Node*, size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      autograd::Node* parent = node->parents[next++].get();
      if (parent->tracked && seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior (op-produced) nodes carry transient grads scoped to this call;
  // only leaves accumulate across calls.
  for (autograd::Node* node : order)
    if (node->backward_fn) std::fill(node->grad.begin(), node->grad.end(), 0.0f);
  root->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn();
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<std::vector<double>> m, v;
};

/// One Adam update over a parameter list. Moments and the update itself are
/// computed in double; parameters stay f32.
inline void adam_step(std::vector<DiffTensor>& params, AdamState& state, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                      int t = 1) {
  if (t < 1) throw ShapeMismatch("adam_step: t must be >= 1");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].numel(), 0.0);
      state.v[i].assign(params[i].numel(), 0.0);
    }
  }
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.tracked() || p.grad().size() != p.numel())
      throw MissingGradient("parameter " + std::to_string(i));
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t j = 0; j < p.numel(); ++j) {
      const double g = p.grad()[j];
      m[j] = beta1 * m[j] + (1.0 - beta1) * g;
      v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.value()[j] =
          static_cast<float>(p.value()[j] - lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

}  // namespace skullstrip
