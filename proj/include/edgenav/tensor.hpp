// Dense row-major tensors with a dynamic reverse-mode tape.
//
// Training instantiates TensorT<double>; the 32-bit inference path used by the
// latency benchmark instantiates TensorT<float> from converted weights. The
// tape is recorded per forward pass and consumed by backward().
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "edgenav/core.hpp"

namespace edgenav {

namespace detail {
template <typename T>
using ArrMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using CArrMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
}  // namespace detail

namespace detail {
inline thread_local int no_grad_depth = 0;
}

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

// RAII scope in which no tape is recorded (inference, finite differences).
struct NoGradGuard {
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
struct TensorNode {
  Shape shape;
  AlignedVec<T> data;
  AlignedVec<T> grad;  // allocated lazily, same length as data when present
  bool requires_grad = false;

  // Tape record. parents keeps inputs alive until backward consumes the graph.
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  std::function<void(TensorNode<T>&)> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  // A node participates in gradient flow if it is a leaf the user marked or an
  // intermediate with a recorded backward.
  bool wants_grad() const { return requires_grad || static_cast<bool>(backward_fn); }
};

template <typename T>
class TensorT {
 public:
  TensorT() = default;

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    TensorT t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->shape = std::move(shape);
    t.node_->data.assign(shape_numel(t.node_->shape), T(0));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  // Allocation without the zero fill, for kernel outputs that overwrite every
  // element before the tensor escapes.
  static TensorT uninitialized(Shape shape) {
    TensorT t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->shape = std::move(shape);
    t.node_->data.resize(shape_numel(t.node_->shape));
    return t;
  }

  static TensorT full(Shape shape, T value, bool requires_grad = false) {
    TensorT t = zeros(std::move(shape), requires_grad);
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    return t;
  }

  static TensorT from_data(Shape shape, std::vector<T> values,
                           bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
      throw DimensionError("from_data: shape " + shape_str(shape) + " wants " +
                           std::to_string(shape_numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    TensorT t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->shape = std::move(shape);
    t.node_->data.assign(values.begin(), values.end());
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static TensorT scalar(T value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }

  std::span<T> data() { return {node_->data.data(), node_->data.size()}; }
  std::span<const T> data() const { return {node_->data.data(), node_->data.size()}; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  bool has_grad() const { return defined() && !node_->grad.empty(); }
  std::span<T> grad() {
    node_->ensure_grad();
    return {node_->grad.data(), node_->grad.size()};
  }
  std::span<const T> grad() const { return {node_->grad.data(), node_->grad.size()}; }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }
  void clear_grad() { node_->grad.clear(); node_->grad.shrink_to_fit(); }

  T item() const {
    if (numel() != 1) throw ContractError("item(): tensor has " +
                                          std::to_string(numel()) + " elements");
    return node_->data[0];
  }

  TensorT clone() const {  // value copy, detached from the tape
    TensorT t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->shape = node_->shape;
    t.node_->data = node_->data;
    t.node_->requires_grad = node_->requires_grad;
    return t;
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> t = TensorT<U>::zeros(node_->shape);
    auto dst = t.data();
    for (size_t i = 0; i < node_->data.size(); ++i) dst[i] = static_cast<U>(node_->data[i]);
    return t;
  }

  std::shared_ptr<TensorNode<T>> node() const { return node_; }

  static TensorT wrap(std::shared_ptr<TensorNode<T>> n) {
    TensorT t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

using Tensor = TensorT<double>;

namespace detail {

template <typename T>
void check_finite(const TensorT<T>& t, const char* op) {
#ifndef NDEBUG
  for (T v : t.data()) {
    if (!std::isfinite(static_cast<double>(v)))
      throw ContractError(std::string("non-finite value produced by ") + op);
  }
#else
  (void)t;
  (void)op;
#endif
}

// Attach a tape record to `out` if grad mode is on and any input wants grad.
template <typename T, class F>
void record(TensorT<T>& out, const std::vector<TensorT<T>>& inputs, F&& backward) {
  if (!grad_enabled()) return;
  bool any = false;
  for (const auto& in : inputs) any = any || in.node()->wants_grad();
  if (!any) return;
  auto n = out.node();
  n->requires_grad = true;
  n->parents.reserve(inputs.size());
  for (auto& in : inputs) n->parents.push_back(in.node());
  n->backward_fn = std::function<void(TensorNode<T>&)>(std::forward<F>(backward));
}

}  // namespace detail

// Reverse-mode pass. `loss` must be scalar. Gradients accumulate additively
// into every node reachable on the tape; the tape is consumed afterwards.
template <typename T>
void backward(const TensorT<T>& loss) {
  if (loss.numel() != 1)
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(loss.shape()));
  // Iterative post-order DFS over parents.
  std::vector<std::shared_ptr<TensorNode<T>>> order;
  std::unordered_set<TensorNode<T>*> visited;
  struct Frame {
    std::shared_ptr<TensorNode<T>> node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      auto p = f.node->parents[f.next_parent++];
      if (visited.insert(p.get()).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto& node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
    node->backward_fn = nullptr;
    node->parents.clear();
  }
}

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

namespace detail {
template <typename T>
void check_same_shape(const char* op, const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}
}  // namespace detail

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape("add", a, b);
  auto out = TensorT<T>::uninitialized(a.shape());
  auto o = out.data();
  auto ad = a.data(), bd = b.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = ad[i] + bd[i];
  detail::check_finite(out, "add");
  auto an = a.node(), bn = b.node();
  detail::record(out, {a, b}, [an, bn](TensorNode<T>& n) {
    if (an->wants_grad()) {
      an->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    }
    if (bn->wants_grad()) {
      bn->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i];
    }
  });
  return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape("sub", a, b);
  auto out = TensorT<T>::uninitialized(a.shape());
  auto o = out.data();
  auto ad = a.data(), bd = b.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = ad[i] - bd[i];
  auto an = a.node(), bn = b.node();
  detail::record(out, {a, b}, [an, bn](TensorNode<T>& n) {
    if (an->wants_grad()) {
      an->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    }
    if (bn->wants_grad()) {
      bn->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] -= n.grad[i];
    }
  });
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape("mul", a, b);
  auto out = TensorT<T>::uninitialized(a.shape());
  auto o = out.data();
  auto ad = a.data(), bd = b.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = ad[i] * bd[i];
  auto an = a.node(), bn = b.node();
  detail::record(out, {a, b}, [an, bn](TensorNode<T>& n) {
    if (an->wants_grad()) {
      an->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * bn->data[i];
    }
    if (bn->wants_grad()) {
      bn->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i] * an->data[i];
    }
  });
  return out;
}

template <typename T>
TensorT<T> div(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape("div", a, b);
  auto out = TensorT<T>::uninitialized(a.shape());
  auto o = out.data();
  auto ad = a.data(), bd = b.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = ad[i] / bd[i];
  auto an = a.node(), bn = b.node();
  detail::record(out, {a, b}, [an, bn](TensorNode<T>& n) {
    if (an->wants_grad()) {
      an->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] / bn->data[i];
    }
    if (bn->wants_grad()) {
      bn->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) {
        T inv = T(1) / bn->data[i];
        bn->grad[i] -= n.grad[i] * an->data[i] * inv * inv;
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T c) {
  auto out = TensorT<T>::uninitialized(a.shape());
  auto o = out.data();
  auto ad = a.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = ad[i] * c;
  auto an = a.node();
  detail::record(out, {a}, [an, c](TensorNode<T>& n) {
    if (!an->wants_grad()) return;
    an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * c;
  });
  return out;
}

template <typename T>
TensorT<T> add_scalar(const TensorT<T>& a, T c) {
  auto out = TensorT<T>::uninitialized(a.shape());
  auto o = out.data();
  auto ad = a.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = ad[i] + c;
  auto an = a.node();
  detail::record(out, {a}, [an](TensorNode<T>& n) {
    if (!an->wants_grad()) return;
    an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
  });
  return out;
}

template <typename T>
TensorT<T> neg(const TensorT<T>& a) {
  return scale(a, T(-1));
}

namespace detail {
// Generic unary op: y = f(x), dy/dx computed from (x, y).
template <typename T, class Fwd, class Bwd>
TensorT<T> unary_op(const char* name, const TensorT<T>& a, Fwd&& f, Bwd&& dfdx) {
  auto out = TensorT<T>::uninitialized(a.shape());
  auto o = out.data();
  auto ad = a.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = f(ad[i]);
  check_finite(out, name);
  auto an = a.node();
  record(out, {a}, [an, dfdx](TensorNode<T>& n) {
    if (!an->wants_grad()) return;
    an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      an->grad[i] += n.grad[i] * dfdx(an->data[i], n.data[i]);
  });
  return out;
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T stable_softplus(T x) {
  if (x > T(30)) return x;
  if (x < T(-30)) return std::exp(x);
  return std::log1p(std::exp(x));
}
}  // namespace detail

namespace detail {
// 1/(1+exp(-x)): saturates cleanly at both ends in IEEE arithmetic.
template <typename T>
void sigmoid_into(const T* x, T* out, int64_t n) {
  CArrMap<T> xm(x, n);
  ArrMap<T> om(out, n);
  om = T(1) / (T(1) + (-xm).exp());
}
}  // namespace detail

template <typename T>
TensorT<T> exp(const TensorT<T>& a) {
  auto out = TensorT<T>::uninitialized(a.shape());
  detail::ArrMap<T>(out.data().data(), out.numel()) =
      detail::CArrMap<T>(a.data().data(), a.numel()).exp();
  detail::check_finite(out, "exp");
  auto an = a.node();
  detail::record(out, {a}, [an](TensorNode<T>& n) {
    if (!an->wants_grad()) return;
    an->ensure_grad();
    detail::ArrMap<T>(an->grad.data(), an->grad.size()) +=
        detail::CArrMap<T>(n.grad.data(), n.grad.size()) *
        detail::CArrMap<T>(n.data.data(), n.data.size());
  });
  return out;
}

template <typename T>
TensorT<T> log(const TensorT<T>& a) {
  auto out = TensorT<T>::uninitialized(a.shape());
  detail::ArrMap<T>(out.data().data(), out.numel()) =
      detail::CArrMap<T>(a.data().data(), a.numel()).log();
  auto an = a.node();
  detail::record(out, {a}, [an](TensorNode<T>& n) {
    if (!an->wants_grad()) return;
    an->ensure_grad();
    detail::ArrMap<T>(an->grad.data(), an->grad.size()) +=
        detail::CArrMap<T>(n.grad.data(), n.grad.size()) /
        detail::CArrMap<T>(an->data.data(), an->data.size());
  });
  return out;
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
  auto out = TensorT<T>::uninitialized(a.shape());
  detail::sigmoid_into(a.data().data(), out.data().data(), a.numel());
  auto an = a.node();
  detail::record(out, {a}, [an](TensorNode<T>& n) {
    if (!an->wants_grad()) return;
    an->ensure_grad();
    detail::CArrMap<T> y(n.data.data(), n.data.size());
    detail::ArrMap<T>(an->grad.data(), an->grad.size()) +=
        detail::CArrMap<T>(n.grad.data(), n.grad.size()) * y * (T(1) - y);
  });
  return out;
}

template <typename T>
TensorT<T> silu(const TensorT<T>& a) {
  auto out = TensorT<T>::uninitialized(a.shape());
  {
    detail::CArrMap<T> x(a.data().data(), a.numel());
    detail::ArrMap<T> y(out.data().data(), out.numel());
    y = x / (T(1) + (-x).exp());
  }
  detail::check_finite(out, "silu");
  auto an = a.node();
  detail::record(out, {a}, [an](TensorNode<T>& n) {
    if (!an->wants_grad()) return;
    an->ensure_grad();
    detail::CArrMap<T> x(an->data.data(), an->data.size());
    auto s = T(1) / (T(1) + (-x).exp());
    detail::ArrMap<T>(an->grad.data(), an->grad.size()) +=
        detail::CArrMap<T>(n.grad.data(), n.grad.size()) *
        (s * (T(1) + x * (T(1) - s)));
  });
  return out;
}

template <typename T>
TensorT<T> softplus(const TensorT<T>& a) {
  auto out = TensorT<T>::uninitialized(a.shape());
  {
    // max(x,0) + log1p(exp(-|x|)), stable at both ends
    detail::CArrMap<T> x(a.data().data(), a.numel());
    detail::ArrMap<T> y(out.data().data(), out.numel());
    y = x.cwiseMax(T(0)) + (T(1) + (-x.abs()).exp()).log();
  }
  detail::check_finite(out, "softplus");
  auto an = a.node();
  detail::record(out, {a}, [an](TensorNode<T>& n) {
    if (!an->wants_grad()) return;
    an->ensure_grad();
    detail::CArrMap<T> x(an->data.data(), an->data.size());
    detail::ArrMap<T>(an->grad.data(), an->grad.size()) +=
        detail::CArrMap<T>(n.grad.data(), n.grad.size()) * (T(1) / (T(1) + (-x).exp()));
  });
  return out;
}

template <typename T>
TensorT<T> tanh(const TensorT<T>& a) {
  auto out = TensorT<T>::uninitialized(a.shape());
  detail::ArrMap<T>(out.data().data(), out.numel()) =
      detail::CArrMap<T>(a.data().data(), a.numel()).tanh();
  auto an = a.node();
  detail::record(out, {a}, [an](TensorNode<T>& n) {
    if (!an->wants_grad()) return;
    an->ensure_grad();
    detail::CArrMap<T> y(n.data.data(), n.data.size());
    detail::ArrMap<T>(an->grad.data(), an->grad.size()) +=
        detail::CArrMap<T>(n.grad.data(), n.grad.size()) * (T(1) - y * y);
  });
  return out;
}

// |x|; subgradient 0 at the origin.
template <typename T>
TensorT<T> abs(const TensorT<T>& a) {
  return detail::unary_op<T>("abs", a, [](T x) { return std::abs(x); },
                             [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

// max(a, b); gradient routed to a on ties.
template <typename T>
TensorT<T> maximum(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape("maximum", a, b);
  auto out = TensorT<T>::uninitialized(a.shape());
  auto o = out.data();
  auto ad = a.data(), bd = b.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = ad[i] >= bd[i] ? ad[i] : bd[i];
  auto an = a.node(), bn = b.node();
  detail::record(out, {a, b}, [an, bn](TensorNode<T>& n) {
    for (size_t i = 0; i < n.grad.size(); ++i) {
      bool pick_a = an->data[i] >= bn->data[i];
      if (pick_a && an->wants_grad()) {
        an->ensure_grad();
        an->grad[i] += n.grad[i];
      } else if (!pick_a && bn->wants_grad()) {
        bn->ensure_grad();
        bn->grad[i] += n.grad[i];
      }
    }
  });
  return out;
}

// min(a, b); gradient routed to a on ties.
template <typename T>
TensorT<T> minimum(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape("minimum", a, b);
  auto out = TensorT<T>::uninitialized(a.shape());
  auto o = out.data();
  auto ad = a.data(), bd = b.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = ad[i] <= bd[i] ? ad[i] : bd[i];
  auto an = a.node(), bn = b.node();
  detail::record(out, {a, b}, [an, bn](TensorNode<T>& n) {
    for (size_t i = 0; i < n.grad.size(); ++i) {
      bool pick_a = an->data[i] <= bn->data[i];
      if (pick_a && an->wants_grad()) {
        an->ensure_grad();
        an->grad[i] += n.grad[i];
      } else if (!pick_a && bn->wants_grad()) {
        bn->ensure_grad();
        bn->grad[i] += n.grad[i];
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> sum(const TensorT<T>& a) {
  T acc = T(0);
  for (T v : a.data()) acc += v;
  auto out = TensorT<T>::scalar(acc);
  auto an = a.node();
  detail::record(out, {a}, [an](TensorNode<T>& n) {
    if (!an->wants_grad()) return;
    an->ensure_grad();
    T g = n.grad[0];
    for (auto& gv : an->grad) gv += g;
  });
  return out;
}

template <typename T>
TensorT<T> mean(const TensorT<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.numel())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(new_shape));
  auto out = TensorT<T>::uninitialized(new_shape);
  auto o = out.data();
  auto ad = a.data();
  std::copy(ad.begin(), ad.end(), o.begin());
  auto an = a.node();
  detail::record(out, {a}, [an](TensorNode<T>& n) {
    if (!an->wants_grad()) return;
    an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
  });
  return out;
}

// Softmax over the last axis of an arbitrary-rank tensor.
template <typename T>
TensorT<T> softmax_lastdim(const TensorT<T>& a) {
  const int64_t k = a.shape().back();
  const int64_t rows = a.numel() / k;
  auto out = TensorT<T>::uninitialized(a.shape());
  auto o = out.data();
  auto ad = a.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = &ad[r * k];
    T* y = &o[r * k];
    T mx = x[0];
    for (int64_t i = 1; i < k; ++i) mx = std::max(mx, x[i]);
    T z = T(0);
    for (int64_t i = 0; i < k; ++i) {
      y[i] = std::exp(x[i] - mx);
      z += y[i];
    }
    for (int64_t i = 0; i < k; ++i) y[i] /= z;
  }
  auto an = a.node();
  detail::record(out, {a}, [an, k, rows](TensorNode<T>& n) {
    if (!an->wants_grad()) return;
    an->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const T* y = &n.data[r * k];
      const T* gy = &n.grad[r * k];
      T dot = T(0);
      for (int64_t i = 0; i < k; ++i) dot += y[i] * gy[i];
      for (int64_t i = 0; i < k; ++i) an->grad[r * k + i] += y[i] * (gy[i] - dot);
    }
  });
  return out;
}

template <typename T>
TensorT<T> log_softmax_lastdim(const TensorT<T>& a) {
  const int64_t k = a.shape().back();
  const int64_t rows = a.numel() / k;
  auto out = TensorT<T>::uninitialized(a.shape());
  auto o = out.data();
  auto ad = a.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = &ad[r * k];
    T* y = &o[r * k];
    T mx = x[0];
    for (int64_t i = 1; i < k; ++i) mx = std::max(mx, x[i]);
    T z = T(0);
    for (int64_t i = 0; i < k; ++i) z += std::exp(x[i] - mx);
    T lz = std::log(z) + mx;
    for (int64_t i = 0; i < k; ++i) y[i] = x[i] - lz;
  }
  auto an = a.node();
  detail::record(out, {a}, [an, k, rows](TensorNode<T>& n) {
    if (!an->wants_grad()) return;
    an->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const T* y = &n.data[r * k];
      const T* gy = &n.grad[r * k];
      T gsum = T(0);
      for (int64_t i = 0; i < k; ++i) gsum += gy[i];
      for (int64_t i = 0; i < k; ++i)
        an->grad[r * k + i] += gy[i] - std::exp(y[i]) * gsum;
    }
  });
  return out;
}

}  // namespace edgenav
