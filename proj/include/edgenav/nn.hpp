// Layers, parameter bookkeeping, initialization, Adam.
#pragma once

#include <string>
#include <utility>

#include "edgenav/ops.hpp"

namespace edgenav {

// Named parameter registry. Collection order is fixed by module construction
// order, which keeps optimizer iteration and checkpoints deterministic.
template <typename T>
struct ParamMap {
  std::vector<std::pair<std::string, TensorT<T>>> items;

  void add(const std::string& name, const TensorT<T>& t) { items.emplace_back(name, t); }
  int64_t total_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : items) n += t.numel();
    return n;
  }
  const TensorT<T>* find(const std::string& name) const {
    for (const auto& [k, t] : items)
      if (k == name) return &t;
    return nullptr;
  }
  void set_requires_grad(bool rg) {
    for (auto& [k, t] : items) t.set_requires_grad(rg);
  }
  void zero_grad() {
    for (auto& [k, t] : items) t.zero_grad();
  }
  void clear_grad() {
    for (auto& [k, t] : items) t.clear_grad();
  }
  std::vector<std::vector<T>> snapshot() const {
    std::vector<std::vector<T>> s;
    s.reserve(items.size());
    for (const auto& [k, t] : items) s.emplace_back(t.data().begin(), t.data().end());
    return s;
  }
  void restore(const std::vector<std::vector<T>>& s) {
    if (s.size() != items.size())
      throw ContractError("ParamMap::restore: snapshot size mismatch");
    for (size_t i = 0; i < items.size(); ++i) {
      auto dst = items[i].second.data();
      if (s[i].size() != dst.size())
        throw ContractError("ParamMap::restore: tensor size mismatch at " +
                            items[i].first);
      std::copy(s[i].begin(), s[i].end(), dst.begin());
    }
  }
};

// Uniform Kaiming-style fan-in init: U(-sqrt(3/fan_in), +sqrt(3/fan_in)).
template <typename T>
void kaiming_uniform_(TensorT<T>& t, int64_t fan_in, Rng& rng) {
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
struct Conv2dLayer {
  TensorT<T> weight;  // [C_out, C_in/groups, kh, kw]
  TensorT<T> bias;    // [C_out] or undefined
  int64_t stride = 1, pad_h = 0, pad_w = 0, groups = 1;

  Conv2dLayer() = default;
  Conv2dLayer(int64_t c_in, int64_t c_out, int64_t k, int64_t stride_, int64_t pad_,
              int64_t groups_, bool with_bias, Rng& rng)
      : Conv2dLayer(c_in, c_out, k, k, stride_, pad_, pad_, groups_, with_bias, rng) {}

  Conv2dLayer(int64_t c_in, int64_t c_out, int64_t kh, int64_t kw, int64_t stride_,
              int64_t pad_h_, int64_t pad_w_, int64_t groups_, bool with_bias, Rng& rng)
      : stride(stride_), pad_h(pad_h_), pad_w(pad_w_), groups(groups_) {
    if (c_in % groups != 0 || c_out % groups != 0)
      throw ConfigError("Conv2dLayer: groups must divide channels");
    weight = TensorT<T>::zeros({c_out, c_in / groups, kh, kw}, true);
    kaiming_uniform_(weight, (c_in / groups) * kh * kw, rng);
    if (with_bias) bias = TensorT<T>::zeros({c_out}, true);
  }

  TensorT<T> forward(const TensorT<T>& x) const {
    return conv2d_rect(x, weight, bias, stride, pad_h, pad_w, groups);
  }
  void collect(const std::string& prefix, ParamMap<T>& pm) const {
    pm.add(prefix + ".weight", weight);
    if (bias.defined()) pm.add(prefix + ".bias", bias);
  }
};

template <typename T>
struct LinearLayer {
  TensorT<T> weight;  // [out, in]
  TensorT<T> bias;    // [out] or undefined

  LinearLayer() = default;
  LinearLayer(int64_t in, int64_t out, bool with_bias, Rng& rng) {
    weight = TensorT<T>::zeros({out, in}, true);
    kaiming_uniform_(weight, in, rng);
    if (with_bias) bias = TensorT<T>::zeros({out}, true);
  }

  TensorT<T> forward(const TensorT<T>& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, ParamMap<T>& pm) const {
    pm.add(prefix + ".weight", weight);
    if (bias.defined()) pm.add(prefix + ".bias", bias);
  }
};

template <typename T>
struct LayerNormLayer {
  TensorT<T> gamma, beta;

  LayerNormLayer() = default;
  explicit LayerNormLayer(int64_t c) {
    gamma = TensorT<T>::full({c}, T(1), true);
    beta = TensorT<T>::zeros({c}, true);
  }

  TensorT<T> forward(const TensorT<T>& x) const {
    return layer_norm_channels(x, gamma, beta);
  }
  void collect(const std::string& prefix, ParamMap<T>& pm) const {
    pm.add(prefix + ".gamma", gamma);
    pm.add(prefix + ".beta", beta);
  }
};

// Adam with bias correction. State arrays follow the ParamMap order.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const ParamMap<T>& params, T lr, T beta1 = T(0.9), T beta2 = T(0.999),
       T eps = T(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, t] : params.items) {
      params_.push_back(t);
      m_.emplace_back(t.numel(), T(0));
      v_.emplace_back(t.numel(), T(0));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) continue;
      auto pd = p.data();
      auto g = p.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < pd.size(); ++j) {
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
        const T mhat = m[j] / bc1;
        const T vhat = v[j] / bc2;
        pd[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  T lr() const { return lr_; }
  void set_lr(T lr) { lr_ = lr; }

 private:
  std::vector<TensorT<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  T lr_ = T(1e-3), beta1_ = T(0.9), beta2_ = T(0.999), eps_ = T(1e-8);
  int64_t t_ = 0;
};

}  // namespace edgenav
