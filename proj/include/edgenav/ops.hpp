// Structured tensor ops: GEMM-backed convolution and linear layers, channel
// shuffling, pooling, layer norm. Dense kernels delegate to Eigen; everything
// else is plain loops with hand-written backward passes.
#pragma once

#include <Eigen/Dense>

#include "edgenav/tensor.hpp"

namespace edgenav {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapCM = Eigen::Map<const MatRM<T>>;

// Thread count for both our loops and Eigen's internal GEMM partitioning.
inline void set_math_threads(int n) {
  set_num_threads(n);
  Eigen::setNbThreads(n);
}

// ---------------------------------------------------------------------------
// matmul / linear
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()) + " (axis 1 vs axis 0)");
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = TensorT<T>::uninitialized({m, n});
  MapM<T>(out.data().data(), m, n).noalias() =
      MapCM<T>(a.data().data(), m, k) * MapCM<T>(b.data().data(), k, n);
  auto an = a.node(), bn = b.node();
  detail::record(out, {a, b}, [an, bn, m, k, n](TensorNode<T>& node) {
    MapCM<T> gy(node.grad.data(), m, n);
    if (an->wants_grad()) {
      an->ensure_grad();
      MapM<T>(an->grad.data(), m, k).noalias() +=
          gy * MapCM<T>(bn->data.data(), k, n).transpose();
    }
    if (bn->wants_grad()) {
      bn->ensure_grad();
      MapM<T>(bn->grad.data(), k, n).noalias() +=
          MapCM<T>(an->data.data(), m, k).transpose() * gy;
    }
  });
  return out;
}

// y = x * W^T + b with x:[m,k], W:[o,k], b:[o].
template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1))
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(w.shape()) + " (axis 1 must match)");
  const int64_t m = x.dim(0), k = x.dim(1), o = w.dim(0);
  if (b.defined() && b.numel() != o)
    throw DimensionError("linear: bias size " + std::to_string(b.numel()) +
                         " != out features " + std::to_string(o));
  auto out = TensorT<T>::uninitialized({m, o});
  MapM<T>(out.data().data(), m, o).noalias() =
      MapCM<T>(x.data().data(), m, k) * MapCM<T>(w.data().data(), o, k).transpose();
  if (b.defined()) {
    auto od = out.data();
    auto bd = b.data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < o; ++j) od[i * o + j] += bd[j];
  }
  std::vector<TensorT<T>> inputs = {x, w};
  if (b.defined()) inputs.push_back(b);
  auto xn = x.node(), wn = w.node();
  auto bnode = b.defined() ? b.node() : nullptr;
  detail::record(out, inputs, [xn, wn, bnode, m, k, o](TensorNode<T>& node) {
    MapCM<T> gy(node.grad.data(), m, o);
    if (xn->wants_grad()) {
      xn->ensure_grad();
      MapM<T>(xn->grad.data(), m, k).noalias() += gy * MapCM<T>(wn->data.data(), o, k);
    }
    if (wn->wants_grad()) {
      wn->ensure_grad();
      MapM<T>(wn->grad.data(), o, k).noalias() +=
          gy.transpose() * MapCM<T>(xn->data.data(), m, k);
    }
    if (bnode && bnode->wants_grad()) {
      bnode->ensure_grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < o; ++j) bnode->grad[j] += node.grad[i * o + j];
    }
  });
  return out;
}

template <typename T>
TensorT<T> transpose2d(const TensorT<T>& a) {
  if (a.ndim() != 2) throw DimensionError("transpose2d: need rank 2, got " +
                                          shape_str(a.shape()));
  const int64_t m = a.dim(0), n = a.dim(1);
  auto out = TensorT<T>::uninitialized({n, m});
  auto o = out.data();
  auto ad = a.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) o[j * m + i] = ad[i * n + j];
  auto an = a.node();
  detail::record(out, {a}, [an, m, n](TensorNode<T>& node) {
    if (!an->wants_grad()) return;
    an->ensure_grad();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) an->grad[i * n + j] += node.grad[j * m + i];
  });
  return out;
}

// Per-sample GEMM over the channel axis: x:[N,C,L], w:[O,C] -> [N,O,L].
// This is a 1x1 convolution over a flattened spatial axis.
template <typename T>
TensorT<T> channel_matmul(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  if (x.ndim() != 3 || w.ndim() != 2 || x.dim(1) != w.dim(1))
    throw DimensionError("channel_matmul: input " + shape_str(x.shape()) +
                         " vs weight " + shape_str(w.shape()) +
                         " (channel axis 1 must match weight axis 1)");
  const int64_t n = x.dim(0), c = x.dim(1), l = x.dim(2), o = w.dim(0);
  if (b.defined() && b.numel() != o)
    throw DimensionError("channel_matmul: bias size mismatch");
  auto out = TensorT<T>::uninitialized({n, o, l});
  MapCM<T> wm(w.data().data(), o, c);
  for (int64_t i = 0; i < n; ++i) {
    MapCM<T> xm(x.data().data() + i * c * l, c, l);
    MapM<T> ym(out.data().data() + i * o * l, o, l);
    ym.noalias() = wm * xm;
  }
  if (b.defined()) {
    auto od = out.data();
    auto bd = b.data();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < o; ++j) {
        T bias = bd[j];
        T* row = &od[(i * o + j) * l];
        for (int64_t t = 0; t < l; ++t) row[t] += bias;
      }
  }
  std::vector<TensorT<T>> inputs = {x, w};
  if (b.defined()) inputs.push_back(b);
  auto xn = x.node(), wn = w.node();
  auto bnode = b.defined() ? b.node() : nullptr;
  detail::record(out, inputs, [xn, wn, bnode, n, c, l, o](TensorNode<T>& node) {
    MapCM<T> wm(wn->data.data(), o, c);
    if (wn->wants_grad()) wn->ensure_grad();
    if (xn->wants_grad()) xn->ensure_grad();
    for (int64_t i = 0; i < n; ++i) {
      MapCM<T> gy(node.grad.data() + i * o * l, o, l);
      if (xn->wants_grad()) {
        MapM<T> gx(xn->grad.data() + i * c * l, c, l);
        gx.noalias() += wm.transpose() * gy;
      }
      if (wn->wants_grad()) {
        MapCM<T> xm(xn->data.data() + i * c * l, c, l);
        MapM<T> gw(wn->grad.data(), o, c);
        gw.noalias() += gy * xm.transpose();
      }
    }
    if (bnode && bnode->wants_grad()) {
      bnode->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < o; ++j) {
          T acc = T(0);
          const T* row = &node.grad[(i * o + j) * l];
          for (int64_t t = 0; t < l; ++t) acc += row[t];
          bnode->grad[j] += acc;
        }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace detail {

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// Column buffer for one (sample, group): rows = cg_in*kh*kw, cols = ho*wo.
template <typename T>
void im2col(const T* x, int64_t cg_in, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad_h, int64_t pad_w, int64_t ho, int64_t wo,
            T* col) {
  for (int64_t c = 0; c < cg_in; ++c) {
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j) {
        T* dst = col + ((c * kh + i) * kw + j) * ho * wo;
        for (int64_t oh = 0; oh < ho; ++oh) {
          int64_t ih = oh * stride - pad_h + i;
          if (ih < 0 || ih >= h) {
            std::fill(dst + oh * wo, dst + (oh + 1) * wo, T(0));
            continue;
          }
          const T* src = x + (c * h + ih) * w;
          for (int64_t ow = 0; ow < wo; ++ow) {
            int64_t iw = ow * stride - pad_w + j;
            dst[oh * wo + ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int64_t cg_in, int64_t h, int64_t w, int64_t kh,
                int64_t kw, int64_t stride, int64_t pad_h, int64_t pad_w, int64_t ho,
                int64_t wo, T* gx) {
  for (int64_t c = 0; c < cg_in; ++c) {
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j) {
        const T* src = col + ((c * kh + i) * kw + j) * ho * wo;
        for (int64_t oh = 0; oh < ho; ++oh) {
          int64_t ih = oh * stride - pad_h + i;
          if (ih < 0 || ih >= h) continue;
          T* dst = gx + (c * h + ih) * w;
          for (int64_t ow = 0; ow < wo; ++ow) {
            int64_t iw = ow * stride - pad_w + j;
            if (iw >= 0 && iw < w) dst[iw] += src[oh * wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Cross-correlation with groups and per-axis padding. groups == C_in == C_out
// gives a depthwise convolution, 1x1 kernels a pointwise one. Bias may be an
// undefined tensor.
template <typename T>
TensorT<T> conv2d_rect(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias,
                       int64_t stride, int64_t pad_h, int64_t pad_w, int64_t groups) {
  if (x.ndim() != 4)
    throw DimensionError("conv2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
  if (w.ndim() != 4)
    throw DimensionError("conv2d: kernel must be [Cout,Cin/g,kh,kw], got " +
                         shape_str(w.shape()));
  const int64_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t c_out = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (groups < 1 || c_in % groups != 0 || c_out % groups != 0)
    throw DimensionError("conv2d: groups=" + std::to_string(groups) +
                         " must divide C_in=" + std::to_string(c_in) +
                         " (input axis 1) and C_out=" + std::to_string(c_out) +
                         " (kernel axis 0)");
  if (w.dim(1) != c_in / groups)
    throw DimensionError("conv2d: kernel axis 1 is " + std::to_string(w.dim(1)) +
                         ", expected C_in/groups = " + std::to_string(c_in / groups));
  if (bias.defined() && bias.numel() != c_out)
    throw DimensionError("conv2d: bias size " + std::to_string(bias.numel()) +
                         " != C_out " + std::to_string(c_out));
  const int64_t ho = detail::conv_out_extent(h, kh, stride, pad_h);
  const int64_t wo = detail::conv_out_extent(wd, kw, stride, pad_w);
  if (ho < 1 || wo < 1)
    throw DimensionError("conv2d: output would be empty for input " +
                         shape_str(x.shape()) + " kernel " + shape_str(w.shape()));
  const int64_t cg_in = c_in / groups, cg_out = c_out / groups;
  const int64_t col_rows = cg_in * kh * kw, col_cols = ho * wo;

  auto out = TensorT<T>::uninitialized({n, c_out, ho, wo});
  const bool depthwise = (groups == c_in && groups == c_out);
  if (depthwise) {
    auto od = out.data();
    auto xd = x.data();
    auto wdp = w.data();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < c_in; ++c) {
        const T* xs = &xd[(i * c_in + c) * h * wd];
        const T* ws = &wdp[c * kh * kw];
        T* ys = &od[(i * c_out + c) * ho * wo];
        for (int64_t oh = 0; oh < ho; ++oh)
          for (int64_t ow = 0; ow < wo; ++ow) {
            T acc = T(0);
            for (int64_t ki = 0; ki < kh; ++ki) {
              int64_t ih = oh * stride - pad_h + ki;
              if (ih < 0 || ih >= h) continue;
              for (int64_t kj = 0; kj < kw; ++kj) {
                int64_t iw = ow * stride - pad_w + kj;
                if (iw < 0 || iw >= wd) continue;
                acc += ws[ki * kw + kj] * xs[ih * wd + iw];
              }
            }
            ys[oh * wo + ow] = acc;
          }
      }
  } else {
    std::vector<T> col(col_rows * col_cols);
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t g = 0; g < groups; ++g) {
        detail::im2col(x.data().data() + (i * c_in + g * cg_in) * h * wd, cg_in, h, wd,
                       kh, kw, stride, pad_h, pad_w, ho, wo, col.data());
        MapCM<T> wm(w.data().data() + g * cg_out * col_rows, cg_out, col_rows);
        MapCM<T> cm(col.data(), col_rows, col_cols);
        MapM<T> ym(out.data().data() + (i * c_out + g * cg_out) * col_cols, cg_out,
                   col_cols);
        ym.noalias() = wm * cm;
      }
    }
  }
  if (bias.defined()) {
    auto od = out.data();
    auto bd = bias.data();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < c_out; ++c) {
        T b = bd[c];
        T* row = &od[(i * c_out + c) * ho * wo];
        for (int64_t s = 0; s < ho * wo; ++s) row[s] += b;
      }
  }
  detail::check_finite(out, "conv2d");

  std::vector<TensorT<T>> inputs = {x, w};
  if (bias.defined()) inputs.push_back(bias);
  auto xn = x.node(), wn = w.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  detail::record(out, inputs,
                 [=](TensorNode<T>& node) {
    if (bn && bn->wants_grad()) {
      bn->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < c_out; ++c) {
          T acc = T(0);
          const T* row = &node.grad[(i * c_out + c) * ho * wo];
          for (int64_t s = 0; s < ho * wo; ++s) acc += row[s];
          bn->grad[c] += acc;
        }
    }
    const bool want_x = xn->wants_grad(), want_w = wn->wants_grad();
    if (!want_x && !want_w) return;
    if (want_x) xn->ensure_grad();
    if (want_w) wn->ensure_grad();
    if (depthwise) {
      for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < c_in; ++c) {
          const T* xs = &xn->data[(i * c_in + c) * h * wd];
          const T* ws = &wn->data[c * kh * kw];
          const T* gys = &node.grad[(i * c_out + c) * ho * wo];
          T* gxs = want_x ? &xn->grad[(i * c_in + c) * h * wd] : nullptr;
          T* gws = want_w ? &wn->grad[c * kh * kw] : nullptr;
          for (int64_t oh = 0; oh < ho; ++oh)
            for (int64_t ow = 0; ow < wo; ++ow) {
              T g = gys[oh * wo + ow];
              for (int64_t ki = 0; ki < kh; ++ki) {
                int64_t ih = oh * stride - pad_h + ki;
                if (ih < 0 || ih >= h) continue;
                for (int64_t kj = 0; kj < kw; ++kj) {
                  int64_t iw = ow * stride - pad_w + kj;
                  if (iw < 0 || iw >= wd) continue;
                  if (gws) gws[ki * kw + kj] += g * xs[ih * wd + iw];
                  if (gxs) gxs[ih * wd + iw] += g * ws[ki * kw + kj];
                }
              }
            }
        }
      return;
    }
    // im2col is rebuilt here rather than saved: trades a second pass for not
    // holding N*groups column buffers across the whole graph.
    std::vector<T> col(col_rows * col_cols);
    std::vector<T> gcol(want_x ? col_rows * col_cols : 0);
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t g = 0; g < groups; ++g) {
        MapCM<T> gy(node.grad.data() + (i * c_out + g * cg_out) * col_cols, cg_out,
                    col_cols);
        if (want_w) {
          detail::im2col(xn->data.data() + (i * c_in + g * cg_in) * h * wd, cg_in, h,
                         wd, kh, kw, stride, pad_h, pad_w, ho, wo, col.data());
          MapCM<T> cm(col.data(), col_rows, col_cols);
          MapM<T> gw(wn->grad.data() + g * cg_out * col_rows, cg_out, col_rows);
          gw.noalias() += gy * cm.transpose();
        }
        if (want_x) {
          MapCM<T> wm(wn->data.data() + g * cg_out * col_rows, cg_out, col_rows);
          MapM<T> gc(gcol.data(), col_rows, col_cols);
          gc.noalias() = wm.transpose() * gy;
          detail::col2im_add(gcol.data(), cg_in, h, wd, kh, kw, stride, pad_h, pad_w,
                             ho, wo,
                             xn->grad.data() + (i * c_in + g * cg_in) * h * wd);
        }
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias,
                  int64_t stride, int64_t pad, int64_t groups) {
  return conv2d_rect(x, w, bias, stride, pad, pad, groups);
}

// ---------------------------------------------------------------------------
// channel structure ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> channel_shuffle(const TensorT<T>& x, int64_t groups) {
  if (x.ndim() != 4)
    throw DimensionError("channel_shuffle: input must be [N,C,H,W], got " +
                         shape_str(x.shape()));
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (groups < 1 || c % groups != 0)
    throw DimensionError("channel_shuffle: C=" + std::to_string(c) +
                         " (axis 1) not divisible by groups=" + std::to_string(groups));
  const int64_t per = c / groups;
  // out channel (i*groups + g) takes in channel (g*per + i): reshape to
  // (groups, per), transpose, flatten.
  std::vector<int64_t> src(c);
  for (int64_t i = 0; i < per; ++i)
    for (int64_t g = 0; g < groups; ++g) src[i * groups + g] = g * per + i;
  auto out = TensorT<T>::uninitialized(x.shape());
  auto od = out.data();
  auto xd = x.data();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t cc = 0; cc < c; ++cc)
      std::copy_n(&xd[(b * c + src[cc]) * hw], hw, &od[(b * c + cc) * hw]);
  auto xnode = x.node();
  detail::record(out, {x}, [xnode, src, n, c, hw](TensorNode<T>& node) {
    if (!xnode->wants_grad()) return;
    xnode->ensure_grad();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t cc = 0; cc < c; ++cc) {
        const T* g = &node.grad[(b * c + cc) * hw];
        T* dst = &xnode->grad[(b * c + src[cc]) * hw];
        for (int64_t s = 0; s < hw; ++s) dst[s] += g[s];
      }
  });
  return out;
}

template <typename T>
TensorT<T> concat_channels(const std::vector<TensorT<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const int64_t n = parts[0].dim(0);
  int64_t hw = parts[0].numel() / (n * parts[0].dim(1));
  int64_t c_total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != parts[0].ndim() || p.dim(0) != n ||
        p.numel() / (n * p.dim(1)) != hw)
      throw DimensionError("concat_channels: incompatible input " +
                           shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    c_total += p.dim(1);
  }
  Shape out_shape = parts[0].shape();
  out_shape[1] = c_total;
  auto out = TensorT<T>::uninitialized(out_shape);
  auto od = out.data();
  int64_t c_off = 0;
  for (const auto& p : parts) {
    const int64_t pc = p.dim(1);
    auto pd = p.data();
    for (int64_t b = 0; b < n; ++b)
      std::copy_n(&pd[b * pc * hw], pc * hw, &od[(b * c_total + c_off) * hw]);
    c_off += pc;
  }
  std::vector<std::shared_ptr<TensorNode<T>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  detail::record(out, parts, [nodes, n, c_total, hw](TensorNode<T>& node) {
    int64_t c_off = 0;
    for (auto& pn : nodes) {
      const int64_t pc = pn->shape[1];
      if (pn->wants_grad()) {
        pn->ensure_grad();
        for (int64_t b = 0; b < n; ++b) {
          const T* g = &node.grad[(b * c_total + c_off) * hw];
          T* dst = &pn->grad[b * pc * hw];
          for (int64_t s = 0; s < pc * hw; ++s) dst[s] += g[s];
        }
      }
      c_off += pc;
    }
  });
  return out;
}

template <typename T>
TensorT<T> narrow_channels(const TensorT<T>& x, int64_t start, int64_t len) {
  const int64_t n = x.dim(0), c = x.dim(1);
  if (start < 0 || len < 1 || start + len > c)
    throw DimensionError("narrow_channels: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of C=" + std::to_string(c));
  const int64_t hw = x.numel() / (n * c);
  Shape out_shape = x.shape();
  out_shape[1] = len;
  auto out = TensorT<T>::uninitialized(out_shape);
  auto od = out.data();
  auto xd = x.data();
  for (int64_t b = 0; b < n; ++b)
    std::copy_n(&xd[(b * c + start) * hw], len * hw, &od[b * len * hw]);
  auto xnode = x.node();
  detail::record(out, {x}, [xnode, n, c, hw, start, len](TensorNode<T>& node) {
    if (!xnode->wants_grad()) return;
    xnode->ensure_grad();
    for (int64_t b = 0; b < n; ++b) {
      const T* g = &node.grad[b * len * hw];
      T* dst = &xnode->grad[(b * c + start) * hw];
      for (int64_t s = 0; s < len * hw; ++s) dst[s] += g[s];
    }
  });
  return out;
}

// 2x2 neighborhood concatenation: [N,C,H,W] -> [N,4C,H/2,W/2].
template <typename T>
TensorT<T> space_to_depth2(const TensorT<T>& x) {
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0)
    throw DimensionError("space_to_depth2: spatial dims must be even, got H=" +
                         std::to_string(h) + " W=" + std::to_string(w));
  const int64_t ho = h / 2, wo = w / 2;
  auto out = TensorT<T>::uninitialized({n, 4 * c, ho, wo});
  auto od = out.data();
  auto xd = x.data();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t q = 0; q < 4; ++q) {
      const int64_t dy = q / 2, dx = q % 2;
      for (int64_t cc = 0; cc < c; ++cc) {
        T* dst = &od[((b * 4 * c) + q * c + cc) * ho * wo];
        const T* src = &xd[(b * c + cc) * h * w];
        for (int64_t oh = 0; oh < ho; ++oh)
          for (int64_t ow = 0; ow < wo; ++ow)
            dst[oh * wo + ow] = src[(2 * oh + dy) * w + (2 * ow + dx)];
      }
    }
  auto xnode = x.node();
  detail::record(out, {x}, [xnode, n, c, h, w, ho, wo](TensorNode<T>& node) {
    if (!xnode->wants_grad()) return;
    xnode->ensure_grad();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t q = 0; q < 4; ++q) {
        const int64_t dy = q / 2, dx = q % 2;
        for (int64_t cc = 0; cc < c; ++cc) {
          const T* g = &node.grad[((b * 4 * c) + q * c + cc) * ho * wo];
          T* dst = &xnode->grad[(b * c + cc) * h * w];
          for (int64_t oh = 0; oh < ho; ++oh)
            for (int64_t ow = 0; ow < wo; ++ow)
              dst[(2 * oh + dy) * w + (2 * ow + dx)] += g[oh * wo + ow];
        }
      }
  });
  return out;
}

template <typename T>
TensorT<T> reduce_mean_pool(const TensorT<T>& x) {
  if (x.ndim() != 4)
    throw DimensionError("reduce_mean_pool: input must be [N,C,H,W], got " +
                         shape_str(x.shape()));
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  auto out = TensorT<T>::uninitialized({n, c});
  auto od = out.data();
  auto xd = x.data();
  const T inv = T(1) / static_cast<T>(hw);
  for (int64_t b = 0; b < n; ++b)
    for (int64_t cc = 0; cc < c; ++cc) {
      T acc = T(0);
      const T* src = &xd[(b * c + cc) * hw];
      for (int64_t s = 0; s < hw; ++s) acc += src[s];
      od[b * c + cc] = acc * inv;
    }
  auto xnode = x.node();
  detail::record(out, {x}, [xnode, n, c, hw, inv](TensorNode<T>& node) {
    if (!xnode->wants_grad()) return;
    xnode->ensure_grad();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t cc = 0; cc < c; ++cc) {
        T g = node.grad[b * c + cc] * inv;
        T* dst = &xnode->grad[(b * c + cc) * hw];
        for (int64_t s = 0; s < hw; ++s) dst[s] += g;
      }
  });
  return out;
}

// Layer normalization over the channel axis of [N,C] or [N,C,H,W], applied
// independently at each (sample, spatial) position.
template <typename T>
TensorT<T> layer_norm_channels(const TensorT<T>& x, const TensorT<T>& gamma,
                               const TensorT<T>& beta, T eps = T(1e-5)) {
  if (x.ndim() != 2 && x.ndim() != 4)
    throw DimensionError("layer_norm_channels: input must be [N,C] or [N,C,H,W]");
  const int64_t n = x.dim(0), c = x.dim(1);
  const int64_t sp = x.ndim() == 4 ? x.dim(2) * x.dim(3) : 1;
  if (gamma.numel() != c || beta.numel() != c)
    throw DimensionError("layer_norm_channels: gamma/beta size must equal C=" +
                         std::to_string(c));
  auto out = TensorT<T>::uninitialized(x.shape());
  auto od = out.data();
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  const T invc = T(1) / static_cast<T>(c);
  for (int64_t b = 0; b < n; ++b)
    for (int64_t s = 0; s < sp; ++s) {
      T mu = T(0);
      for (int64_t cc = 0; cc < c; ++cc) mu += xd[(b * c + cc) * sp + s];
      mu *= invc;
      T var = T(0);
      for (int64_t cc = 0; cc < c; ++cc) {
        T d = xd[(b * c + cc) * sp + s] - mu;
        var += d * d;
      }
      var *= invc;
      T inv_std = T(1) / std::sqrt(var + eps);
      for (int64_t cc = 0; cc < c; ++cc) {
        T xhat = (xd[(b * c + cc) * sp + s] - mu) * inv_std;
        od[(b * c + cc) * sp + s] = gd[cc] * xhat + bd[cc];
      }
    }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  detail::record(out, {x, gamma, beta}, [xn, gn, bn, n, c, sp, invc, eps](TensorNode<T>& node) {
    const bool want_x = xn->wants_grad(), want_g = gn->wants_grad(),
               want_b = bn->wants_grad();
    if (want_x) xn->ensure_grad();
    if (want_g) gn->ensure_grad();
    if (want_b) bn->ensure_grad();
    std::vector<T> xhat(c), gxhat(c);
    for (int64_t b = 0; b < n; ++b)
      for (int64_t s = 0; s < sp; ++s) {
        T mu = T(0);
        for (int64_t cc = 0; cc < c; ++cc) mu += xn->data[(b * c + cc) * sp + s];
        mu *= invc;
        T var = T(0);
        for (int64_t cc = 0; cc < c; ++cc) {
          T d = xn->data[(b * c + cc) * sp + s] - mu;
          var += d * d;
        }
        var *= invc;
        T inv_std = T(1) / std::sqrt(var + eps);
        T m1 = T(0), m2 = T(0);
        for (int64_t cc = 0; cc < c; ++cc) {
          const int64_t idx = (b * c + cc) * sp + s;
          xhat[cc] = (xn->data[idx] - mu) * inv_std;
          T gy = node.grad[idx];
          if (want_g) gn->grad[cc] += gy * xhat[cc];
          if (want_b) bn->grad[cc] += gy;
          gxhat[cc] = gy * gn->data[cc];
          m1 += gxhat[cc];
          m2 += gxhat[cc] * xhat[cc];
        }
        if (want_x) {
          m1 *= invc;
          m2 *= invc;
          for (int64_t cc = 0; cc < c; ++cc)
            xn->grad[(b * c + cc) * sp + s] +=
                inv_std * (gxhat[cc] - m1 - xhat[cc] * m2);
        }
      }
  });
  return out;
}

// Slice along the last axis: [.., K] -> [.., len].
template <typename T>
TensorT<T> slice_lastdim(const TensorT<T>& x, int64_t start, int64_t len) {
  const int64_t k = x.shape().back();
  if (start < 0 || len < 1 || start + len > k)
    throw DimensionError("slice_lastdim: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of last dim " +
                         std::to_string(k));
  const int64_t rows = x.numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = len;
  auto out = TensorT<T>::uninitialized(out_shape);
  auto od = out.data();
  auto xd = x.data();
  for (int64_t r = 0; r < rows; ++r)
    std::copy_n(&xd[r * k + start], len, &od[r * len]);
  auto xn = x.node();
  detail::record(out, {x}, [xn, rows, k, start, len](TensorNode<T>& node) {
    if (!xn->wants_grad()) return;
    xn->ensure_grad();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t i = 0; i < len; ++i)
        xn->grad[r * k + start + i] += node.grad[r * len + i];
  });
  return out;
}

// Sum over the last axis, keeping it as size 1: [.., K] -> [.., 1].
template <typename T>
TensorT<T> sum_lastdim(const TensorT<T>& x) {
  const int64_t k = x.shape().back();
  const int64_t rows = x.numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = 1;
  auto out = TensorT<T>::uninitialized(out_shape);
  auto od = out.data();
  auto xd = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    T acc = T(0);
    for (int64_t i = 0; i < k; ++i) acc += xd[r * k + i];
    od[r] = acc;
  }
  auto xn = x.node();
  detail::record(out, {x}, [xn, rows, k](TensorNode<T>& node) {
    if (!xn->wants_grad()) return;
    xn->ensure_grad();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t i = 0; i < k; ++i) xn->grad[r * k + i] += node.grad[r];
  });
  return out;
}

// Gather along the last (flattened spatial) axis: out[n,c,t] = x[n,c,idx[t]].
template <typename T>
TensorT<T> permute_last(const TensorT<T>& x, const std::vector<int64_t>& idx) {
  if (x.ndim() != 3)
    throw DimensionError("permute_last: input must be [N,C,L], got " +
                         shape_str(x.shape()));
  const int64_t n = x.dim(0), c = x.dim(1), l = x.dim(2);
  if (static_cast<int64_t>(idx.size()) != l)
    throw DimensionError("permute_last: index length " + std::to_string(idx.size()) +
                         " != L=" + std::to_string(l));
  auto out = TensorT<T>::uninitialized(x.shape());
  auto od = out.data();
  auto xd = x.data();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t cc = 0; cc < c; ++cc) {
      const T* src = &xd[(b * c + cc) * l];
      T* dst = &od[(b * c + cc) * l];
      for (int64_t t = 0; t < l; ++t) dst[t] = src[idx[t]];
    }
  auto xn = x.node();
  detail::record(out, {x}, [xn, idx, n, c, l](TensorNode<T>& node) {
    if (!xn->wants_grad()) return;
    xn->ensure_grad();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t cc = 0; cc < c; ++cc) {
        const T* g = &node.grad[(b * c + cc) * l];
        T* dst = &xn->grad[(b * c + cc) * l];
        for (int64_t t = 0; t < l; ++t) dst[idx[t]] += g[t];
      }
  });
  return out;
}

}  // namespace edgenav
