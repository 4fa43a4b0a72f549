// Independent reference implementations used only by tests. Everything here
// is written as plain loops with no shared code paths into the library's
// kernels, so agreement is meaningful.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "edgenav/tensor.hpp"

namespace oracles {

using edgenav::Tensor;

// Quadruple-loop grouped cross-correlation.
inline Tensor conv2d_naive(const Tensor& x, const Tensor& w, const Tensor& bias,
                           int64_t stride, int64_t pad, int64_t groups) {
  const int64_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t c_out = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t cg_in = c_in / groups, cg_out = c_out / groups;
  const int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const int64_t wo = (wd + 2 * pad - kw) / stride + 1;
  Tensor y = Tensor::zeros({n, c_out, ho, wo});
  auto yd = y.data();
  auto xd = x.data();
  auto wdt = w.data();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t oc = 0; oc < c_out; ++oc) {
      const int64_t g = oc / cg_out;
      for (int64_t oh = 0; oh < ho; ++oh)
        for (int64_t ow = 0; ow < wo; ++ow) {
          double acc = bias.defined() ? bias.data()[oc] : 0.0;
          for (int64_t ic = 0; ic < cg_in; ++ic)
            for (int64_t ki = 0; ki < kh; ++ki)
              for (int64_t kj = 0; kj < kw; ++kj) {
                const int64_t ih = oh * stride - pad + ki;
                const int64_t iw = ow * stride - pad + kj;
                if (ih < 0 || ih >= h || iw < 0 || iw >= wd) continue;
                acc += wdt[((oc * cg_in + ic) * kh + ki) * kw + kj] *
                       xd[((b * c_in + g * cg_in + ic) * h + ih) * wd + iw];
              }
          yd[((b * c_out + oc) * ho + oh) * wo + ow] = acc;
        }
    }
  return y;
}

// Two-loop state-space recurrence: h_t = Abar_t (.) h_{t-1} + Bbar_t * u_t,
// y_t = C_t . h_t + D (.) u_t, with Abar = exp(delta*A), Bbar = delta*B.
inline Tensor selective_scan_naive(const Tensor& u, const Tensor& delta,
                                   const Tensor& a, const Tensor& b_seq,
                                   const Tensor& c_seq, const Tensor& d_skip) {
  const int64_t n = u.dim(0), d = u.dim(1), l = u.dim(2), s = a.dim(1);
  Tensor y = Tensor::zeros({n, d, l});
  auto yd = y.data();
  auto ud = u.data();
  auto dd = delta.data();
  auto ad = a.data();
  auto bd = b_seq.data();
  auto cd = c_seq.data();
  auto dk = d_skip.data();
  std::vector<double> h(s);
  for (int64_t bi = 0; bi < n; ++bi)
    for (int64_t ch = 0; ch < d; ++ch) {
      std::fill(h.begin(), h.end(), 0.0);
      for (int64_t t = 0; t < l; ++t) {
        const double dt = dd[(bi * d + ch) * l + t];
        const double ut = ud[(bi * d + ch) * l + t];
        double out = 0.0;
        for (int64_t k = 0; k < s; ++k) {
          const double abar = std::exp(dt * ad[ch * s + k]);
          const double bbar = dt * bd[(bi * s + k) * l + t];
          h[k] = abar * h[k] + bbar * ut;
          out += cd[(bi * s + k) * l + t] * h[k];
        }
        yd[(bi * d + ch) * l + t] = out + dk[ch] * ut;
      }
    }
  return y;
}

inline double iou_xyxy(double ax1, double ay1, double ax2, double ay2, double bx1,
                       double by1, double bx2, double by2) {
  const double ix = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
  const double iy = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
  const double inter = ix * iy;
  const double ua = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
  return ua > 0.0 ? inter / ua : 0.0;
}

}  // namespace oracles
