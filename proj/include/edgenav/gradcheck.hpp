// Central finite differences, the numeric oracle every analytic gradient in
// this library is validated against.
#pragma once

#include <functional>

#include "edgenav/tensor.hpp"

namespace edgenav {

// (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps) per element. x is perturbed in
// place and restored; f is evaluated with the tape disabled.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                               Tensor x, double eps = 1e-5) {
  if (eps <= 0) throw ContractError("finite_diff_grad: eps must be positive");
  NoGradGuard ng;
  Tensor g = Tensor::zeros(x.shape());
  auto xd = x.data();
  auto gd = g.data();
  for (size_t i = 0; i < xd.size(); ++i) {
    const double saved = xd[i];
    xd[i] = saved + eps;
    const double fp = f(x);
    xd[i] = saved - eps;
    const double fm = f(x);
    xd[i] = saved;
    gd[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

// Worst-case relative disagreement between two gradients. Entries below
// abs_floor compare on absolute terms: central differences at eps=1e-5 carry
// ~2e-10 of roundoff+truncation noise for O(1) objectives, so entries under
// 1e-5 cannot be held to a 1e-4 relative bar. rel<1e-4 at floor 1e-5 is the
// same gate as |a-b| <= 1e-9 + 1e-4*max(|a|,|b|).
inline double grad_max_rel_err(std::span<const double> analytic,
                               std::span<const double> numeric,
                               double abs_floor = 1e-5) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], b = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(b), abs_floor});
    worst = std::max(worst, std::abs(a - b) / denom);
  }
  return worst;
}

}  // namespace edgenav
