#pragma once

// Central-difference gradient oracle. Always runs in 64-bit regardless of
// the precision used on the training path.

#include <functional>

#include "isoface/tensor.hpp"

namespace isoface {

inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                               const Tensor& x, double eps) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    double fp = f(probe);
    probe[i] = orig - eps;
    double fm = f(probe);
    probe[i] = orig;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

// max_i |a_i - b_i| / max(1e-12, max_i |a_i|, max_i |b_i|)
inline double max_relative_error(const Tensor& a, const Tensor& b) {
  double scale = 1e-12, diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    diff = std::max(diff, std::abs(a[i] - b[i]));
  }
  return diff / scale;
}

}  // namespace isoface
