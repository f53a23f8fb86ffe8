#pragma once

// Fixed (non-learnable) image-processing kernels: Gaussian filtering,
// decimation, bilinear interpolation, and the exact adjoints of all three.
// Adjoints are what backpropagation needs; each one is the transpose of the
// linear forward map, including the edge-clamp behavior.

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "isoface/tensor.hpp"

namespace isoface {

struct GaussianKernel {
  int size = 0;       // odd, >= 3
  double sigma = 0.0; // > 0
  Tensor weights;     // size x size, sums to 1
};

inline GaussianKernel gaussian_kernel2d(int size, double sigma) {
  if (size < 3 || size % 2 == 0)
    throw std::invalid_argument("gaussian kernel size must be odd and >= 3");
  if (!(sigma > 0.0))
    throw std::invalid_argument("gaussian sigma must be positive");
  GaussianKernel k;
  k.size = size;
  k.sigma = sigma;
  k.weights = Tensor({std::size_t(size), std::size_t(size)});
  const int r = size / 2;
  double total = 0.0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      double di = i - r, dj = j - r;
      double w = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      k.weights(std::size_t(i), std::size_t(j)) = w;
      total += w;
    }
  for (auto& w : k.weights.data()) w /= total;
  return k;
}

namespace detail {
inline std::size_t clamp_idx(long i, std::size_t n) {
  if (i < 0) return 0;
  if (i >= long(n)) return n - 1;
  return std::size_t(i);
}
}  // namespace detail

// Per-channel convolution with replicate (edge-clamp) padding. Shape
// preserving. Evaluated as x + sum_ab w_ab * (x_shifted - x), which is
// bit-exact on constant images (every difference is exactly zero) and
// algebraically identical to the plain weighted sum because the kernel
// weights sum to 1.
template <typename T>
TensorT<T> depthwise_gaussian_blur(const TensorT<T>& x, const GaussianKernel& k) {
  if (x.rank() != 3) throw std::invalid_argument("blur expects [C,H,W]");
  const std::size_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
  const int r = k.size / 2;
  TensorT<T> y(x.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const double center = double(x(c, i, j));
        double acc = 0.0;
        for (int a = -r; a <= r; ++a) {
          std::size_t ii = detail::clamp_idx(long(i) + a, H);
          for (int b = -r; b <= r; ++b) {
            std::size_t jj = detail::clamp_idx(long(j) + b, W);
            acc += k.weights(std::size_t(a + r), std::size_t(b + r)) *
                   (double(x(c, ii, jj)) - center);
          }
        }
        y(c, i, j) = T(center + acc);
      }
  return y;
}

// Adjoint of depthwise_gaussian_blur: the transpose of the same
// center-plus-differences evaluation.
template <typename T>
TensorT<T> gaussian_blur_adjoint(const TensorT<T>& dy, const GaussianKernel& k) {
  const std::size_t C = dy.extent(0), H = dy.extent(1), W = dy.extent(2);
  const int r = k.size / 2;
  TensorT<T> dx(dy.shape());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        double g = double(dy(c, i, j));
        if (g == 0.0) continue;
        double wsum = 0.0;
        for (int a = -r; a <= r; ++a) {
          std::size_t ii = detail::clamp_idx(long(i) + a, H);
          for (int b = -r; b <= r; ++b) {
            std::size_t jj = detail::clamp_idx(long(j) + b, W);
            const double w = k.weights(std::size_t(a + r), std::size_t(b + r));
            dx(c, ii, jj) += T(w * g);
            wsum += w;
          }
        }
        dx(c, i, j) += T((1.0 - wsum) * g);
      }
  return dx;
}

// Decimation keeping even-index rows/columns; output extents are ceil(n/2).
template <typename T>
TensorT<T> downsample2(const TensorT<T>& x) {
  if (x.rank() != 3) throw std::invalid_argument("downsample2 expects [C,H,W]");
  const std::size_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
  if (H < 2 || W < 2)
    throw std::invalid_argument("downsample2 needs extents >= 2");
  const std::size_t h = (H + 1) / 2, w = (W + 1) / 2;
  TensorT<T> y({C, h, w});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) y(c, i, j) = x(c, 2 * i, 2 * j);
  return y;
}

template <typename T>
TensorT<T> downsample2_adjoint(const TensorT<T>& dy, std::size_t H,
                               std::size_t W) {
  const std::size_t C = dy.extent(0), h = dy.extent(1), w = dy.extent(2);
  TensorT<T> dx({C, H, W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) dx(c, 2 * i, 2 * j) = dy(c, i, j);
  return dx;
}

namespace detail {
struct LerpTap {
  std::size_t lo, hi;
  double frac;  // weight on hi
};
inline LerpTap corner_aligned_tap(std::size_t out_i, std::size_t out_n,
                                  std::size_t in_n) {
  if (in_n == 1 || out_n == 1) return {0, 0, 0.0};
  double pos = double(out_i) * double(in_n - 1) / double(out_n - 1);
  std::size_t lo = std::size_t(pos);
  if (lo >= in_n - 1) return {in_n - 1, in_n - 1, 0.0};
  return {lo, lo + 1, pos - double(lo)};
}
}  // namespace detail

// Bilinear interpolation with corner-aligned sampling to exact extents.
template <typename T>
TensorT<T> upsample_to(const TensorT<T>& x, std::size_t H, std::size_t W) {
  if (x.rank() != 3) throw std::invalid_argument("upsample_to expects [C,H,W]");
  const std::size_t C = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (H < h || W < w)
    throw std::invalid_argument("upsample target smaller than source");
  TensorT<T> y({C, H, W});
  for (std::size_t i = 0; i < H; ++i) {
    auto ti = detail::corner_aligned_tap(i, H, h);
    for (std::size_t j = 0; j < W; ++j) {
      auto tj = detail::corner_aligned_tap(j, W, w);
      for (std::size_t c = 0; c < C; ++c) {
        double v00 = double(x(c, ti.lo, tj.lo));
        double v01 = double(x(c, ti.lo, tj.hi));
        double v10 = double(x(c, ti.hi, tj.lo));
        double v11 = double(x(c, ti.hi, tj.hi));
        double top = v00 + tj.frac * (v01 - v00);
        double bot = v10 + tj.frac * (v11 - v10);
        y(c, i, j) = T(top + ti.frac * (bot - top));
      }
    }
  }
  return y;
}

template <typename T>
TensorT<T> upsample_to_adjoint(const TensorT<T>& dy, std::size_t h,
                               std::size_t w) {
  const std::size_t C = dy.extent(0), H = dy.extent(1), W = dy.extent(2);
  TensorT<T> dx({C, h, w});
  for (std::size_t i = 0; i < H; ++i) {
    auto ti = detail::corner_aligned_tap(i, H, h);
    for (std::size_t j = 0; j < W; ++j) {
      auto tj = detail::corner_aligned_tap(j, W, w);
      for (std::size_t c = 0; c < C; ++c) {
        double g = double(dy(c, i, j));
        dx(c, ti.lo, tj.lo) += T((1 - ti.frac) * (1 - tj.frac) * g);
        dx(c, ti.lo, tj.hi) += T((1 - ti.frac) * tj.frac * g);
        dx(c, ti.hi, tj.lo) += T(ti.frac * (1 - tj.frac) * g);
        dx(c, ti.hi, tj.hi) += T(ti.frac * tj.frac * g);
      }
    }
  }
  return dx;
}

}  // namespace isoface
