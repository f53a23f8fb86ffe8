#pragma once

// Multi-scale Laplacian-of-Gaussian bottleneck: per scale s the input is
// pushed through s rounds of blur + decimation, reconstructed by one bilinear
// interpolation back to the input extents, and subtracted from the input.
// The S per-scale bands are concatenated along channels and reduced by a
// learnable 1x1 convolution. The Gaussian weights are fixed and never appear
// in the optimizer's parameter set.

#include <cstdint>
#include <random>
#include <vector>

#include "isoface/image_ops.hpp"
#include "isoface/nn.hpp"
#include "isoface/tensor.hpp"

namespace isoface {

struct LoGSpec {
  int scales = 3;          // S
  int kernel_size = 5;
  double sigma = 1.0;
  std::size_t in_planes = 0;   // K
  std::size_t out_planes = 0;  // K'
};

// Fixed-filter bandpass: [K,H,W] -> [S*K,H,W].
template <typename T>
TensorT<T> bandpass(const TensorT<T>& x, const LoGSpec& spec,
                    const GaussianKernel& kernel) {
  if (x.rank() != 3) throw std::invalid_argument("bandpass expects [C,H,W]");
  if (spec.scales < 1) throw std::invalid_argument("bandpass needs S >= 1");
  const std::size_t K = x.extent(0), H = x.extent(1), W = x.extent(2);
  const std::size_t min_extent = std::size_t(1) << (spec.scales - 1);
  if (H < 2 * min_extent || W < 2 * min_extent)
    throw std::invalid_argument("spatial extent too small for scale count");
  TensorT<T> out({std::size_t(spec.scales) * K, H, W});
  TensorT<T> chain = x;
  for (int s = 1; s <= spec.scales; ++s) {
    chain = downsample2(depthwise_gaussian_blur(chain, kernel));
    TensorT<T> low = upsample_to(chain, H, W);
    const std::size_t base = std::size_t(s - 1) * K * H * W;
    for (std::size_t i = 0; i < K * H * W; ++i)
      out[base + i] = x[i] - low[i];
  }
  return out;
}

// Adjoint of bandpass: [S*K,H,W] cotangent -> [K,H,W].
template <typename T>
TensorT<T> bandpass_adjoint(const TensorT<T>& dbands, const LoGSpec& spec,
                            const GaussianKernel& kernel, std::size_t H,
                            std::size_t W) {
  const std::size_t K = dbands.extent(0) / std::size_t(spec.scales);
  // chain extents per depth
  std::vector<std::pair<std::size_t, std::size_t>> dims;  // pre-decimation dims
  std::size_t h = H, w = W;
  for (int s = 0; s < spec.scales; ++s) {
    dims.emplace_back(h, w);
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  TensorT<T> dx({K, H, W});
  TensorT<T> dchain;  // cotangent flowing through the shared blur/down chain
  for (int s = spec.scales; s >= 1; --s) {
    TensorT<T> dband({K, H, W});
    const std::size_t base = std::size_t(s - 1) * K * H * W;
    for (std::size_t i = 0; i < K * H * W; ++i) {
      dband[i] = dbands[base + i];
      dx[i] += dbands[base + i];
    }
    // band_s = x - up(chain_s); push -dband through the upsample into the
    // chain cotangent at depth s, then merge with deeper scales' cotangent.
    std::size_t hs = dims[s - 1].first, ws = dims[s - 1].second;
    std::size_t hd = (hs + 1) / 2, wd = (ws + 1) / 2;
    TensorT<T> d_at_depth = upsample_to_adjoint(dband, hd, wd);
    d_at_depth *= T(-1);
    if (dchain.size() != 0) d_at_depth += dchain;
    // one blur+decimate stage back up
    dchain = gaussian_blur_adjoint(downsample2_adjoint(d_at_depth, hs, ws),
                                   kernel);
  }
  dx += dchain;
  return dx;
}

// Bandpass followed by the learnable pointwise reduction S*K -> K'.
template <typename T>
class DeepLoG {
 public:
  DeepLoG(std::string name, const LoGSpec& spec, std::mt19937_64& rng)
      : spec_(spec),
        kernel_(gaussian_kernel2d(spec.kernel_size, spec.sigma)),
        reduction_(name + ".reduce", std::size_t(spec.scales) * spec.in_planes,
                   spec.out_planes, 1, 1, rng) {
    // The bandpass attenuates smooth low-level features by more than an
    // order of magnitude, and the backbone carries no normalization layers
    // that could re-balance the two branches at the fusion point. Starting
    // the reduction with a compensating gain keeps this branch audible.
    for (auto& w : reduction_.weight().value.data()) w *= T(16);
    reduction_.bias().value.fill(T(0));  // reduction bias starts at zero
  }

  const LoGSpec& spec() const { return spec_; }
  const GaussianKernel& kernel() const { return kernel_; }
  Conv2d<T>& reduction() { return reduction_; }

  void collect_params(ParamRefs<T>& out) { reduction_.collect_params(out); }

  void begin_sequence() {
    reduction_.begin_sequence();
    dims_.clear();
  }

  TensorT<T> forward(const TensorT<T>& x) {
    check(x);
    dims_.emplace_back(x.extent(1), x.extent(2));
    return reduction_.forward(bandpass(x, spec_, kernel_));
  }

  TensorT<T> infer(const TensorT<T>& x) const {
    check(x);
    return reduction_.infer(bandpass(x, spec_, kernel_));
  }

  TensorT<T> backward(const TensorT<T>& dy) {
    if (dims_.empty()) throw std::logic_error("log backward without forward");
    auto [H, W] = dims_.back();
    dims_.pop_back();
    TensorT<T> dbands = reduction_.backward(dy);
    return bandpass_adjoint(dbands, spec_, kernel_, H, W);
  }

 private:
  void check(const TensorT<T>& x) const {
    if (x.extent(0) != spec_.in_planes)
      throw std::invalid_argument("deep LoG channel mismatch");
  }

  LoGSpec spec_;
  GaussianKernel kernel_;
  Conv2d<T> reduction_;
  std::vector<std::pair<std::size_t, std::size_t>> dims_;
};

}  // namespace isoface
