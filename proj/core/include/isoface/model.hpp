#pragma once

// Two-branch recurrent detector: per frame, an RGB conv branch and a
// conv + deep-LoG branch are concatenated and fused by a grouped pointwise
// convolution, refined by conv blocks (each followed by 2x pooling and
// dropout), pooled globally, then a bidirectional LSTM over the frames
// produces one embedding per sequence.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "isoface/loglayer.hpp"
#include "isoface/nn.hpp"
#include "isoface/tensor.hpp"

namespace isoface {

struct ModelConfig {
  std::size_t height = 32, width = 32, channels = 3;
  std::size_t branch_channels = 8;     // per-branch output planes
  std::size_t fusion_channels = 16;
  std::size_t fusion_groups = 2;       // g in {1,2}
  std::vector<std::size_t> backbone_channels = {16, 32, 128};  // last = P
  std::size_t hidden_dim = 32;         // D
  RnnFusion rnn_fusion = RnnFusion::kCat;
  bool single_branch = false;
  int log_scales = 3;
  int log_kernel = 5;
  double log_sigma = 1.0;
  double dropout = 0.2;

  std::size_t pooled_dim() const { return backbone_channels.back(); }
  std::size_t embedding_dim() const {
    return rnn_fusion == RnnFusion::kCat ? 2 * hidden_dim : hidden_dim;
  }
  std::size_t fusion_input_channels() const {
    return single_branch ? branch_channels : 2 * branch_channels;
  }

  void validate() const {
    if (height == 0 || width == 0 || channels == 0)
      throw std::invalid_argument("bad input extents");
    if (backbone_channels.empty())
      throw std::invalid_argument("backbone needs at least one block");
    if (fusion_groups == 0 ||
        fusion_input_channels() % fusion_groups != 0 ||
        fusion_channels % fusion_groups != 0)
      throw std::invalid_argument(
          "fusion channels must be divisible by fusion groups");
    // each backbone block halves the spatial map; smallest must stay >= 4
    std::size_t h = height, w = width;
    for (std::size_t i = 0; i < backbone_channels.size(); ++i) {
      if (h % 2 != 0 || w % 2 != 0)
        throw std::invalid_argument("spatial extents must halve evenly");
      h /= 2;
      w /= 2;
    }
    if (h < 4 || w < 4)
      throw std::invalid_argument("final feature map smaller than 4x4");
    if (!(dropout >= 0.0 && dropout < 1.0))
      throw std::invalid_argument("dropout p in [0,1)");
  }
};

struct FaceSequence {
  std::string video_id;
  int label = 0;  // 0 = natural, 1 = manipulated
  std::size_t start_index = 0;
  std::vector<Tensor> frames;  // each [C,H,W]
};

template <typename T>
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const std::size_t cb = cfg.branch_channels;
    rgb_conv_.emplace("rgb.conv", cfg.channels, cb, 3, 1, rng);
    if (!cfg.single_branch) {
      log_conv_.emplace("log.conv", cfg.channels, cb, 3, 1, rng);
      LoGSpec ls;
      ls.scales = cfg.log_scales;
      ls.kernel_size = cfg.log_kernel;
      ls.sigma = cfg.log_sigma;
      ls.in_planes = cb;
      ls.out_planes = cb;
      deep_log_.emplace("log.deep", ls, rng);
    }
    fusion_.emplace("fusion", cfg.fusion_input_channels(), cfg.fusion_channels,
                    1, cfg.fusion_groups, rng);
    std::size_t in_ch = cfg.fusion_channels;
    for (std::size_t i = 0; i < cfg.backbone_channels.size(); ++i) {
      blocks_.emplace_back("backbone" + std::to_string(i + 1), in_ch,
                           cfg.backbone_channels[i], rng,
                           cfg.dropout, seed ^ (0x9e3779b97f4a7c15ull * (i + 1)));
      in_ch = cfg.backbone_channels[i];
    }
    rnn_.emplace("rnn", cfg.pooled_dim(), cfg.hidden_dim, cfg.rnn_fusion, rng);
    assign_lr_scales();
  }

  const ModelConfig& config() const { return cfg_; }

  ParamRefs<T> params() {
    ParamRefs<T> out;
    rgb_conv_->collect_params(out);
    if (!cfg_.single_branch) {
      log_conv_->collect_params(out);
      deep_log_->collect_params(out);
    }
    fusion_->collect_params(out);
    for (auto& b : blocks_) b.conv.collect_params(out);
    rnn_->collect_params(out);
    return out;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (const Param<T>* p : params()) n += p->value.size();
    return n;
  }

  // Per-block rates: fusion, LoG branch and recurrent head keep the global
  // rate; backbone block at depth L (1-based, downstream of fusion) runs at
  // 1/2^L; the RGB pre-fusion branch is treated like a depth-1 block.
  void assign_lr_scales() {
    rgb_conv_->weight().lr_scale = 0.5;
    rgb_conv_->bias().lr_scale = 0.5;
    if (!cfg_.single_branch) {
      ParamRefs<T> lp;
      log_conv_->collect_params(lp);
      deep_log_->collect_params(lp);
      for (auto* p : lp) p->lr_scale = 1.0;
    }
    {
      ParamRefs<T> fp;
      fusion_->collect_params(fp);
      for (auto* p : fp) p->lr_scale = 1.0;
    }
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const double s = 1.0 / double(std::size_t(1) << (i + 1));
      blocks_[i].conv.weight().lr_scale = s;
      blocks_[i].conv.bias().lr_scale = s;
    }
    {
      ParamRefs<T> rp;
      rnn_->collect_params(rp);
      for (auto* p : rp) p->lr_scale = 1.0;
    }
  }

  TensorT<T> forward_sequence(const std::vector<TensorT<T>>& frames,
                              bool train) {
    if (frames.empty()) throw std::invalid_argument("empty frame sequence");
    begin_sequence();
    std::vector<TensorT<T>> pooled;
    pooled.reserve(frames.size());
    for (const auto& f : frames) pooled.push_back(forward_frame(f, train));
    seq_len_ = frames.size();
    return rnn_->forward(pooled);
  }

  // Backward through the recurrent head and every frame; accumulates
  // parameter gradients. Must follow a matching forward_sequence.
  void backward_sequence(const TensorT<T>& d_embedding) {
    std::vector<TensorT<T>> d_pooled = rnn_->backward(d_embedding);
    for (std::size_t t = seq_len_; t-- > 0;) backward_frame(d_pooled[t]);
  }

  TensorT<T> embed(const std::vector<TensorT<T>>& frames) {
    return forward_sequence(frames, /*train=*/false);
  }

  BiLstm<T>& rnn() { return *rnn_; }
  Conv2d<T>& rgb_conv() { return *rgb_conv_; }
  Conv2d<T>& fusion() { return *fusion_; }
  DeepLoG<T>& deep_log() { return *deep_log_; }
  std::size_t backbone_depth() const { return blocks_.size(); }
  Conv2d<T>& backbone_conv(std::size_t i) { return blocks_[i].conv; }
  void reseed_dropout(std::uint64_t seed) {
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].dropout.reseed(seed ^ (0x9e3779b97f4a7c15ull * (i + 1)));
  }

 private:
  struct Block {
    Conv2d<T> conv;
    ReLU<T> relu;
    AvgPool2<T> pool;
    Dropout<T> dropout;
    Block(const std::string& name, std::size_t in_ch, std::size_t out_ch,
          std::mt19937_64& rng, double p, std::uint64_t drop_seed)
        : conv(name + ".conv", in_ch, out_ch, 3, 1, rng),
          dropout(p, drop_seed) {}
  };

  void begin_sequence() {
    rgb_conv_->begin_sequence();
    rgb_relu_.begin_sequence();
    if (!cfg_.single_branch) {
      log_conv_->begin_sequence();
      log_relu_.begin_sequence();
      deep_log_->begin_sequence();
    }
    fusion_->begin_sequence();
    fusion_relu_.begin_sequence();
    for (auto& b : blocks_) {
      b.conv.begin_sequence();
      b.relu.begin_sequence();
      b.pool.begin_sequence();
      b.dropout.begin_sequence();
    }
    gap_.begin_sequence();
  }

  TensorT<T> forward_frame(const TensorT<T>& x, bool train) {
    if (x.extent(0) != cfg_.channels || x.extent(1) != cfg_.height ||
        x.extent(2) != cfg_.width)
      throw std::invalid_argument("frame extents do not match model config");
    TensorT<T> rgb = rgb_relu_.forward(rgb_conv_->forward(x));
    TensorT<T> fused_in;
    if (cfg_.single_branch) {
      fused_in = std::move(rgb);
    } else {
      TensorT<T> lg =
          deep_log_->forward(log_relu_.forward(log_conv_->forward(x)));
      fused_in = concat_channels(rgb, lg);
    }
    TensorT<T> y = fusion_relu_.forward(fusion_->forward(fused_in));
    for (auto& b : blocks_) {
      y = b.pool.forward(b.relu.forward(b.conv.forward(y)));
      y = b.dropout.forward(y, train);
    }
    return gap_.forward(y);
  }

  void backward_frame(const TensorT<T>& d_pooled) {
    TensorT<T> d = gap_.backward(d_pooled);
    for (std::size_t i = blocks_.size(); i-- > 0;) {
      auto& b = blocks_[i];
      d = b.conv.backward(b.relu.backward(b.pool.backward(b.dropout.backward(d))));
    }
    d = fusion_->backward(fusion_relu_.backward(d));
    if (cfg_.single_branch) {
      rgb_conv_->backward(rgb_relu_.backward(d));
      return;
    }
    auto [d_rgb, d_log] = split_channels(d, cfg_.branch_channels);
    rgb_conv_->backward(rgb_relu_.backward(d_rgb));
    log_conv_->backward(log_relu_.backward(deep_log_->backward(d_log)));
  }

  static TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
    TensorT<T> out({a.extent(0) + b.extent(0), a.extent(1), a.extent(2)});
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(),
              out.data().begin() + long(a.size()));
    return out;
  }

  static std::pair<TensorT<T>, TensorT<T>> split_channels(const TensorT<T>& d,
                                                          std::size_t c_first) {
    const std::size_t H = d.extent(1), W = d.extent(2);
    TensorT<T> a({c_first, H, W});
    TensorT<T> b({d.extent(0) - c_first, H, W});
    std::copy(d.data().begin(), d.data().begin() + long(a.size()),
              a.data().begin());
    std::copy(d.data().begin() + long(a.size()), d.data().end(),
              b.data().begin());
    return {std::move(a), std::move(b)};
  }

  ModelConfig cfg_;
  std::optional<Conv2d<T>> rgb_conv_;
  ReLU<T> rgb_relu_;
  std::optional<Conv2d<T>> log_conv_;
  ReLU<T> log_relu_;
  std::optional<DeepLoG<T>> deep_log_;
  std::optional<Conv2d<T>> fusion_;
  ReLU<T> fusion_relu_;
  std::vector<Block> blocks_;
  GlobalAvgPool<T> gap_;
  std::optional<BiLstm<T>> rnn_;
  std::size_t seq_len_ = 0;
};

}  // namespace isoface
