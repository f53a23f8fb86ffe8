#pragma once

// Learnable layers with exact analytic gradients, the Adam optimizer with
// per-parameter learning rates, and the validation-plateau schedule.
//
// Tape discipline: every layer keeps a stack of per-call caches. A training
// pass calls begin_sequence(), then forward once per frame, then backward in
// reverse frame order (each backward pops one cache). Parameter gradients
// accumulate until zero_grad().

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "isoface/tensor.hpp"

namespace isoface {

template <typename T>
struct Param {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;
  double lr_scale = 1.0;

  explicit Param(std::string n, std::vector<std::size_t> shape)
      : name(std::move(n)), value(shape), grad(shape) {}
};

template <typename T>
using ParamRefs = std::vector<Param<T>*>;

// --- conv2d ----------------------------------------------------------------

// Grouped 2-D convolution, stride 1, replicate padding; groups=1 kernel k is
// a plain conv, groups=g with k=1 is the branch-fusion pointwise conv.
template <typename T>
class Conv2d {
 public:
  Conv2d(std::string name, std::size_t in_ch, std::size_t out_ch,
         std::size_t ksize, std::size_t groups, std::mt19937_64& rng)
      : in_ch_(in_ch),
        out_ch_(out_ch),
        ksize_(ksize),
        groups_(groups),
        weight_(name + ".weight", {out_ch, in_ch / groups, ksize, ksize}),
        bias_(name + ".bias", {out_ch}) {
    if (groups == 0 || in_ch % groups != 0 || out_ch % groups != 0)
      throw std::invalid_argument(
          "conv channel counts must be divisible by groups");
    if (ksize % 2 == 0) throw std::invalid_argument("conv kernel must be odd");
    // fan-in scaled normal init for weights, uniform for biases; a nonzero
    // bias keeps ReLU pre-activations off the exact kink when a whole
    // receptive field is zero, which otherwise breaks finite-difference
    // gradient checks
    const double fan_in = double(in_ch / groups) * double(ksize * ksize);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& w : weight_.value.data()) w = T(dist(rng));
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> bdist(-bound, bound);
    for (auto& b : bias_.value.data()) b = T(bdist(rng));
  }

  std::size_t in_channels() const { return in_ch_; }
  std::size_t out_channels() const { return out_ch_; }

  void collect_params(ParamRefs<T>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

  void begin_sequence() { inputs_.clear(); }

  TensorT<T> forward(const TensorT<T>& x) {
    check_input(x);
    inputs_.push_back(x);
    return apply(x);
  }

  // Inference-only path, no tape.
  TensorT<T> infer(const TensorT<T>& x) const {
    check_input(x);
    return apply(x);
  }

  TensorT<T> backward(const TensorT<T>& dy) {
    if (inputs_.empty()) throw std::logic_error("conv backward without forward");
    const TensorT<T> x = std::move(inputs_.back());
    inputs_.pop_back();
    const std::size_t H = x.extent(1), W = x.extent(2);
    const std::size_t icg = in_ch_ / groups_, ocg = out_ch_ / groups_;
    const std::size_t k = ksize_;
    const auto [ti, tj] = clamp_tables(H, W);
    TensorT<T> dx(x.shape());
    const T* xd = x.data().data();
    const T* dyd = dy.data().data();
    const T* wd = weight_.value.data().data();
    T* dxd = dx.data().data();
    T* wgd = weight_.grad.data().data();
    for (std::size_t oc = 0; oc < out_ch_; ++oc) {
      const std::size_t g = oc / ocg;
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          const double gout = double(dyd[(oc * H + i) * W + j]);
          if (gout == 0.0) continue;
          bias_.grad[oc] += T(gout);
          const std::size_t* rows = &ti[i * k];
          const std::size_t* cols = &tj[j * k];
          const std::size_t rr = k / 2;
          const bool interior = j >= rr && j + rr < W;
          for (std::size_t ic = 0; ic < icg; ++ic) {
            const T* xplane = xd + (g * icg + ic) * H * W;
            T* dxplane = dxd + (g * icg + ic) * H * W;
            for (std::size_t ka = 0; ka < k; ++ka) {
              const T* xrow = xplane + rows[ka] * W;
              T* dxrow = dxplane + rows[ka] * W;
              const std::size_t wbase = ((oc * icg + ic) * k + ka) * k;
              if (interior) {
                const T* xseg = xrow + (j - rr);
                T* dxseg = dxrow + (j - rr);
                for (std::size_t kb = 0; kb < k; ++kb) {
                  wgd[wbase + kb] += T(gout * double(xseg[kb]));
                  dxseg[kb] += T(gout * double(wd[wbase + kb]));
                }
              } else {
                for (std::size_t kb = 0; kb < k; ++kb) {
                  wgd[wbase + kb] += T(gout * double(xrow[cols[kb]]));
                  dxrow[cols[kb]] += T(gout * double(wd[wbase + kb]));
                }
              }
            }
          }
        }
    }
    return dx;
  }

 private:
  static std::size_t clamp(long i, std::size_t n) {
    if (i < 0) return 0;
    if (i >= long(n)) return n - 1;
    return std::size_t(i);
  }

  void check_input(const TensorT<T>& x) const {
    if (x.rank() != 3 || x.extent(0) != in_ch_)
      throw std::invalid_argument("conv input channel mismatch");
  }

  // Precomputed replicate-clamped source indices: entry [i*k + a] is the
  // input row sampled by kernel row a at output row i (same for columns).
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> clamp_tables(
      std::size_t H, std::size_t W) const {
    const long r = long(ksize_) / 2;
    std::vector<std::size_t> ti(H * ksize_), tj(W * ksize_);
    for (std::size_t i = 0; i < H; ++i)
      for (long a = -r; a <= r; ++a)
        ti[i * ksize_ + std::size_t(a + r)] = clamp(long(i) + a, H);
    for (std::size_t j = 0; j < W; ++j)
      for (long b = -r; b <= r; ++b)
        tj[j * ksize_ + std::size_t(b + r)] = clamp(long(j) + b, W);
    return {std::move(ti), std::move(tj)};
  }

  TensorT<T> apply(const TensorT<T>& x) const {
    const std::size_t H = x.extent(1), W = x.extent(2);
    const std::size_t icg = in_ch_ / groups_, ocg = out_ch_ / groups_;
    const std::size_t k = ksize_;
    const auto [ti, tj] = clamp_tables(H, W);
    TensorT<T> y({out_ch_, H, W});
    const T* xd = x.data().data();
    const T* wd = weight_.value.data().data();
    T* yd = y.data().data();
    for (std::size_t oc = 0; oc < out_ch_; ++oc) {
      const std::size_t g = oc / ocg;
      for (std::size_t i = 0; i < H; ++i) {
        const std::size_t* rows = &ti[i * k];
        const std::size_t r = k / 2;
        for (std::size_t j = 0; j < W; ++j) {
          // away from the left/right borders the sampled columns are
          // contiguous, which lets the inner loop vectorize
          const bool interior = j >= r && j + r < W;
          const std::size_t* cols = &tj[j * k];
          // four rotating accumulators keep the row sums out of one serial
          // dependency chain; the combination order is still fixed
          double acc[4] = {0.0, 0.0, 0.0, 0.0};
          std::size_t lane = 0;
          for (std::size_t ic = 0; ic < icg; ++ic) {
            const T* xplane = xd + (g * icg + ic) * H * W;
            for (std::size_t ka = 0; ka < k; ++ka) {
              const T* xrow = xplane + rows[ka] * W;
              const T* wrow = wd + ((oc * icg + ic) * k + ka) * k;
              double s = 0.0;
              if (interior) {
                const T* xseg = xrow + (j - r);
                for (std::size_t kb = 0; kb < k; ++kb)
                  s += double(wrow[kb]) * double(xseg[kb]);
              } else {
                for (std::size_t kb = 0; kb < k; ++kb)
                  s += double(wrow[kb]) * double(xrow[cols[kb]]);
              }
              acc[lane & 3] += s;
              ++lane;
            }
          }
          yd[(oc * H + i) * W + j] =
              T(double(bias_.value[oc]) + (acc[0] + acc[1]) + (acc[2] + acc[3]));
        }
      }
    }
    return y;
  }

  std::size_t in_ch_, out_ch_, ksize_, groups_;
  Param<T> weight_, bias_;
  std::vector<TensorT<T>> inputs_;
};

// --- relu ------------------------------------------------------------------

template <typename T>
class ReLU {
 public:
  void begin_sequence() { inputs_.clear(); }

  TensorT<T> forward(const TensorT<T>& x) {
    inputs_.push_back(x);
    return infer(x);
  }

  TensorT<T> infer(const TensorT<T>& x) const {
    TensorT<T> y = x;
    for (auto& v : y.data()) v = v > T(0) ? v : T(0);
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) {
    if (inputs_.empty()) throw std::logic_error("relu backward without forward");
    TensorT<T> dx = dy;
    const TensorT<T>& x = inputs_.back();
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (x[i] <= T(0)) dx[i] = T(0);
    inputs_.pop_back();
    return dx;
  }

 private:
  std::vector<TensorT<T>> inputs_;
};

// --- 2x2 average pool ------------------------------------------------------

template <typename T>
class AvgPool2 {
 public:
  void begin_sequence() { shapes_.clear(); }

  TensorT<T> forward(const TensorT<T>& x) {
    shapes_.push_back(x.shape());
    return infer(x);
  }

  TensorT<T> infer(const TensorT<T>& x) const {
    const std::size_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
    if (H % 2 != 0 || W % 2 != 0)
      throw std::invalid_argument("avg pool needs even extents");
    TensorT<T> y({C, H / 2, W / 2});
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < H / 2; ++i)
        for (std::size_t j = 0; j < W / 2; ++j)
          y(c, i, j) = T(0.25 * (double(x(c, 2 * i, 2 * j)) +
                                 double(x(c, 2 * i, 2 * j + 1)) +
                                 double(x(c, 2 * i + 1, 2 * j)) +
                                 double(x(c, 2 * i + 1, 2 * j + 1))));
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) {
    if (shapes_.empty()) throw std::logic_error("pool backward without forward");
    TensorT<T> dx(shapes_.back());
    shapes_.pop_back();
    const std::size_t C = dy.extent(0), h = dy.extent(1), w = dy.extent(2);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const T g = T(0.25 * double(dy(c, i, j)));
          dx(c, 2 * i, 2 * j) = g;
          dx(c, 2 * i, 2 * j + 1) = g;
          dx(c, 2 * i + 1, 2 * j) = g;
          dx(c, 2 * i + 1, 2 * j + 1) = g;
        }
    return dx;
  }

 private:
  std::vector<std::vector<std::size_t>> shapes_;
};

// --- global average pool ---------------------------------------------------

template <typename T>
class GlobalAvgPool {
 public:
  void begin_sequence() { shapes_.clear(); }

  TensorT<T> forward(const TensorT<T>& x) {
    shapes_.push_back(x.shape());
    return infer(x);
  }

  TensorT<T> infer(const TensorT<T>& x) const {
    const std::size_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
    TensorT<T> y({C});
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) acc += double(x(c, i, j));
      y[c] = T(acc / double(H * W));
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) {
    if (shapes_.empty()) throw std::logic_error("gap backward without forward");
    TensorT<T> dx(shapes_.back());
    shapes_.pop_back();
    const std::size_t C = dx.extent(0), H = dx.extent(1), W = dx.extent(2);
    for (std::size_t c = 0; c < C; ++c) {
      const T g = T(double(dy[c]) / double(H * W));
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) dx(c, i, j) = g;
    }
    return dx;
  }

 private:
  std::vector<std::vector<std::size_t>> shapes_;
};

// --- dropout ---------------------------------------------------------------

// Inverted dropout with a seeded generator; identity in eval mode.
template <typename T>
class Dropout {
 public:
  Dropout(double p, std::uint64_t seed) : p_(p), rng_(seed) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout p in [0,1)");
  }

  void reseed(std::uint64_t seed) { rng_.seed(seed); }
  void begin_sequence() { masks_.clear(); }

  TensorT<T> forward(const TensorT<T>& x, bool train) {
    if (!train || p_ == 0.0) {
      masks_.emplace_back();  // empty mask = identity
      return x;
    }
    std::bernoulli_distribution keep(1.0 - p_);
    TensorT<T> mask(x.shape());
    const T scale = T(1.0 / (1.0 - p_));
    for (auto& m : mask.data()) m = keep(rng_) ? scale : T(0);
    TensorT<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
    masks_.push_back(std::move(mask));
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy) {
    if (masks_.empty()) throw std::logic_error("dropout backward without forward");
    TensorT<T> mask = std::move(masks_.back());
    masks_.pop_back();
    if (mask.size() == 0) return dy;
    TensorT<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
    return dx;
  }

 private:
  double p_;
  std::mt19937_64 rng_;
  std::vector<TensorT<T>> masks_;
};

// --- LSTM cell -------------------------------------------------------------

// Standard 4-gate cell; gate row order in the stacked matrices is
// input, forget, cell, output. sequence() returns the final hidden state and
// the backward pass runs through time, yielding gradients for every input.
template <typename T>
class LstmCell {
 public:
  LstmCell(std::string name, std::size_t input_dim, std::size_t hidden_dim,
           std::mt19937_64& rng)
      : in_(input_dim),
        hid_(hidden_dim),
        wx_(name + ".wx", {4 * hidden_dim, input_dim}),
        wh_(name + ".wh", {4 * hidden_dim, hidden_dim}),
        b_(name + ".b", {4 * hidden_dim}) {
    const double bound = 1.0 / std::sqrt(double(hidden_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& w : wx_.value.data()) w = T(dist(rng));
    for (auto& w : wh_.value.data()) w = T(dist(rng));
    // forget-gate bias starts at 1
    for (std::size_t i = 0; i < hid_; ++i) b_.value[hid_ + i] = T(1);
  }

  std::size_t input_dim() const { return in_; }
  std::size_t hidden_dim() const { return hid_; }

  void collect_params(ParamRefs<T>& out) {
    out.push_back(&wx_);
    out.push_back(&wh_);
    out.push_back(&b_);
  }
  Param<T>& wx() { return wx_; }
  Param<T>& wh() { return wh_; }
  Param<T>& b() { return b_; }

  // Runs the cell over xs from zero state; caches everything BPTT needs.
  TensorT<T> sequence_forward(const std::vector<TensorT<T>>& xs) {
    if (xs.empty()) throw std::invalid_argument("empty sequence");
    tape_.clear();
    tape_.reserve(xs.size());
    TensorT<T> h({hid_}), c({hid_});
    for (const auto& x : xs) {
      StepTape st;
      st.x = x;
      st.h_prev = h;
      st.c_prev = c;
      step_into(x, h, c, st);
      h = st.h;
      c = st.c;
      tape_.push_back(std::move(st));
    }
    return h;
  }

  // Inference-only single step from an explicit state.
  void step(const TensorT<T>& x, TensorT<T>& h, TensorT<T>& c) const {
    StepTape st;
    st.h_prev = h;
    st.c_prev = c;
    step_into(x, h, c, st);
    h = st.h;
    c = st.c;
  }

  // dh_final is the cotangent of the final hidden state. Returns per-step
  // input cotangents; accumulates into the weight grads.
  std::vector<TensorT<T>> sequence_backward(const TensorT<T>& dh_final) {
    if (tape_.empty()) throw std::logic_error("lstm backward without forward");
    const std::size_t F = tape_.size();
    std::vector<TensorT<T>> dxs(F, TensorT<T>({in_}));
    TensorT<T> dh = dh_final, dc({hid_});
    for (std::size_t t = F; t-- > 0;) {
      const StepTape& st = tape_[t];
      TensorT<T> da({4 * hid_});
      for (std::size_t k = 0; k < hid_; ++k) {
        const double i_g = double(st.gate_i[k]), f_g = double(st.gate_f[k]);
        const double g_g = double(st.gate_g[k]), o_g = double(st.gate_o[k]);
        const double tc = double(st.tanh_c[k]);
        const double dhk = double(dh[k]);
        double dck = double(dc[k]) + dhk * o_g * (1.0 - tc * tc);
        da[k] = T(dck * g_g * i_g * (1.0 - i_g));                      // input gate
        da[hid_ + k] = T(dck * double(st.c_prev[k]) * f_g * (1.0 - f_g));
        da[2 * hid_ + k] = T(dck * i_g * (1.0 - g_g * g_g));           // cell gate
        da[3 * hid_ + k] = T(dhk * tc * o_g * (1.0 - o_g));            // output gate
        dc[k] = T(dck * f_g);
      }
      // weight grads and upstream cotangents
      TensorT<T> dh_prev({hid_});
      for (std::size_t r = 0; r < 4 * hid_; ++r) {
        const double g = double(da[r]);
        if (g == 0.0) continue;
        b_.grad[r] += T(g);
        for (std::size_t k = 0; k < in_; ++k) {
          wx_.grad(r, k) += T(g * double(st.x[k]));
          dxs[t][k] += T(g * double(wx_.value(r, k)));
        }
        for (std::size_t k = 0; k < hid_; ++k) {
          wh_.grad(r, k) += T(g * double(st.h_prev[k]));
          dh_prev[k] += T(g * double(wh_.value(r, k)));
        }
      }
      dh = std::move(dh_prev);
    }
    tape_.clear();
    return dxs;
  }

 private:
  struct StepTape {
    TensorT<T> x, h_prev, c_prev;
    TensorT<T> gate_i, gate_f, gate_g, gate_o, tanh_c;
    TensorT<T> h, c;
  };

  void step_into(const TensorT<T>& x, const TensorT<T>& h_prev,
                 const TensorT<T>& c_prev, StepTape& st) const {
    if (x.size() != in_) throw std::invalid_argument("lstm input dim mismatch");
    TensorT<T> a({4 * hid_});
    for (std::size_t r = 0; r < 4 * hid_; ++r) {
      double acc = double(b_.value[r]);
      for (std::size_t k = 0; k < in_; ++k)
        acc += double(wx_.value(r, k)) * double(x[k]);
      for (std::size_t k = 0; k < hid_; ++k)
        acc += double(wh_.value(r, k)) * double(h_prev[k]);
      a[r] = T(acc);
    }
    st.gate_i = TensorT<T>({hid_});
    st.gate_f = TensorT<T>({hid_});
    st.gate_g = TensorT<T>({hid_});
    st.gate_o = TensorT<T>({hid_});
    st.tanh_c = TensorT<T>({hid_});
    st.h = TensorT<T>({hid_});
    st.c = TensorT<T>({hid_});
    for (std::size_t k = 0; k < hid_; ++k) {
      const double i_g = sigmoid(double(a[k]));
      const double f_g = sigmoid(double(a[hid_ + k]));
      const double g_g = std::tanh(double(a[2 * hid_ + k]));
      const double o_g = sigmoid(double(a[3 * hid_ + k]));
      const double c_new = f_g * double(c_prev[k]) + i_g * g_g;
      const double tc = std::tanh(c_new);
      st.gate_i[k] = T(i_g);
      st.gate_f[k] = T(f_g);
      st.gate_g[k] = T(g_g);
      st.gate_o[k] = T(o_g);
      st.tanh_c[k] = T(tc);
      st.c[k] = T(c_new);
      st.h[k] = T(o_g * tc);
    }
  }

  static double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

  std::size_t in_, hid_;
  Param<T> wx_, wh_, b_;
  std::vector<StepTape> tape_;
};

// --- bidirectional head ----------------------------------------------------

enum class RnnFusion { kCat, kSum };

inline RnnFusion parse_rnn_fusion(const std::string& s) {
  if (s == "cat") return RnnFusion::kCat;
  if (s == "sum") return RnnFusion::kSum;
  throw std::invalid_argument("rnn fusion must be 'cat' or 'sum'");
}

// Runs one cell over xs and an independently weighted cell over reversed(xs);
// final states fused by concatenation (dim 2D) or sum (dim D).
template <typename T>
class BiLstm {
 public:
  BiLstm(std::string name, std::size_t input_dim, std::size_t hidden_dim,
         RnnFusion fusion, std::mt19937_64& rng)
      : fusion_(fusion),
        fwd_(name + ".fwd", input_dim, hidden_dim, rng),
        bwd_(name + ".bwd", input_dim, hidden_dim, rng) {}

  std::size_t output_dim() const {
    return fusion_ == RnnFusion::kCat ? 2 * fwd_.hidden_dim()
                                      : fwd_.hidden_dim();
  }
  RnnFusion fusion() const { return fusion_; }
  LstmCell<T>& forward_cell() { return fwd_; }
  LstmCell<T>& backward_cell() { return bwd_; }

  void collect_params(ParamRefs<T>& out) {
    fwd_.collect_params(out);
    bwd_.collect_params(out);
  }

  TensorT<T> forward(const std::vector<TensorT<T>>& xs) {
    if (xs.empty()) throw std::invalid_argument("empty sequence");
    seq_len_ = xs.size();
    TensorT<T> hf = fwd_.sequence_forward(xs);
    std::vector<TensorT<T>> rev(xs.rbegin(), xs.rend());
    TensorT<T> hb = bwd_.sequence_forward(rev);
    return fuse(hf, hb);
  }

  std::vector<TensorT<T>> backward(const TensorT<T>& d_out) {
    const std::size_t D = fwd_.hidden_dim();
    TensorT<T> dhf({D}), dhb({D});
    if (fusion_ == RnnFusion::kCat) {
      for (std::size_t k = 0; k < D; ++k) {
        dhf[k] = d_out[k];
        dhb[k] = d_out[D + k];
      }
    } else {
      dhf = d_out;
      dhb = d_out;
    }
    std::vector<TensorT<T>> dxs = fwd_.sequence_backward(dhf);
    std::vector<TensorT<T>> dxs_rev = bwd_.sequence_backward(dhb);
    for (std::size_t t = 0; t < seq_len_; ++t)
      dxs[t] += dxs_rev[seq_len_ - 1 - t];
    return dxs;
  }

 private:
  TensorT<T> fuse(const TensorT<T>& hf, const TensorT<T>& hb) const {
    const std::size_t D = fwd_.hidden_dim();
    if (fusion_ == RnnFusion::kCat) {
      TensorT<T> out({2 * D});
      for (std::size_t k = 0; k < D; ++k) {
        out[k] = hf[k];
        out[D + k] = hb[k];
      }
      return out;
    }
    TensorT<T> out = hf;
    out += hb;
    return out;
  }

  RnnFusion fusion_;
  LstmCell<T> fwd_, bwd_;
  std::size_t seq_len_ = 0;
};

// --- Adam ------------------------------------------------------------------

template <typename T>
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
       double weight_decay = 0.0)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  double weight_decay() const { return weight_decay_; }

  void step(const ParamRefs<T>& params, double global_lr) {
    if (!(global_lr > 0.0)) throw std::invalid_argument("non-positive rate");
    if (m_.empty()) {
      for (const Param<T>* p : params) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
      }
    }
    if (m_.size() != params.size())
      throw std::logic_error("optimizer state does not match parameter set");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      Param<T>& par = *params[p];
      if (par.lr_scale == 0.0) continue;  // frozen: bit-identical
      const double rate = global_lr * par.lr_scale;
      auto& value = par.value.data();
      auto& grad = par.grad.data();
      auto& m = m_[p].data();
      auto& v = v_[p].data();
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = double(grad[i]);
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        double w = double(value[i]);
        w -= rate * mhat / (std::sqrt(vhat) + eps_);
        w -= rate * weight_decay_ * w;  // decoupled weight decay
        value[i] = T(w);
      }
    }
  }

  std::vector<TensorT<double>>& moments_m() { return m_; }
  std::vector<TensorT<double>>& moments_v() { return v_; }
  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::uint64_t t_ = 0;
  std::vector<TensorT<double>> m_, v_;  // moments kept in 64-bit
};

template <typename T>
void zero_grad(const ParamRefs<T>& params) {
  for (Param<T>* p : params) p->grad.fill(T(0));
}

// --- plateau schedule ------------------------------------------------------

// Divides the rate by `factor` whenever no new minimum appeared within the
// last `patience` epochs, at most `max_drops` times.
inline int plateau_drops(const std::vector<double>& history, int patience = 50,
                         int max_drops = 3) {
  double best = std::numeric_limits<double>::infinity();
  int since = 0, drops = 0;
  for (double loss : history) {
    if (loss < best) {
      best = loss;
      since = 0;
    } else {
      ++since;
      if (since >= patience && drops < max_drops) {
        ++drops;
        since = 0;
      }
    }
  }
  return drops;
}

inline double plateau_scheduler(const std::vector<double>& history,
                                double base_lr, int patience = 50,
                                double factor = 10.0, int max_drops = 3) {
  return base_lr / std::pow(factor, plateau_drops(history, patience, max_drops));
}

}  // namespace isoface
