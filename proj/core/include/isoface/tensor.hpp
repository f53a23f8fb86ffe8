#pragma once

// Dense n-d real arrays.
//
// Linearization order: row-major, last index fastest. A tensor with shape
// [d0, d1, ..., dk] stores element (i0, ..., ik) at flat offset
// ((i0*d1 + i1)*d2 + ...)*dk + ik. Every file format in this project
// (dataset blobs, checkpoints) uses this order.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <iosfwd>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace isoface {

template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<std::size_t> shape, T fill = T(0))
      : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

  static TensorT from_data(std::vector<std::size_t> shape, std::vector<T> data) {
    if (data.size() != checked_size(shape))
      throw std::invalid_argument("tensor data length does not match shape");
    TensorT t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t i) { return data_[i]; }
  const T& operator()(std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  T& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k,
                      std::size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  TensorT& operator+=(const TensorT& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  TensorT& operator-=(const TensorT& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  TensorT& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend TensorT operator+(TensorT a, const TensorT& b) { return a += b; }
  friend TensorT operator-(TensorT a, const TensorT& b) { return a -= b; }
  friend TensorT operator*(TensorT a, T s) { return a *= s; }
  friend TensorT operator*(T s, TensorT a) { return a *= s; }

  T sum() const { return std::accumulate(data_.begin(), data_.end(), T(0)); }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i)
      out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  static std::size_t checked_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0) throw std::invalid_argument("zero tensor extent");
      n *= d;
    }
    return n;
  }
  void require_same_shape(const TensorT& o) const {
    if (shape_ != o.shape_) throw std::invalid_argument("tensor shape mismatch");
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<double>;
using TensorF = TensorT<float>;

// --- serialization ---------------------------------------------------------
// Layout: magic "ISOF" | u32 version | u32 dtype (1=f32, 2=f64) | u32 rank |
// rank x u64 extents | flat data. All integers and floats little-endian.

inline constexpr std::uint32_t kTensorFormatVersion = 1;

void save_tensor(std::ostream& os, const TensorT<float>& t);
void save_tensor(std::ostream& os, const TensorT<double>& t);

// Loads a tensor of either on-disk dtype, converting to the requested T.
template <typename T>
TensorT<T> load_tensor(std::istream& is);

extern template TensorT<float> load_tensor<float>(std::istream& is);
extern template TensorT<double> load_tensor<double>(std::istream& is);

void save_tensor_file(const std::string& path, const TensorT<float>& t);
void save_tensor_file(const std::string& path, const TensorT<double>& t);

template <typename T>
TensorT<T> load_tensor_file(const std::string& path);

extern template TensorT<float> load_tensor_file<float>(const std::string&);
extern template TensorT<double> load_tensor_file<double>(const std::string&);

}  // namespace isoface
