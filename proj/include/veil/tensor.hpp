#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "veil/common.hpp"

namespace veil {

/// Dense row-major N-d array. Image batches use NCHW, conv kernels OIHW,
/// dense weights are out x in. Float for the compute path, double for the
/// verification path.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (int d : shape_) {
      require(d > 0, "Tensor: dimensions must be positive, got ", d);
      n *= static_cast<std::size_t>(d);
    }
    data_.assign(n, T(0));
  }

  static Tensor full(std::vector<int> shape, T value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// NCHW element access; bounds are the caller's responsibility.
  T& at(int n, int c, int h, int w) {
    return data_[flat(n, c, h, w)];
  }
  const T& at(int n, int c, int h, int w) const {
    return data_[flat(n, c, h, w)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const T& v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  void fill(T v) {
    for (auto& x : data_) x = v;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape_ = shape_;
    out.data_.resize(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i)
      out.data_[i] = static_cast<U>(data_[i]);
    return out;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  template <typename U>
  friend class Tensor;

  std::size_t flat(int n, int c, int h, int w) const {
    const int C = shape_[1], H = shape_[2], W = shape_[3];
    return ((static_cast<std::size_t>(n) * C + c) * H + h) * W + w;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

template <typename T>
void check_all_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite())
    throw NumericError(concat("non-finite values in ", what));
}

}  // namespace veil
