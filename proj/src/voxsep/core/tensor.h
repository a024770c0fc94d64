#pragma once

// Dense row-major tensor with value semantics. Rank is small (<= 3 in
// practice); all math goes through the kernel layer or the op layer, this
// type only owns storage and shape.

#include <cstdint>
#include <numeric>
#include <vector>

#include "voxsep/common.h"

namespace voxsep {

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(count(shape_)), T(0));
  }

  static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<std::int64_t> shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static Tensor scalar(T v) { return full({1}, v); }

  static Tensor from(std::vector<T> data, std::vector<std::int64_t> shape) {
    VX_CHECK(count(shape) == static_cast<std::int64_t>(data.size()), "tensor data does not match shape");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  const std::vector<std::int64_t>& shape() const { return shape_; }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  T operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  T& at(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * dim(1) + j)]; }
  T at(std::int64_t i, std::int64_t j) const { return data_[static_cast<std::size_t>(i * dim(1) + j)]; }
  T& at(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data_[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
  }
  T at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
  }

  // Same storage, new shape; element count must match.
  Tensor reshaped(std::vector<std::int64_t> shape) const {
    VX_CHECK(count(shape) == numel(), "reshape changes element count");
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t;
    std::vector<U> d(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
    return Tensor<U>::from(std::move(d), shape_);
  }

  static std::int64_t count(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
      VX_CHECK(d >= 0, "negative dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<std::int64_t> shape_;
  std::vector<T> data_;
};

}  // namespace voxsep
