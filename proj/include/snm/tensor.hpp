// Dense row-major n-d array. The one value type every module trades in.
#pragma once

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "snm/common.hpp"

namespace snm {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& dims) {
  std::int64_t n = 1;
  for (auto d : dims) {
    if (d < 0) throw dimension_error("negative tensor dimension");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ")";
  return os.str();
}

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape dims, T fill = T{})
      : dims_(std::move(dims)), data_(static_cast<std::size_t>(shape_numel(dims_)), fill) {}

  static Tensor from(Shape dims, std::vector<T> data) {
    if (shape_numel(dims) != static_cast<std::int64_t>(data.size()))
      throw dimension_error("tensor data size does not match shape " + shape_str(dims));
    Tensor t;
    t.dims_ = std::move(dims);
    t.data_ = std::move(data);
    return t;
  }

  const Shape& dims() const { return dims_; }
  std::int64_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t ndim() const { return dims_.size(); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  T& operator()(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * dims_[1] + j)]; }
  const T& operator()(std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>(i * dims_[1] + j)];
  }
  T& operator()(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data_[static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + k)];
  }
  const T& operator()(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + k)];
  }
  T& operator()(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) {
    return data_[static_cast<std::size_t>(((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l)];
  }
  const T& operator()(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const {
    return data_[static_cast<std::size_t>(((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l)];
  }

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(dims_);
    for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

 private:
  Shape dims_;
  std::vector<T> data_;
};

}  // namespace snm
