#pragma once

#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ftm/core/error.hpp"

namespace ftm {

// Dense row-major tensor with value semantics. Images are [B,C,H,W] in [0,1];
// feature maps follow the same layout; vectors/matrices use rank 1/2.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(compute_numel(shape_)), T(0));
  }
  Tensor(std::vector<int> shape, T fill) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(compute_numel(shape_)), fill);
  }
  Tensor(std::vector<int> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != compute_numel(shape_))
      throw InputError("tensor: data size does not match shape");
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  bool empty() const { return data_.empty(); }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T& at(int b, int c, int h, int w) {
    return data_[static_cast<size_t>(((static_cast<int64_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  const T& at(int b, int c, int h, int w) const {
    return data_[static_cast<size_t>(((static_cast<int64_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  T& at(int r, int c) { return data_[static_cast<size_t>(static_cast<int64_t>(r) * shape_[1] + c)]; }
  const T& at(int r, int c) const { return data_[static_cast<size_t>(static_cast<int64_t>(r) * shape_[1] + c)]; }

  // Elements per leading-dim slice (e.g. per image for [B,C,H,W]).
  int64_t slice_numel() const {
    if (shape_.empty()) return 0;
    return numel() / shape_[0];
  }
  T* slice(int b) { return data() + static_cast<int64_t>(b) * slice_numel(); }
  const T* slice(int b) const { return data() + static_cast<int64_t>(b) * slice_numel(); }

  Tensor reshaped(std::vector<int> new_shape) const {
    if (compute_numel(new_shape) != numel()) throw InputError("tensor: reshape element count mismatch");
    Tensor out;
    out.shape_ = std::move(new_shape);
    out.data_ = data_;
    return out;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool bitwise_equal(const Tensor& other) const {
    return shape_ == other.shape_ &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(T)) == 0);
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
    return out;
  }

 private:
  static int64_t compute_numel(const std::vector<int>& shape) {
    int64_t n = shape.empty() ? 0 : 1;
    for (int d : shape) {
      if (d < 0) throw InputError("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<T> data_;

  template <class U>
  friend class Tensor;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace ftm
