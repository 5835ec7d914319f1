#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "caseforge/core/error.hpp"

namespace caseforge {

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ')';
  return os.str();
}

// Dense row-major n-d array. All model math runs on these; the scalar type is
// a template parameter so every network can be instantiated at f64 for
// finite-difference checks and at f32 for training.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(compute_numel(shape_)), T(0));
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    require(static_cast<int64_t>(data_.size()) == compute_numel(shape_),
            Errc::shape_mismatch, "tensor: data size does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static Tensor scalar(T v) { return full({1}, v); }

  const Shape& shape() const { return shape_; }
  int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 2-d / 4-d accessors for the common layouts (matrix, NCHW).
  T& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  const T& at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }

  T& at(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  const T& at(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape s) const {
    require(compute_numel(s) == numel(), Errc::shape_mismatch,
            "reshape: numel mismatch " + shape_str(shape_) + " -> " + shape_str(s));
    Tensor out = *this;
    out.shape_ = std::move(s);
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
    return out;
  }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

  static int64_t compute_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      require(d >= 0, Errc::shape_mismatch, "tensor: negative dimension");
      n *= d;
    }
    return n;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
void check_shape(const Tensor<T>& t, const Shape& expect, const std::string& who) {
  require(t.shape() == expect, Errc::shape_mismatch,
          who + ": expected shape " + shape_str(expect) + ", got " + shape_str(t.shape()));
}

}  // namespace caseforge
