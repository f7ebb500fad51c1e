#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "stereoadapt/error.hpp"

namespace stereoadapt::tensor {

/// Extents of a dense tensor. Batch is implicitly 1; feature maps are
/// rank 3 (C, H, W), convolution weights rank 4 (Cout, Cin, k, k).
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<int> dims) : dims_(std::move(dims)) { validate(); }

  int rank() const { return static_cast<int>(dims_.size()); }
  int operator[](int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  const std::vector<int>& dims() const { return dims_; }

  std::size_t numel() const {
    return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1},
                           [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  }

  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + "]";
  }

 private:
  void validate() const {
    for (int d : dims_) {
      if (d < 0) throw Error(ErrorCode::kInvalidArgument, "negative extent in shape");
    }
  }

  std::vector<int> dims_;
};

/// Buffers start on a 64-byte boundary so vectorised kernels see the same
/// alignment, and so sum in the same order, wherever the heap puts them.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), values_(shape_.numel(), fill) {}
  Tensor(Shape shape, const std::vector<T>& values)
      : shape_(std::move(shape)), values_(values.begin(), values.end()) {
    if (values_.size() != shape_.numel()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "value count " + std::to_string(values_.size()) + " does not match shape " + shape_.str());
    }
  }

  static Tensor chw(int c, int h, int w, T fill = T(0)) { return Tensor(Shape{c, h, w}, fill); }
  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  // Rank-3 (C, H, W) accessors.
  int channels() const { return shape_[0]; }
  int height() const { return shape_[1]; }
  int width() const { return shape_[2]; }
  T& at(int c, int y, int x) { return values_[(static_cast<std::size_t>(c) * height() + y) * width() + x]; }
  const T& at(int c, int y, int x) const {
    return values_[(static_cast<std::size_t>(c) * height() + y) * width() + x];
  }

  T item() const {
    if (values_.size() != 1) throw Error(ErrorCode::kShapeMismatch, "item() on non-scalar " + shape_.str());
    return values_[0];
  }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::copy(values_.begin(), values_.end(), out.data());
    return out;
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  AlignedVector<T> values_;
};

inline void require_rank(const Shape& s, int rank, const std::string& what) {
  if (s.rank() != rank) {
    throw Error(ErrorCode::kShapeMismatch,
                what + ": expected rank " + std::to_string(rank) + ", got " + s.str());
  }
}

inline void require_same(const Shape& a, const Shape& b, const std::string& what) {
  if (!(a == b)) throw Error(ErrorCode::kShapeMismatch, what + ": " + a.str() + " vs " + b.str());
}

}  // namespace stereoadapt::tensor
