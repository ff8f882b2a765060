#pragma once

#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "roa/errors.hpp"

namespace roa {

using Index = std::int64_t;
using Shape = std::vector<Index>;

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

// On-disk codes of the ROAT format; do not renumber.
enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

template <Real T>
constexpr DType dtype_of() {
  if constexpr (std::same_as<T, float>) {
    return DType::kFloat32;
  } else {
    return DType::kFloat64;
  }
}

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array. Extents are strictly positive; a default-constructed
/// tensor is a rank-0 scalar holding zero.
template <Real T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(1, T(0)) {}
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const;
  Index numel() const { return static_cast<Index>(data_.size()); }
  static constexpr DType dtype() { return dtype_of<T>(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  T operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  // NCHW element access; only valid on rank-4 tensors.
  T& at(Index n, Index c, Index h, Index w) {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  T at(Index n, Index c, Index h, Index w) const {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  T item() const;
  void fill(T value);
  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  template <Real U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

// Largest |a - b| over all entries; throws ShapeMismatch when shapes differ.
template <Real T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace roa
