#include "roa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace roa {

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (Index e : shape) {
    if (e <= 0) throw ShapeMismatch("tensor extents must be positive, got " + to_string(shape));
  }
}

}  // namespace

template <Real T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(static_cast<std::size_t>(roa::numel(shape_)), fill);
}

template <Real T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (static_cast<Index>(data_.size()) != roa::numel(shape_)) {
    throw ShapeMismatch("data length " + std::to_string(data_.size()) + " does not match shape " +
                        to_string(shape_));
  }
}

template <Real T>
Index Tensor<T>::dim(Index axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw ShapeMismatch("axis out of range for shape " + to_string(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

template <Real T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw ShapeMismatch("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

template <Real T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <Real T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (roa::numel(shape) != numel()) {
    throw ShapeMismatch("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <Real T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <Real T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch("max_abs_diff: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  double worst = 0.0;
  for (Index i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return worst;
}

template class Tensor<float>;
template class Tensor<double>;
template double max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);

}  // namespace roa
