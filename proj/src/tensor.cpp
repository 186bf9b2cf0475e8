// SPDX-License-Identifier: Apache-2.0
#include "easwin/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

namespace easwin {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index e : s) n *= e;
  return n;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  for (Index e : shape_) {
    if (e < 0) throw DimensionError("negative extent in shape " + shape_str(shape_));
  }
  data_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, const std::vector<T>& data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_numel(shape_) != static_cast<Index>(data_.size())) {
    throw DimensionError("shape " + shape_str(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
  }
}

template <typename T>
Tensor<T> Tensor<T>::uninitialized(Shape shape) {
  for (Index e : shape) {
    if (e < 0) throw DimensionError("negative extent in shape " + shape_str(shape));
  }
  Tensor t;
  t.data_.resize(static_cast<std::size_t>(shape_numel(shape)));
  t.shape_ = std::move(shape);
  return t;
}

template <typename T>
Index Tensor<T>::dim(Index i) const {
  const Index n = ndim();
  if (i < 0) i += n;
  if (i < 0 || i >= n) {
    throw DimensionError("axis " + std::to_string(i) + " out of range for shape " +
                         shape_str(shape_));
  }
  return shape_[static_cast<std::size_t>(i)];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  // Inf and NaN are exactly the values with every exponent bit set. Integer
  // compares vectorize where a floating reduction would not.
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  constexpr Bits kExp = static_cast<Bits>(sizeof(T) == 4 ? 0x7f800000ull : 0x7ff0000000000000ull);
  const T* p = data_.data();
  const std::size_t n = data_.size();
  constexpr std::size_t kBlock = 4096;
  for (std::size_t i = 0; i < n; i += kBlock) {
    const std::size_t end = std::min(n, i + kBlock);
    unsigned bad = 0;
    for (std::size_t j = i; j < end; ++j) {
      bad |= (std::bit_cast<Bits>(p[j]) & kExp) == kExp;
    }
    if (bad) return false;
  }
  return true;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace easwin
