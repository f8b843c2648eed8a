#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "chopnet/aligned.hpp"
#include "chopnet/error.hpp"

namespace chopnet {

/// Dense row-major tensor. Float for training and inference; double is used
/// only for gradient checking.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, T fill = T(0))
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}
  Tensor(std::vector<std::size_t> shape, const std::vector<T>& data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (data_.size() != element_count(shape_)) {
      throw Error(ErrorCode::ShapeMismatch, "tensor data length " + std::to_string(data_.size()) +
                                                " does not match shape volume " +
                                                std::to_string(element_count(shape_)));
    }
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  /// Throws NonFinite naming `what` if any element is NaN or infinite.
  void require_finite(const std::string& what) const {
    if (!all_finite()) throw Error(ErrorCode::NonFinite, what + " contains NaN or Inf");
  }

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  AlignedVector<T> data_;
};

}  // namespace chopnet
