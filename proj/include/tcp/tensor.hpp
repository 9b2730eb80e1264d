#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "tcp/errors.hpp"

namespace tcp {

using Index = Eigen::Index;

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using RowMajorMatrix =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class DType : std::uint32_t { Single = 1, Double = 2 };

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                "only float and double tensors are supported");
  return std::is_same_v<T, float> ? DType::Single : DType::Double;
}

inline std::size_t dtype_width(DType dt) {
  return dt == DType::Single ? 4 : 8;
}

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// Dense row-major array of arbitrary rank. Matrices used by the numerical
// code are Eigen types; Tensor is the storage/interchange form (files,
// clips, reductions over arbitrary axes).
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_size(shape_), T(0));
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  template <typename Derived>
  static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    Eigen::Map<RowMajorMatrix<T>>(t.data_.data(), m.rows(), m.cols()) =
        m.template cast<T>();
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  static constexpr DType dtype() { return dtype_of<T>(); }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Interprets a rank-2 tensor as a matrix (rank-1 as a row).
  Matrix<T> matrix() const {
    if (rank() == 1) {
      return Eigen::Map<const RowMajorMatrix<T>>(data_.data(), 1, shape_[0]);
    }
    if (rank() != 2) {
      throw DimensionError("matrix view needs rank 1 or 2, got " + shape_string(shape_));
    }
    return Eigen::Map<const RowMajorMatrix<T>>(data_.data(), shape_[0], shape_[1]);
  }

  // Slab i along the leading axis of a rank-3 tensor, as a matrix.
  Matrix<T> slab(std::size_t i) const {
    if (rank() != 3) {
      throw DimensionError("slab needs rank 3, got " + shape_string(shape_));
    }
    if (i >= shape_[0]) throw DimensionError("slab index out of range");
    const std::size_t stride = shape_[1] * shape_[2];
    return Eigen::Map<const RowMajorMatrix<T>>(data_.data() + i * stride, shape_[1],
                                               shape_[2]);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static void check_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
    for (std::size_t d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(shape));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

// Mean over the listed axes; reduced axes are kept with size 1.
template <typename T>
Tensor<T> mean_over(const Tensor<T>& a, std::vector<std::size_t> axes) {
  Shape out_shape = a.shape();
  for (std::size_t ax : axes) {
    if (ax >= a.rank()) {
      throw DimensionError("mean_over axis " + std::to_string(ax) + " out of range for " +
                           shape_string(a.shape()));
    }
    out_shape[ax] = 1;
  }
  Tensor<T> out(out_shape);
  std::size_t count = a.size() / out.size();

  const std::size_t rank = a.rank();
  std::vector<std::size_t> in_strides(rank), out_strides(rank);
  for (std::size_t i = rank, s = 1, o = 1; i-- > 0;) {
    in_strides[i] = s;
    out_strides[i] = o;
    s *= a.shape()[i];
    o *= out_shape[i];
  }
  for (std::size_t flat = 0; flat < a.size(); ++flat) {
    std::size_t target = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      std::size_t coord = (flat / in_strides[d]) % a.shape()[d];
      if (out_shape[d] != 1) target += coord * out_strides[d];
    }
    out[target] += a[flat];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= static_cast<T>(count);
  return out;
}

template <typename T>
Tensor<T> concat_leading(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Shape shape = parts[0].shape();
  std::vector<T> data;
  std::size_t lead = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1)) {
      throw DimensionError("concat shape mismatch: " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    }
    lead += p.shape()[0];
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  shape[0] = lead;
  return Tensor<T>(shape, std::move(data));
}

template <typename T>
Tensor<T> slice_leading(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > a.shape()[0]) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         shape_string(a.shape()));
  }
  Shape shape = a.shape();
  const std::size_t stride = a.size() / shape[0];
  shape[0] = count;
  auto first = a.data().begin() + static_cast<std::ptrdiff_t>(begin * stride);
  return Tensor<T>(shape, std::vector<T>(first, first + static_cast<std::ptrdiff_t>(count * stride)));
}

}  // namespace tcp
