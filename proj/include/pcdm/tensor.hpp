#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "pcdm/error.hpp"

namespace pcdm {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(const Shape& shape);

/// Dense row-major array with an explicit shape.
///
/// Rank-3 tensors are images laid out as height x width x channels, so the
/// flat buffer reshapes directly into a (H*W) x C row-major matrix.
template <typename Scalar>
class BasicTensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape) : shape_(std::move(shape)), data_(Vector::Zero(shape_size(shape_))) {}

  BasicTensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::size_t>(data_.size()) != shape_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(shape_));
    }
  }

  static BasicTensor image(std::size_t height, std::size_t width, std::size_t channels) {
    return BasicTensor(Shape{height, width, channels});
  }

  static BasicTensor constant(Shape shape, Scalar value) {
    BasicTensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return static_cast<std::size_t>(data_.size()); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::size_t height() const { return shape_.at(0); }
  std::size_t width() const { return shape_.at(1); }
  std::size_t channels() const { return shape_.size() > 2 ? shape_[2] : 1; }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }
  Scalar* raw() { return data_.data(); }
  const Scalar* raw() const { return data_.data(); }

  Scalar& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }
  Scalar operator[](std::size_t i) const { return data_[static_cast<Eigen::Index>(i)]; }

  Scalar& operator()(std::size_t i, std::size_t j, std::size_t c) {
    return data_[static_cast<Eigen::Index>((i * shape_[1] + j) * shape_[2] + c)];
  }
  Scalar operator()(std::size_t i, std::size_t j, std::size_t c) const {
    return data_[static_cast<Eigen::Index>((i * shape_[1] + j) * shape_[2] + c)];
  }

  bool same_shape(const BasicTensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const { return data_.allFinite(); }

  BasicTensor& operator+=(const BasicTensor& o) {
    require_same_shape(o, "+=");
    data_ += o.data_;
    return *this;
  }
  BasicTensor& operator-=(const BasicTensor& o) {
    require_same_shape(o, "-=");
    data_ -= o.data_;
    return *this;
  }
  BasicTensor& operator*=(Scalar s) {
    data_ *= s;
    return *this;
  }

  void require_same_shape(const BasicTensor& o, const char* what) const {
    if (shape_ != o.shape_) {
      throw ShapeError(std::string("shape mismatch in ") + what + ": " + shape_string(shape_) + " vs " +
                       shape_string(o.shape_));
    }
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<double>;

template <typename Scalar>
BasicTensor<Scalar> operator+(BasicTensor<Scalar> a, const BasicTensor<Scalar>& b) {
  a += b;
  return a;
}

template <typename Scalar>
BasicTensor<Scalar> operator-(BasicTensor<Scalar> a, const BasicTensor<Scalar>& b) {
  a -= b;
  return a;
}

template <typename Scalar>
BasicTensor<Scalar> operator*(Scalar s, BasicTensor<Scalar> a) {
  a *= s;
  return a;
}

template <typename Scalar>
Scalar squared_norm(const BasicTensor<Scalar>& t) {
  return t.data().squaredNorm();
}

template <typename Scalar>
Scalar norm(const BasicTensor<Scalar>& t) {
  return t.data().norm();
}

template <typename Scalar>
Scalar l1_norm(const BasicTensor<Scalar>& t) {
  return t.data().template lpNorm<1>();
}

template <typename Scalar>
Scalar max_abs_diff(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  a.require_same_shape(b, "max_abs_diff");
  if (a.size() == 0) return Scalar(0);
  return (a.data() - b.data()).cwiseAbs().maxCoeff();
}

/// Concatenate two images along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Slice channels [first, first + count) out of an image.
Tensor slice_channels(const Tensor& t, std::size_t first, std::size_t count);

}  // namespace pcdm
