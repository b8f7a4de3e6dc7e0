#ifndef LRP3D_TENSOR_HPP
#define LRP3D_TENSOR_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "lrp3d/errors.hpp"

namespace lrp3d {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

/// Spatial part of a (C,D,H,W) shape.
inline Shape spatial_of(const Shape& shape) { return Shape(shape.begin() + 1, shape.end()); }

/// Dense row-major tensor of rank <= 5. Activations use (C,D,H,W).
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_ = Vector::Zero(shape_size(shape_));
  }

  Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (data_.size() != shape_size(shape_))
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
  }

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  /// Leading axis for (C,...) tensors.
  Index channels() const { return shape_.empty() ? 0 : shape_.front(); }
  Index channel_size() const { return channels() ? size() / channels() : 0; }

  Vector& vec() { return data_; }
  const Vector& vec() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  /// (C, spatial) row-major view.
  Eigen::Map<RowMatrix> mat() { return {data_.data(), channels(), channel_size()}; }
  Eigen::Map<const RowMatrix> mat() const { return {data_.data(), channels(), channel_size()}; }

  /// Copy of channel c with the leading axis dropped.
  Tensor channel(Index c) const {
    return Tensor(spatial_of(shape_), data_.segment(c * channel_size(), channel_size()));
  }

  void set_channel(Index c, const Tensor& src) {
    if (src.size() != channel_size())
      throw DimensionError("set_channel: size " + std::to_string(src.size()) + " vs channel size " +
                           std::to_string(channel_size()));
    data_.segment(c * channel_size(), channel_size()) = src.vec();
  }

  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  Scalar sum() const { return static_cast<Scalar>(data_.template cast<double>().sum()); }
  double sum_double() const { return data_.template cast<double>().sum(); }
  Scalar max_abs() const { return data_.size() ? data_.cwiseAbs().maxCoeff() : Scalar(0); }
  bool all_finite() const { return data_.allFinite(); }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  void validate_shape() const {
    if (shape_.size() > 5) throw DimensionError("tensor rank " + std::to_string(shape_.size()) + " exceeds 5");
    for (std::size_t i = 0; i < shape_.size(); ++i)
      if (shape_[i] <= 0)
        throw DimensionError("axis " + std::to_string(i) + " of shape " + shape_string(shape_) +
                             " is not positive");
  }

  Shape shape_;
  Vector data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Binary voxel mask, row-major, values 0/1.
struct Mask {
  Shape shape;
  std::vector<std::uint8_t> data;

  Mask() = default;
  explicit Mask(Shape s) : shape(std::move(s)), data(static_cast<std::size_t>(shape_size(shape)), 0) {}

  Index size() const { return static_cast<Index>(data.size()); }
  Index count() const { return std::accumulate(data.begin(), data.end(), Index{0}); }
  bool operator==(const Mask&) const = default;
};

}  // namespace lrp3d

#endif  // LRP3D_TENSOR_HPP
