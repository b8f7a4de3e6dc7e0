#ifndef LRP3D_LAYERS_HPP
#define LRP3D_LAYERS_HPP

#include <variant>
#include <vector>

#include "lrp3d/tensor.hpp"

namespace lrp3d {

// Layer parameters. Activations are unbatched (C,D,H,W) tensors.

/// weight (Cout,Cin,kd,kh,kw), bias (Cout).
template <typename Scalar>
struct Conv3d {
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;
  int stride = 1;
  int padding = 0;
};

struct ReLU {};

template <typename Scalar>
struct BatchNorm {
  Tensor<Scalar> scale;
  Tensor<Scalar> shift;
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  double eps = 1e-5;
};

struct MaxPool3d {
  int kernel = 2;
};

/// Transposed convolution. weight (Cin,Cout,kd,kh,kw), bias (Cout).
template <typename Scalar>
struct UpConv3d {
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;
  int stride = 2;
};

/// Concatenates the output of layer `source` (first) with the running tensor
/// (second). The running tensor is cropped on its trailing faces to the
/// source's spatial shape.
struct Concat {
  Index source = 0;
};

template <typename Scalar>
using LayerSpec = std::variant<Conv3d<Scalar>, ReLU, BatchNorm<Scalar>, MaxPool3d, UpConv3d<Scalar>, Concat>;

// ---------------------------------------------------------------------------
// Convolution as a linear map and its adjoint.

Shape conv3d_output_shape(const Shape& input, const Shape& weight, int stride, int padding);
Shape upconv3d_output_shape(const Shape& input, const Shape& weight, int stride);

/// Bias-free convolution.
template <typename Scalar>
Tensor<Scalar> conv3d_linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, int stride, int padding);

/// Adjoint of conv3d_linear applied to `g` (output-shaped); result is input-shaped.
template <typename Scalar>
Tensor<Scalar> conv3d_adjoint(const Tensor<Scalar>& g, const Tensor<Scalar>& weight, int stride, int padding,
                              const Shape& input_shape);

template <typename Scalar>
Tensor<Scalar> conv3d_weight_grad(const Tensor<Scalar>& x, const Tensor<Scalar>& g, const Shape& weight_shape,
                                  int stride, int padding);

template <typename Scalar>
Tensor<Scalar> upconv3d_linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, int stride);

template <typename Scalar>
Tensor<Scalar> upconv3d_adjoint(const Tensor<Scalar>& g, const Tensor<Scalar>& weight, int stride,
                                const Shape& input_shape);

template <typename Scalar>
Tensor<Scalar> upconv3d_weight_grad(const Tensor<Scalar>& x, const Tensor<Scalar>& g, const Shape& weight_shape,
                                    int stride);

// ---------------------------------------------------------------------------
// Layer forward kernels.

template <typename Scalar>
Tensor<Scalar> conv3d(const Tensor<Scalar>& x, const Conv3d<Scalar>& spec);

template <typename Scalar>
Tensor<Scalar> upconv3d(const Tensor<Scalar>& x, const UpConv3d<Scalar>& spec);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> batchnorm_infer(const Tensor<Scalar>& x, const BatchNorm<Scalar>& spec);

/// Channels of `a` first, then `b`.
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// Flat input index of the maximum for every output voxel.
using WinnerIndex = std::vector<Index>;

template <typename Scalar>
struct PoolResult {
  Tensor<Scalar> output;
  WinnerIndex winners;
};

/// Max pooling with window and stride `kernel`. Trailing faces are
/// replicate-padded up to a multiple of the kernel; winners always point into
/// the unpadded input. Ties go to the lowest flat index.
template <typename Scalar>
PoolResult<Scalar> maxpool3d(const Tensor<Scalar>& x, int kernel = 2);

/// Scatter `values` (pool-output shaped) onto the winners.
template <typename Scalar>
Tensor<Scalar> scatter_to_winners(const WinnerIndex& winners, const Tensor<Scalar>& values, const Shape& input_shape);

/// Keep the leading `spatial` extent of every channel.
template <typename Scalar>
Tensor<Scalar> crop_spatial(const Tensor<Scalar>& x, const Shape& spatial);

/// Zero-extend trailing faces; adjoint of crop_spatial.
template <typename Scalar>
Tensor<Scalar> pad_spatial(const Tensor<Scalar>& x, const Shape& spatial);

// ---------------------------------------------------------------------------
// Backward kernels for the parametric layers.

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;
};

template <typename Scalar>
ConvGrads<Scalar> conv3d_backward(const Tensor<Scalar>& x, const Conv3d<Scalar>& spec, const Tensor<Scalar>& g);

template <typename Scalar>
ConvGrads<Scalar> upconv3d_backward(const Tensor<Scalar>& x, const UpConv3d<Scalar>& spec, const Tensor<Scalar>& g);

template <typename Scalar>
struct BatchNormGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> scale;
  Tensor<Scalar> shift;
};

template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const Tensor<Scalar>& x, const BatchNorm<Scalar>& spec,
                                          const Tensor<Scalar>& g);

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& g);

}  // namespace lrp3d

#endif  // LRP3D_LAYERS_HPP
