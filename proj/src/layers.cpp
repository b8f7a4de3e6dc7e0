#include "lrp3d/layers.hpp"

#include <array>
#include <cmath>
#include <string>

namespace lrp3d {

namespace {

using MatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::array<const char*, 3> kSpatialAxis = {"D", "H", "W"};

void require_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank)
    throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                         shape_string(shape));
}

// Index bookkeeping shared by conv and transposed conv.
struct Geometry {
  Index cin, d, h, w;         // input
  Index kd, kh, kw;           // kernel
  Index cout, od, oh, ow;     // output
  Index stride, pad;

  Index in_plane() const { return h * w; }
  Index out_plane() const { return oh * ow; }
  Index taps() const { return kd * kh * kw; }
};

template <typename Scalar>
MatrixD as_matrix(const Tensor<Scalar>& t, Index rows, Index cols) {
  return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(t.data(), rows, cols)
      .template cast<double>();
}

Geometry conv_geometry(const Shape& in, const Shape& weight, const Shape& out, int stride, int padding) {
  return {in[0], in[1], in[2], in[3], weight[2], weight[3], weight[4], out[0], out[1], out[2], out[3], stride, padding};
}

// Patch matrix for output depth plane `oz`: rows (ci,kz,ky,kx), columns (oy,ox).
template <typename Scalar>
void im2col_plane(const Tensor<Scalar>& x, const Geometry& g, Index oz, MatrixD& cols) {
  cols.resize(g.cin * g.taps(), g.out_plane());
  const Scalar* src = x.data();
  Index row = 0;
  for (Index ci = 0; ci < g.cin; ++ci) {
    for (Index kz = 0; kz < g.kd; ++kz) {
      const Index iz = oz * g.stride - g.pad + kz;
      for (Index ky = 0; ky < g.kh; ++ky) {
        for (Index kx = 0; kx < g.kw; ++kx, ++row) {
          double* dst = cols.row(row).data();
          if (iz < 0 || iz >= g.d) {
            std::fill(dst, dst + g.out_plane(), 0.0);
            continue;
          }
          const Scalar* slab = src + (ci * g.d + iz) * g.in_plane();
          for (Index oy = 0; oy < g.oh; ++oy) {
            const Index iy = oy * g.stride - g.pad + ky;
            double* out_row = dst + oy * g.ow;
            if (iy < 0 || iy >= g.h) {
              std::fill(out_row, out_row + g.ow, 0.0);
              continue;
            }
            const Scalar* line = slab + iy * g.w;
            for (Index ox = 0; ox < g.ow; ++ox) {
              const Index ix = ox * g.stride - g.pad + kx;
              out_row[ox] = (ix >= 0 && ix < g.w) ? static_cast<double>(line[ix]) : 0.0;
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col_plane: accumulate patch columns back into `acc` (input-shaped).
void col2im_plane(const MatrixD& cols, const Geometry& g, Index oz, std::vector<double>& acc) {
  Index row = 0;
  for (Index ci = 0; ci < g.cin; ++ci) {
    for (Index kz = 0; kz < g.kd; ++kz) {
      const Index iz = oz * g.stride - g.pad + kz;
      for (Index ky = 0; ky < g.kh; ++ky) {
        for (Index kx = 0; kx < g.kw; ++kx, ++row) {
          if (iz < 0 || iz >= g.d) continue;
          const double* src = cols.row(row).data();
          double* slab = acc.data() + (ci * g.d + iz) * g.in_plane();
          for (Index oy = 0; oy < g.oh; ++oy) {
            const Index iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.h) continue;
            double* line = slab + iy * g.w;
            const double* in_row = src + oy * g.ow;
            for (Index ox = 0; ox < g.ow; ++ox) {
              const Index ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.w) line[ix] += in_row[ox];
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
Tensor<Scalar> from_double(const Shape& shape, const std::vector<double>& acc) {
  Tensor<Scalar> out(shape);
  for (Index i = 0; i < out.size(); ++i) out[i] = static_cast<Scalar>(acc[static_cast<std::size_t>(i)]);
  return out;
}

// Transposed-conv geometry: "input" refers to the small tensor, "output" to the upsampled one.
Geometry upconv_geometry(const Shape& in, const Shape& weight, const Shape& out, int stride) {
  return {in[0], in[1], in[2], in[3], weight[2], weight[3], weight[4], out[0], out[1], out[2], out[3], stride, 0};
}

// Rows (co,kz,ky,kx) by columns (iy,ix) for input plane iz; scatter into the upsampled output.
void upconv_scatter(const MatrixD& cols, const Geometry& g, Index iz, std::vector<double>& acc) {
  Index row = 0;
  for (Index co = 0; co < g.cout; ++co) {
    for (Index kz = 0; kz < g.kd; ++kz) {
      const Index oz = iz * g.stride + kz;
      for (Index ky = 0; ky < g.kh; ++ky) {
        for (Index kx = 0; kx < g.kw; ++kx, ++row) {
          const double* src = cols.row(row).data();
          double* slab = acc.data() + (co * g.od + oz) * g.out_plane();
          for (Index iy = 0; iy < g.h; ++iy) {
            double* line = slab + (iy * g.stride + ky) * g.ow;
            const double* in_row = src + iy * g.w;
            for (Index ix = 0; ix < g.w; ++ix) line[ix * g.stride + kx] += in_row[ix];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void upconv_gather(const Tensor<Scalar>& y, const Geometry& g, Index iz, MatrixD& cols) {
  cols.resize(g.cout * g.taps(), g.in_plane());
  Index row = 0;
  for (Index co = 0; co < g.cout; ++co) {
    for (Index kz = 0; kz < g.kd; ++kz) {
      const Index oz = iz * g.stride + kz;
      for (Index ky = 0; ky < g.kh; ++ky) {
        for (Index kx = 0; kx < g.kw; ++kx, ++row) {
          double* dst = cols.row(row).data();
          const Scalar* slab = y.data() + (co * g.od + oz) * g.out_plane();
          for (Index iy = 0; iy < g.h; ++iy) {
            const Scalar* line = slab + (iy * g.stride + ky) * g.ow;
            for (Index ix = 0; ix < g.w; ++ix) dst[iy * g.w + ix] = static_cast<double>(line[ix * g.stride + kx]);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void require_bias(const Tensor<Scalar>& bias, Index cout, const char* layer) {
  if (bias.rank() != 1 || bias.dim(0) != cout)
    throw DimensionError(std::string(layer) + " bias has shape " + shape_string(bias.shape()) + ", expected (" +
                         std::to_string(cout) + ")");
}

}  // namespace

Shape conv3d_output_shape(const Shape& input, const Shape& weight, int stride, int padding) {
  require_rank(input, 4, "conv3d input");
  require_rank(weight, 5, "conv3d weight");
  if (stride < 1 || padding < 0) throw ConfigError("conv3d: stride must be >= 1 and padding >= 0");
  if (input[0] != weight[1])
    throw DimensionError("conv3d axis C: input has " + std::to_string(input[0]) + " channels, weight expects " +
                         std::to_string(weight[1]));
  Shape out{weight[0], 0, 0, 0};
  for (std::size_t a = 0; a < 3; ++a) {
    const Index span = input[a + 1] + 2 * padding - weight[a + 2];
    if (span < 0)
      throw DimensionError(std::string("conv3d axis ") + kSpatialAxis[a] + ": extent " + std::to_string(input[a + 1]) +
                           " with padding " + std::to_string(padding) + " is smaller than kernel " +
                           std::to_string(weight[a + 2]));
    out[a + 1] = span / stride + 1;
  }
  return out;
}

Shape upconv3d_output_shape(const Shape& input, const Shape& weight, int stride) {
  require_rank(input, 4, "upconv3d input");
  require_rank(weight, 5, "upconv3d weight");
  if (stride < 1) throw ConfigError("upconv3d: stride must be >= 1");
  if (input[0] != weight[0])
    throw DimensionError("upconv3d axis C: input has " + std::to_string(input[0]) + " channels, weight expects " +
                         std::to_string(weight[0]));
  Shape out{weight[1], 0, 0, 0};
  for (std::size_t a = 0; a < 3; ++a) out[a + 1] = stride * (input[a + 1] - 1) + weight[a + 2];
  return out;
}

template <typename Scalar>
Tensor<Scalar> conv3d_linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, int stride, int padding) {
  const Shape out_shape = conv3d_output_shape(x.shape(), weight.shape(), stride, padding);
  const Geometry g = conv_geometry(x.shape(), weight.shape(), out_shape, stride, padding);
  const MatrixD w = as_matrix(weight, g.cout, g.cin * g.taps());
  Tensor<Scalar> out(out_shape);
  auto out_mat = out.mat();
  MatrixD cols;
  MatrixD plane;
  for (Index oz = 0; oz < g.od; ++oz) {
    im2col_plane(x, g, oz, cols);
    plane.noalias() = w * cols;
    out_mat.block(0, oz * g.out_plane(), g.cout, g.out_plane()) = plane.cast<Scalar>();
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> conv3d_adjoint(const Tensor<Scalar>& g_out, const Tensor<Scalar>& weight, int stride, int padding,
                              const Shape& input_shape) {
  const Shape out_shape = conv3d_output_shape(input_shape, weight.shape(), stride, padding);
  if (g_out.shape() != out_shape)
    throw DimensionError("conv3d adjoint: operand shape " + shape_string(g_out.shape()) + " vs output shape " +
                         shape_string(out_shape));
  const Geometry g = conv_geometry(input_shape, weight.shape(), out_shape, stride, padding);
  const MatrixD wt = as_matrix(weight, g.cout, g.cin * g.taps()).transpose();
  std::vector<double> acc(static_cast<std::size_t>(shape_size(input_shape)), 0.0);
  const auto g_mat = g_out.mat();
  MatrixD cols;
  for (Index oz = 0; oz < g.od; ++oz) {
    cols.noalias() = wt * g_mat.block(0, oz * g.out_plane(), g.cout, g.out_plane()).template cast<double>();
    col2im_plane(cols, g, oz, acc);
  }
  return from_double<Scalar>(input_shape, acc);
}

template <typename Scalar>
Tensor<Scalar> conv3d_weight_grad(const Tensor<Scalar>& x, const Tensor<Scalar>& g_out, const Shape& weight_shape,
                                  int stride, int padding) {
  const Shape out_shape = conv3d_output_shape(x.shape(), weight_shape, stride, padding);
  if (g_out.shape() != out_shape)
    throw DimensionError("conv3d weight grad: gradient shape " + shape_string(g_out.shape()) + " vs output shape " +
                         shape_string(out_shape));
  const Geometry g = conv_geometry(x.shape(), weight_shape, out_shape, stride, padding);
  MatrixD dw = MatrixD::Zero(g.cout, g.cin * g.taps());
  const auto g_mat = g_out.mat();
  MatrixD cols;
  for (Index oz = 0; oz < g.od; ++oz) {
    im2col_plane(x, g, oz, cols);
    dw.noalias() += g_mat.block(0, oz * g.out_plane(), g.cout, g.out_plane()).template cast<double>() *
                    cols.transpose();
  }
  Tensor<Scalar> out(weight_shape);
  out.vec() = Eigen::Map<const Eigen::VectorXd>(dw.data(), dw.size()).cast<Scalar>();
  return out;
}

template <typename Scalar>
Tensor<Scalar> upconv3d_linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, int stride) {
  const Shape out_shape = upconv3d_output_shape(x.shape(), weight.shape(), stride);
  const Geometry g = upconv_geometry(x.shape(), weight.shape(), out_shape, stride);
  const MatrixD wt = as_matrix(weight, g.cin, g.cout * g.taps()).transpose();
  std::vector<double> acc(static_cast<std::size_t>(shape_size(out_shape)), 0.0);
  const auto x_mat = x.mat();
  MatrixD cols;
  for (Index iz = 0; iz < g.d; ++iz) {
    cols.noalias() = wt * x_mat.block(0, iz * g.in_plane(), g.cin, g.in_plane()).template cast<double>();
    upconv_scatter(cols, g, iz, acc);
  }
  return from_double<Scalar>(out_shape, acc);
}

template <typename Scalar>
Tensor<Scalar> upconv3d_adjoint(const Tensor<Scalar>& g_out, const Tensor<Scalar>& weight, int stride,
                                const Shape& input_shape) {
  const Shape out_shape = upconv3d_output_shape(input_shape, weight.shape(), stride);
  if (g_out.shape() != out_shape)
    throw DimensionError("upconv3d adjoint: operand shape " + shape_string(g_out.shape()) + " vs output shape " +
                         shape_string(out_shape));
  const Geometry g = upconv_geometry(input_shape, weight.shape(), out_shape, stride);
  const MatrixD w = as_matrix(weight, g.cin, g.cout * g.taps());
  Tensor<Scalar> out(input_shape);
  auto out_mat = out.mat();
  MatrixD cols;
  MatrixD plane;
  for (Index iz = 0; iz < g.d; ++iz) {
    upconv_gather(g_out, g, iz, cols);
    plane.noalias() = w * cols;
    out_mat.block(0, iz * g.in_plane(), g.cin, g.in_plane()) = plane.cast<Scalar>();
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> upconv3d_weight_grad(const Tensor<Scalar>& x, const Tensor<Scalar>& g_out, const Shape& weight_shape,
                                    int stride) {
  const Shape out_shape = upconv3d_output_shape(x.shape(), weight_shape, stride);
  if (g_out.shape() != out_shape)
    throw DimensionError("upconv3d weight grad: gradient shape " + shape_string(g_out.shape()) + " vs output shape " +
                         shape_string(out_shape));
  const Geometry g = upconv_geometry(x.shape(), weight_shape, out_shape, stride);
  MatrixD dw = MatrixD::Zero(g.cin, g.cout * g.taps());
  const auto x_mat = x.mat();
  MatrixD cols;
  for (Index iz = 0; iz < g.d; ++iz) {
    upconv_gather(g_out, g, iz, cols);
    dw.noalias() += x_mat.block(0, iz * g.in_plane(), g.cin, g.in_plane()).template cast<double>() * cols.transpose();
  }
  Tensor<Scalar> out(weight_shape);
  out.vec() = Eigen::Map<const Eigen::VectorXd>(dw.data(), dw.size()).cast<Scalar>();
  return out;
}

template <typename Scalar>
Tensor<Scalar> conv3d(const Tensor<Scalar>& x, const Conv3d<Scalar>& spec) {
  Tensor<Scalar> out = conv3d_linear(x, spec.weight, spec.stride, spec.padding);
  require_bias(spec.bias, out.channels(), "conv3d");
  out.mat().colwise() += spec.bias.vec();
  return out;
}

template <typename Scalar>
Tensor<Scalar> upconv3d(const Tensor<Scalar>& x, const UpConv3d<Scalar>& spec) {
  Tensor<Scalar> out = upconv3d_linear(x, spec.weight, spec.stride);
  require_bias(spec.bias, out.channels(), "upconv3d");
  out.mat().colwise() += spec.bias.vec();
  return out;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return Tensor<Scalar>(x.shape(), x.vec().cwiseMax(Scalar(0)));
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& g) {
  if (x.shape() != g.shape()) throw DimensionError("relu backward: shape mismatch");
  Tensor<Scalar> out(x.shape());
  out.vec() = (x.vec().array() > Scalar(0)).select(g.vec(), Scalar(0));
  return out;
}

namespace {

template <typename Scalar>
Eigen::VectorXd batchnorm_inv_std(const Tensor<Scalar>& x, const BatchNorm<Scalar>& spec) {
  const Index c = x.channels();
  for (const auto* t : {&spec.scale, &spec.shift, &spec.running_mean, &spec.running_var})
    if (t->size() != c)
      throw DimensionError("batchnorm axis C: parameter length " + std::to_string(t->size()) + " vs " +
                           std::to_string(c) + " channels");
  if ((spec.running_var.vec().array() <= Scalar(0)).any())
    throw ConfigError("batchnorm running variance must be strictly positive");
  return (spec.running_var.vec().template cast<double>().array() + spec.eps).rsqrt().matrix();
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> batchnorm_infer(const Tensor<Scalar>& x, const BatchNorm<Scalar>& spec) {
  const Eigen::VectorXd inv = batchnorm_inv_std(x, spec);
  Tensor<Scalar> out(x.shape());
  auto in_mat = x.mat();
  auto out_mat = out.mat();
  for (Index c = 0; c < x.channels(); ++c) {
    const double gain = inv[c] * static_cast<double>(spec.scale[c]);
    const double mean = static_cast<double>(spec.running_mean[c]);
    const double shift = static_cast<double>(spec.shift[c]);
    out_mat.row(c) = ((in_mat.row(c).template cast<double>().array() - mean) * gain + shift).template cast<Scalar>();
  }
  return out;
}

template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const Tensor<Scalar>& x, const BatchNorm<Scalar>& spec,
                                          const Tensor<Scalar>& g) {
  if (x.shape() != g.shape()) throw DimensionError("batchnorm backward: shape mismatch");
  const Eigen::VectorXd inv = batchnorm_inv_std(x, spec);
  BatchNormGrads<Scalar> out{Tensor<Scalar>(x.shape()), Tensor<Scalar>(spec.scale.shape()),
                             Tensor<Scalar>(spec.shift.shape())};
  auto x_mat = x.mat();
  auto g_mat = g.mat();
  auto gi_mat = out.input.mat();
  for (Index c = 0; c < x.channels(); ++c) {
    const Eigen::ArrayXd gc = g_mat.row(c).template cast<double>().transpose().array();
    const Eigen::ArrayXd xhat =
        (x_mat.row(c).template cast<double>().transpose().array() - static_cast<double>(spec.running_mean[c])) *
        inv[c];
    gi_mat.row(c) = (gc * (inv[c] * static_cast<double>(spec.scale[c]))).transpose().template cast<Scalar>();
    out.scale[c] = static_cast<Scalar>((gc * xhat).sum());
    out.shift[c] = static_cast<Scalar>(gc.sum());
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_rank(a.shape(), 4, "concat operand");
  require_rank(b.shape(), 4, "concat operand");
  for (std::size_t axis = 1; axis < 4; ++axis)
    if (a.shape()[axis] != b.shape()[axis])
      throw DimensionError(std::string("concat axis ") + kSpatialAxis[axis - 1] + ": " +
                           std::to_string(a.shape()[axis]) + " vs " + std::to_string(b.shape()[axis]));
  Shape shape = a.shape();
  shape[0] += b.channels();
  Tensor<Scalar> out(shape);
  out.vec().head(a.size()) = a.vec();
  out.vec().tail(b.size()) = b.vec();
  return out;
}

template <typename Scalar>
PoolResult<Scalar> maxpool3d(const Tensor<Scalar>& x, int kernel) {
  require_rank(x.shape(), 4, "maxpool3d input");
  if (kernel < 1) throw ConfigError("maxpool3d: kernel must be >= 1");
  const Index k = kernel;
  const Index c = x.dim(0), d = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index od = (d + k - 1) / k, oh = (h + k - 1) / k, ow = (w + k - 1) / k;
  PoolResult<Scalar> res{Tensor<Scalar>(Shape{c, od, oh, ow}), WinnerIndex(static_cast<std::size_t>(c * od * oh * ow))};
  Index o = 0;
  for (Index ch = 0; ch < c; ++ch)
    for (Index z = 0; z < od; ++z)
      for (Index y = 0; y < oh; ++y)
        for (Index xx = 0; xx < ow; ++xx, ++o) {
          Index best = -1;
          Scalar best_val{};
          for (Index kz = 0; kz < k; ++kz) {
            const Index iz = std::min(z * k + kz, d - 1);
            for (Index ky = 0; ky < k; ++ky) {
              const Index iy = std::min(y * k + ky, h - 1);
              for (Index kx = 0; kx < k; ++kx) {
                const Index ix = std::min(xx * k + kx, w - 1);
                const Index idx = ((ch * d + iz) * h + iy) * w + ix;
                const Scalar v = x[idx];
                if (best < 0 || v > best_val || (v == best_val && idx < best)) {
                  best = idx;
                  best_val = v;
                }
              }
            }
          }
          res.output[o] = best_val;
          res.winners[static_cast<std::size_t>(o)] = best;
        }
  return res;
}

template <typename Scalar>
Tensor<Scalar> scatter_to_winners(const WinnerIndex& winners, const Tensor<Scalar>& values, const Shape& input_shape) {
  if (static_cast<Index>(winners.size()) != values.size())
    throw CacheError("max-pool winners (" + std::to_string(winners.size()) + ") do not match operand size " +
                     std::to_string(values.size()));
  std::vector<double> acc(static_cast<std::size_t>(shape_size(input_shape)), 0.0);
  for (std::size_t i = 0; i < winners.size(); ++i) {
    const Index idx = winners[i];
    if (idx < 0 || idx >= static_cast<Index>(acc.size())) throw CacheError("max-pool winner index out of range");
    acc[static_cast<std::size_t>(idx)] += static_cast<double>(values[static_cast<Index>(i)]);
  }
  return from_double<Scalar>(input_shape, acc);
}

template <typename Scalar>
Tensor<Scalar> crop_spatial(const Tensor<Scalar>& x, const Shape& spatial) {
  require_rank(x.shape(), 4, "crop input");
  for (std::size_t a = 0; a < 3; ++a)
    if (spatial[a] > x.dim(static_cast<Index>(a) + 1))
      throw DimensionError(std::string("crop axis ") + kSpatialAxis[a] + ": target " + std::to_string(spatial[a]) +
                           " exceeds extent " + std::to_string(x.dim(static_cast<Index>(a) + 1)));
  if (spatial_of(x.shape()) == spatial) return x;
  Tensor<Scalar> out(Shape{x.dim(0), spatial[0], spatial[1], spatial[2]});
  const Index d = x.dim(1), h = x.dim(2), w = x.dim(3);
  Index o = 0;
  for (Index c = 0; c < x.dim(0); ++c)
    for (Index z = 0; z < spatial[0]; ++z)
      for (Index y = 0; y < spatial[1]; ++y)
        for (Index xx = 0; xx < spatial[2]; ++xx) out[o++] = x[((c * d + z) * h + y) * w + xx];
  return out;
}

template <typename Scalar>
Tensor<Scalar> pad_spatial(const Tensor<Scalar>& x, const Shape& spatial) {
  require_rank(x.shape(), 4, "pad input");
  for (std::size_t a = 0; a < 3; ++a)
    if (spatial[a] < x.dim(static_cast<Index>(a) + 1))
      throw DimensionError(std::string("pad axis ") + kSpatialAxis[a] + ": target " + std::to_string(spatial[a]) +
                           " is below extent " + std::to_string(x.dim(static_cast<Index>(a) + 1)));
  if (spatial_of(x.shape()) == spatial) return x;
  Tensor<Scalar> out(Shape{x.dim(0), spatial[0], spatial[1], spatial[2]});
  const Index d = x.dim(1), h = x.dim(2), w = x.dim(3);
  Index i = 0;
  for (Index c = 0; c < x.dim(0); ++c)
    for (Index z = 0; z < d; ++z)
      for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx) out[((c * spatial[0] + z) * spatial[1] + y) * spatial[2] + xx] = x[i++];
  return out;
}

template <typename Scalar>
ConvGrads<Scalar> conv3d_backward(const Tensor<Scalar>& x, const Conv3d<Scalar>& spec, const Tensor<Scalar>& g) {
  ConvGrads<Scalar> out;
  out.input = conv3d_adjoint(g, spec.weight, spec.stride, spec.padding, x.shape());
  out.weight = conv3d_weight_grad(x, g, spec.weight.shape(), spec.stride, spec.padding);
  out.bias = Tensor<Scalar>(spec.bias.shape());
  out.bias.vec() = g.mat().template cast<double>().rowwise().sum().template cast<Scalar>();
  return out;
}

template <typename Scalar>
ConvGrads<Scalar> upconv3d_backward(const Tensor<Scalar>& x, const UpConv3d<Scalar>& spec, const Tensor<Scalar>& g) {
  ConvGrads<Scalar> out;
  out.input = upconv3d_adjoint(g, spec.weight, spec.stride, x.shape());
  out.weight = upconv3d_weight_grad(x, g, spec.weight.shape(), spec.stride);
  out.bias = Tensor<Scalar>(spec.bias.shape());
  out.bias.vec() = g.mat().template cast<double>().rowwise().sum().template cast<Scalar>();
  return out;
}

#define LRP3D_INSTANTIATE_LAYERS(S)                                                                           \
  template Tensor<S> conv3d_linear(const Tensor<S>&, const Tensor<S>&, int, int);                            \
  template Tensor<S> conv3d_adjoint(const Tensor<S>&, const Tensor<S>&, int, int, const Shape&);             \
  template Tensor<S> conv3d_weight_grad(const Tensor<S>&, const Tensor<S>&, const Shape&, int, int);         \
  template Tensor<S> upconv3d_linear(const Tensor<S>&, const Tensor<S>&, int);                               \
  template Tensor<S> upconv3d_adjoint(const Tensor<S>&, const Tensor<S>&, int, const Shape&);                \
  template Tensor<S> upconv3d_weight_grad(const Tensor<S>&, const Tensor<S>&, const Shape&, int);            \
  template Tensor<S> conv3d(const Tensor<S>&, const Conv3d<S>&);                                             \
  template Tensor<S> upconv3d(const Tensor<S>&, const UpConv3d<S>&);                                         \
  template Tensor<S> relu(const Tensor<S>&);                                                                 \
  template Tensor<S> relu_backward(const Tensor<S>&, const Tensor<S>&);                                      \
  template Tensor<S> batchnorm_infer(const Tensor<S>&, const BatchNorm<S>&);                                 \
  template BatchNormGrads<S> batchnorm_backward(const Tensor<S>&, const BatchNorm<S>&, const Tensor<S>&);    \
  template Tensor<S> concat_channels(const Tensor<S>&, const Tensor<S>&);                                    \
  template PoolResult<S> maxpool3d(const Tensor<S>&, int);                                                   \
  template Tensor<S> scatter_to_winners(const WinnerIndex&, const Tensor<S>&, const Shape&);                 \
  template Tensor<S> crop_spatial(const Tensor<S>&, const Shape&);                                           \
  template Tensor<S> pad_spatial(const Tensor<S>&, const Shape&);                                            \
  template ConvGrads<S> conv3d_backward(const Tensor<S>&, const Conv3d<S>&, const Tensor<S>&);               \
  template ConvGrads<S> upconv3d_backward(const Tensor<S>&, const UpConv3d<S>&, const Tensor<S>&);

LRP3D_INSTANTIATE_LAYERS(float)
LRP3D_INSTANTIATE_LAYERS(double)

#undef LRP3D_INSTANTIATE_LAYERS

}  // namespace lrp3d
