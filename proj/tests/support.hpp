// Shared fixtures for the unit tests.
#ifndef LRP3D_TESTS_SUPPORT_HPP
#define LRP3D_TESTS_SUPPORT_HPP

#include <filesystem>
#include <string>

#include <unistd.h>

#include "lrp3d/layers.hpp"
#include "lrp3d/network.hpp"
#include "lrp3d/rng.hpp"
#include "lrp3d/unet.hpp"

namespace lrp3d::test {

template <typename Scalar>
Tensor<Scalar> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(rng.uniform(lo, hi));
  return t;
}

// Explicit (inputs x outputs) matrix of a bias-free convolution, built from the
// index definition: out[co, o] += w[co, ci, k] * in[ci, o * stride - pad + k].
inline Eigen::MatrixXd dense_conv_matrix(const Shape& in, const TensorD& w, int stride, int pad) {
  const Shape out = conv3d_output_shape(in, w.shape(), stride, pad);
  const Index cin = in[0], cout = w.dim(0), k0 = w.dim(2), k1 = w.dim(3), k2 = w.dim(4);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(shape_size(in), shape_size(out));
  for (Index co = 0; co < cout; ++co)
    for (Index od = 0; od < out[1]; ++od)
      for (Index oh = 0; oh < out[2]; ++oh)
        for (Index ow = 0; ow < out[3]; ++ow) {
          const Index j = ((co * out[1] + od) * out[2] + oh) * out[3] + ow;
          for (Index ci = 0; ci < cin; ++ci)
            for (Index a = 0; a < k0; ++a)
              for (Index b = 0; b < k1; ++b)
                for (Index c = 0; c < k2; ++c) {
                  const Index d = od * stride - pad + a, h = oh * stride - pad + b, x = ow * stride - pad + c;
                  if (d < 0 || h < 0 || x < 0 || d >= in[1] || h >= in[2] || x >= in[3]) continue;
                  const Index i = ((ci * in[1] + d) * in[2] + h) * in[3] + x;
                  m(i, j) += w[(((co * cin + ci) * k0 + a) * k1 + b) * k2 + c];
                }
        }
  return m;
}

// Same for a transposed convolution: out[co, i * stride + k] += w[ci, co, k] * in[ci, i].
inline Eigen::MatrixXd dense_upconv_matrix(const Shape& in, const TensorD& w, int stride) {
  const Shape out = upconv3d_output_shape(in, w.shape(), stride);
  const Index cin = in[0], cout = w.dim(1), k0 = w.dim(2), k1 = w.dim(3), k2 = w.dim(4);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(shape_size(in), shape_size(out));
  for (Index ci = 0; ci < cin; ++ci)
    for (Index d = 0; d < in[1]; ++d)
      for (Index h = 0; h < in[2]; ++h)
        for (Index x = 0; x < in[3]; ++x) {
          const Index i = ((ci * in[1] + d) * in[2] + h) * in[3] + x;
          for (Index co = 0; co < cout; ++co)
            for (Index a = 0; a < k0; ++a)
              for (Index b = 0; b < k1; ++b)
                for (Index c = 0; c < k2; ++c) {
                  const Index od = d * stride + a, oh = h * stride + b, ow = x * stride + c;
                  const Index j = ((co * out[1] + od) * out[2] + oh) * out[3] + ow;
                  m(i, j) += w[(((ci * cout + co) * k0 + a) * k1 + b) * k2 + c];
                }
        }
  return m;
}

inline UNetConfig small_config(Index depth = 2, Index base = 4, Shape input = {6, 8, 16, 16}) {
  UNetConfig c;
  c.depth = depth;
  c.base_filters = base;
  c.in_channels = input[0];
  c.input_shape = std::move(input);
  return c;
}

template <typename Scalar>
Network<Scalar> seeded_unet(const UNetConfig& cfg, std::uint64_t seed) {
  Network<Scalar> net = build_unet<Scalar>(cfg);
  init_kaiming(net, seed);
  return net;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("lrp3d_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  static int& counter() {
    static int n = 0;
    return n;
  }
  std::filesystem::path path_;
};

}  // namespace lrp3d::test

#endif  // LRP3D_TESTS_SUPPORT_HPP
