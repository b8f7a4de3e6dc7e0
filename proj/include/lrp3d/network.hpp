#ifndef LRP3D_NETWORK_HPP
#define LRP3D_NETWORK_HPP

#include <functional>
#include <string>
#include <vector>

#include "lrp3d/layers.hpp"

namespace lrp3d {

/// Sequential layer graph. Layer i consumes the output of layer i-1 (or the
/// network input for i = 0); Concat layers additionally read the output of
/// an earlier layer.
template <typename Scalar>
struct Network {
  std::vector<LayerSpec<Scalar>> layers;
  Index in_channels = 0;

  Index size() const { return static_cast<Index>(layers.size()); }

  /// Throws ConfigError if a concat source does not precede its consumer.
  void validate_wiring() const;

  template <typename Other>
  Network<Other> cast() const;

  bool operator==(const Network&) const;
};

const char* layer_kind(const LayerSpec<float>& layer);
const char* layer_kind(const LayerSpec<double>& layer);

/// Learnable parameters in a fixed order: per layer, weight/bias or scale/shift.
template <typename Scalar>
struct NamedTensor {
  std::string name;
  Tensor<Scalar> tensor;
};

template <typename Scalar>
using ParameterGradients = std::vector<NamedTensor<Scalar>>;

/// Visits learnable parameters in canonical order.
template <typename Scalar>
void for_each_parameter(Network<Scalar>& net, const std::function<void(const std::string&, Tensor<Scalar>&)>& fn);
template <typename Scalar>
void for_each_parameter(const Network<Scalar>& net,
                        const std::function<void(const std::string&, const Tensor<Scalar>&)>& fn);

/// Learnable plus buffer tensors (batch-norm running statistics); what gets serialized.
template <typename Scalar>
void for_each_state_tensor(Network<Scalar>& net, const std::function<void(const std::string&, Tensor<Scalar>&)>& fn);
template <typename Scalar>
void for_each_state_tensor(const Network<Scalar>& net,
                           const std::function<void(const std::string&, const Tensor<Scalar>&)>& fn);

template <typename Scalar>
struct CacheEntry {
  Index layer_id = 0;
  Tensor<Scalar> input;
  WinnerIndex winners;  // max-pool layers only
};

template <typename Scalar>
struct ActivationCache {
  std::vector<CacheEntry<Scalar>> entries;
  Tensor<Scalar> output;
  std::string signature;  // layer kinds; guards against reuse with another network

  Index size() const { return static_cast<Index>(entries.size()); }

  /// Output of layer `id` as recorded during the pass.
  const Tensor<Scalar>& layer_output(Index id) const;
};

template <typename Scalar>
struct ForwardResult {
  Tensor<Scalar> output;
  ActivationCache<Scalar> cache;
};

template <typename Scalar>
ForwardResult<Scalar> forward(const Network<Scalar>& net, const Tensor<Scalar>& x);

template <typename Scalar>
std::string network_signature(const Network<Scalar>& net);

template <typename Scalar>
struct BackwardResult {
  ParameterGradients<Scalar> params;
  Tensor<Scalar> input;
};

/// Gradients of a scalar loss given dL/d(output).
template <typename Scalar>
BackwardResult<Scalar> backward(const Network<Scalar>& net, const ActivationCache<Scalar>& cache,
                                const Tensor<Scalar>& output_grad);

}  // namespace lrp3d

#endif  // LRP3D_NETWORK_HPP
