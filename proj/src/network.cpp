#include "lrp3d/network.hpp"

#include <type_traits>

namespace lrp3d {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

template <typename Scalar>
const char* kind_of(const LayerSpec<Scalar>& layer) {
  return std::visit(Overloaded{[](const Conv3d<Scalar>&) { return "conv3d"; }, [](const ReLU&) { return "relu"; },
                               [](const BatchNorm<Scalar>&) { return "batchnorm"; },
                               [](const MaxPool3d&) { return "maxpool3d"; },
                               [](const UpConv3d<Scalar>&) { return "upconv3d"; },
                               [](const Concat&) { return "concat"; }},
                    layer);
}

std::string layer_prefix(Index id) { return "L" + std::to_string(id) + "."; }

template <typename Net, typename Fn>
void visit_tensors(Net& net, bool with_buffers, Fn&& fn) {
  for (Index id = 0; id < net.size(); ++id) {
    const std::string p = layer_prefix(id);
    std::visit(
        [&](auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (requires { layer.weight; }) {
            fn(p + "weight", layer.weight);
            fn(p + "bias", layer.bias);
          } else if constexpr (requires { layer.running_var; }) {
            fn(p + "scale", layer.scale);
            fn(p + "shift", layer.shift);
            if (with_buffers) {
              fn(p + "running_mean", layer.running_mean);
              fn(p + "running_var", layer.running_var);
            }
          } else {
            static_assert(std::is_empty_v<L> || std::is_same_v<L, Concat> || std::is_same_v<L, MaxPool3d>);
          }
        },
        net.layers[static_cast<std::size_t>(id)]);
  }
}

template <typename To, typename From>
LayerSpec<To> cast_layer(const LayerSpec<From>& layer) {
  return std::visit(
      Overloaded{
          [](const Conv3d<From>& l) -> LayerSpec<To> {
            return Conv3d<To>{l.weight.template cast<To>(), l.bias.template cast<To>(), l.stride, l.padding};
          },
          [](const ReLU&) -> LayerSpec<To> { return ReLU{}; },
          [](const BatchNorm<From>& l) -> LayerSpec<To> {
            return BatchNorm<To>{l.scale.template cast<To>(), l.shift.template cast<To>(),
                                 l.running_mean.template cast<To>(), l.running_var.template cast<To>(), l.eps};
          },
          [](const MaxPool3d& l) -> LayerSpec<To> { return l; },
          [](const UpConv3d<From>& l) -> LayerSpec<To> {
            return UpConv3d<To>{l.weight.template cast<To>(), l.bias.template cast<To>(), l.stride};
          },
          [](const Concat& l) -> LayerSpec<To> { return l; }},
      layer);
}

template <typename Scalar>
bool same_layer(const LayerSpec<Scalar>& a, const LayerSpec<Scalar>& b) {
  if (a.index() != b.index()) return false;
  return std::visit(
      [&](const auto& la) {
        using L = std::decay_t<decltype(la)>;
        const auto& lb = std::get<L>(b);
        if constexpr (std::is_same_v<L, Conv3d<Scalar>>)
          return la.weight == lb.weight && la.bias == lb.bias && la.stride == lb.stride && la.padding == lb.padding;
        else if constexpr (std::is_same_v<L, BatchNorm<Scalar>>)
          return la.scale == lb.scale && la.shift == lb.shift && la.running_mean == lb.running_mean &&
                 la.running_var == lb.running_var && la.eps == lb.eps;
        else if constexpr (std::is_same_v<L, UpConv3d<Scalar>>)
          return la.weight == lb.weight && la.bias == lb.bias && la.stride == lb.stride;
        else if constexpr (std::is_same_v<L, MaxPool3d>)
          return la.kernel == lb.kernel;
        else if constexpr (std::is_same_v<L, Concat>)
          return la.source == lb.source;
        else
          return true;
      },
      a);
}

template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, Index id, const char* kind) {
  if (!t.all_finite())
    throw NumericError("layer " + std::to_string(id) + " (" + kind + ") produced a non-finite value");
}

}  // namespace

const char* layer_kind(const LayerSpec<float>& layer) { return kind_of(layer); }
const char* layer_kind(const LayerSpec<double>& layer) { return kind_of(layer); }

template <typename Scalar>
void Network<Scalar>::validate_wiring() const {
  for (Index id = 0; id < size(); ++id) {
    if (const auto* cat = std::get_if<Concat>(&layers[static_cast<std::size_t>(id)])) {
      if (cat->source < 0 || cat->source >= id)
        throw ConfigError("layer " + std::to_string(id) + ": concat source " + std::to_string(cat->source) +
                          " does not precede its consumer");
    }
  }
}

template <typename Scalar>
template <typename Other>
Network<Other> Network<Scalar>::cast() const {
  Network<Other> out;
  out.in_channels = in_channels;
  out.layers.reserve(layers.size());
  for (const auto& l : layers) out.layers.push_back(cast_layer<Other>(l));
  return out;
}

template <typename Scalar>
bool Network<Scalar>::operator==(const Network& other) const {
  if (in_channels != other.in_channels || layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (!same_layer(layers[i], other.layers[i])) return false;
  return true;
}

template <typename Scalar>
void for_each_parameter(Network<Scalar>& net, const std::function<void(const std::string&, Tensor<Scalar>&)>& fn) {
  visit_tensors(net, false, fn);
}

template <typename Scalar>
void for_each_parameter(const Network<Scalar>& net,
                        const std::function<void(const std::string&, const Tensor<Scalar>&)>& fn) {
  visit_tensors(net, false, fn);
}

template <typename Scalar>
void for_each_state_tensor(Network<Scalar>& net, const std::function<void(const std::string&, Tensor<Scalar>&)>& fn) {
  visit_tensors(net, true, fn);
}

template <typename Scalar>
void for_each_state_tensor(const Network<Scalar>& net,
                           const std::function<void(const std::string&, const Tensor<Scalar>&)>& fn) {
  visit_tensors(net, true, fn);
}

template <typename Scalar>
const Tensor<Scalar>& ActivationCache<Scalar>::layer_output(Index id) const {
  if (id < 0 || id >= size()) throw CacheError("no cached output for layer " + std::to_string(id));
  return id + 1 < size() ? entries[static_cast<std::size_t>(id + 1)].input : output;
}

template <typename Scalar>
std::string network_signature(const Network<Scalar>& net) {
  std::string sig;
  for (const auto& l : net.layers) {
    sig += kind_of(l);
    sig += ';';
  }
  return sig;
}

template <typename Scalar>
ForwardResult<Scalar> forward(const Network<Scalar>& net, const Tensor<Scalar>& x) {
  net.validate_wiring();
  if (x.rank() != 4 || x.channels() != net.in_channels)
    throw DimensionError("network input must be (" + std::to_string(net.in_channels) + ",D,H,W), got " +
                         shape_string(x.shape()));
  ForwardResult<Scalar> res;
  auto& cache = res.cache;
  cache.signature = network_signature(net);
  cache.entries.reserve(net.layers.size());
  Tensor<Scalar> current = x;
  for (Index id = 0; id < net.size(); ++id) {
    const auto& layer = net.layers[static_cast<std::size_t>(id)];
    CacheEntry<Scalar> entry{id, current, {}};
    try {
      current = std::visit(
          Overloaded{[&](const Conv3d<Scalar>& l) { return conv3d(entry.input, l); },
                     [&](const ReLU&) { return relu(entry.input); },
                     [&](const BatchNorm<Scalar>& l) { return batchnorm_infer(entry.input, l); },
                     [&](const MaxPool3d& l) {
                       auto pooled = maxpool3d(entry.input, l.kernel);
                       entry.winners = std::move(pooled.winners);
                       return std::move(pooled.output);
                     },
                     [&](const UpConv3d<Scalar>& l) { return upconv3d(entry.input, l); },
                     [&](const Concat& l) {
                       const Tensor<Scalar>& skip = l.source + 1 == id ? entry.input
                                                    : cache.entries[static_cast<std::size_t>(l.source + 1)].input;
                       return concat_channels(skip, crop_spatial(entry.input, spatial_of(skip.shape())));
                     }},
          layer);
    } catch (const DimensionError& e) {
      throw DimensionError("layer " + std::to_string(id) + " (" + kind_of(layer) + "): " + e.what());
    }
    require_finite(current, id, kind_of(layer));
    cache.entries.push_back(std::move(entry));
  }
  cache.output = current;
  res.output = std::move(current);
  return res;
}

template <typename Scalar>
BackwardResult<Scalar> backward(const Network<Scalar>& net, const ActivationCache<Scalar>& cache,
                                const Tensor<Scalar>& output_grad) {
  if (cache.size() != net.size() || cache.signature != network_signature(net))
    throw CacheError("activation cache does not match the network (" + std::to_string(cache.size()) +
                     " entries for " + std::to_string(net.size()) + " layers)");
  if (output_grad.shape() != cache.output.shape())
    throw DimensionError("loss gradient shape " + shape_string(output_grad.shape()) + " vs network output " +
                         shape_string(cache.output.shape()));

  // grad_out[i]: gradient w.r.t. the output of layer i (accumulates skip contributions).
  std::vector<Tensor<Scalar>> grad_out(net.layers.size());
  if (!grad_out.empty()) grad_out.back() = output_grad;

  std::vector<std::vector<NamedTensor<Scalar>>> per_layer(net.layers.size());
  Tensor<Scalar> input_grad = output_grad;

  auto accumulate = [&](Index target, Tensor<Scalar> g) {
    if (target < 0) {
      input_grad = std::move(g);
      return;
    }
    auto& slot = grad_out[static_cast<std::size_t>(target)];
    if (slot.empty())
      slot = std::move(g);
    else
      slot.vec() += g.vec();
  };

  for (Index id = net.size() - 1; id >= 0; --id) {
    const auto& entry = cache.entries[static_cast<std::size_t>(id)];
    if (entry.layer_id != id) throw CacheError("activation cache entries out of order at layer " + std::to_string(id));
    Tensor<Scalar> g = std::move(grad_out[static_cast<std::size_t>(id)]);
    if (g.empty()) g = Tensor<Scalar>(cache.layer_output(id).shape());
    const std::string p = layer_prefix(id);
    auto& params = per_layer[static_cast<std::size_t>(id)];
    std::visit(Overloaded{[&](const Conv3d<Scalar>& l) {
                            auto grads = conv3d_backward(entry.input, l, g);
                            params.push_back({p + "weight", std::move(grads.weight)});
                            params.push_back({p + "bias", std::move(grads.bias)});
                            accumulate(id - 1, std::move(grads.input));
                          },
                          [&](const ReLU&) { accumulate(id - 1, relu_backward(entry.input, g)); },
                          [&](const BatchNorm<Scalar>& l) {
                            auto grads = batchnorm_backward(entry.input, l, g);
                            params.push_back({p + "scale", std::move(grads.scale)});
                            params.push_back({p + "shift", std::move(grads.shift)});
                            accumulate(id - 1, std::move(grads.input));
                          },
                          [&](const MaxPool3d&) {
                            accumulate(id - 1, scatter_to_winners(entry.winners, g, entry.input.shape()));
                          },
                          [&](const UpConv3d<Scalar>& l) {
                            auto grads = upconv3d_backward(entry.input, l, g);
                            params.push_back({p + "weight", std::move(grads.weight)});
                            params.push_back({p + "bias", std::move(grads.bias)});
                            accumulate(id - 1, std::move(grads.input));
                          },
                          [&](const Concat& l) {
                            const Tensor<Scalar>& skip = cache.layer_output(l.source);
                            const Index skip_size = skip.size();
                            Tensor<Scalar> g_skip(skip.shape(), g.vec().head(skip_size));
                            Shape rest_shape = skip.shape();
                            rest_shape[0] = g.channels() - skip.channels();
                            Tensor<Scalar> g_rest(rest_shape, g.vec().tail(g.size() - skip_size));
                            accumulate(l.source, std::move(g_skip));
                            accumulate(id - 1, pad_spatial(g_rest, spatial_of(entry.input.shape())));
                          }},
               net.layers[static_cast<std::size_t>(id)]);
  }

  BackwardResult<Scalar> res;
  for (auto& layer_params : per_layer)
    for (auto& p : layer_params) res.params.push_back(std::move(p));
  res.input = std::move(input_grad);
  return res;
}

#define LRP3D_INSTANTIATE_NETWORK(S)                                                                          \
  template struct Network<S>;                                                                                 \
  template struct ActivationCache<S>;                                                                         \
  template void for_each_parameter(Network<S>&, const std::function<void(const std::string&, Tensor<S>&)>&); \
  template void for_each_parameter(const Network<S>&,                                                         \
                                   const std::function<void(const std::string&, const Tensor<S>&)>&);        \
  template void for_each_state_tensor(Network<S>&, const std::function<void(const std::string&, Tensor<S>&)>&); \
  template void for_each_state_tensor(const Network<S>&,                                                      \
                                      const std::function<void(const std::string&, const Tensor<S>&)>&);     \
  template std::string network_signature(const Network<S>&);                                                  \
  template ForwardResult<S> forward(const Network<S>&, const Tensor<S>&);                                     \
  template BackwardResult<S> backward(const Network<S>&, const ActivationCache<S>&, const Tensor<S>&);

LRP3D_INSTANTIATE_NETWORK(float)
LRP3D_INSTANTIATE_NETWORK(double)

template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Network<double> Network<double>::cast<double>() const;

#undef LRP3D_INSTANTIATE_NETWORK

}  // namespace lrp3d
