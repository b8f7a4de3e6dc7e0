#include "lrp3d/lrp.hpp"

#include <cmath>

namespace lrp3d {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Relevance ratio s_j = R_j / (z_j + eps), with zero-denominator outputs dropped.
TensorD stabilized_ratio(const TensorD& z, const TensorD& r, double eps, AbsorptionStats* stats) {
  if (z.shape() != r.shape())
    throw DimensionError("relevance shape " + shape_string(r.shape()) + " does not match layer output " +
                         shape_string(z.shape()));
  TensorD s(z.shape());
  for (Index j = 0; j < z.size(); ++j) {
    if (z[j] == 0.0) {
      if (stats && r[j] != 0.0) {
        ++stats->units;
        stats->mass += r[j];
      }
      continue;
    }
    s[j] = r[j] / (z[j] + eps);
  }
  return s;
}

template <typename Scalar>
Tensor<Scalar> hadamard(const TensorD& a, const TensorD& c) {
  return Tensor<Scalar>(a.shape(), (a.vec().array() * c.vec().array()).matrix().template cast<Scalar>());
}

TensorD positive_part(const TensorD& w) { return TensorD(w.shape(), w.vec().cwiseMax(0.0)); }

}  // namespace

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& logits) {
  Tensor<Scalar> out(logits.shape());
  for (Index i = 0; i < logits.size(); ++i)
    out[i] = static_cast<Scalar>(1.0 / (1.0 + std::exp(-static_cast<double>(logits[i]))));
  return out;
}

template <typename Scalar>
SeedResult<Scalar> seed_relevance(const Tensor<Scalar>& output, const SeedSpec& spec) {
  SeedResult<Scalar> res;
  switch (spec.kind) {
    case SeedSpec::Kind::FullOutput:
      res.relevance = output;
      break;
    case SeedSpec::Kind::PredictedPositive: {
      res.relevance = Tensor<Scalar>(output.shape());
      bool any = false;
      for (Index i = 0; i < output.size(); ++i) {
        if (static_cast<double>(output[i]) > spec.threshold) {
          res.relevance[i] = output[i];
          any = true;
        }
      }
      res.warning = !any;
      break;
    }
    case SeedSpec::Kind::MaskedBy: {
      // a spatial (D,H,W) mask broadcasts over output channels
      const Index spatial = output.rank() == 4 ? output.channel_size() : output.size();
      if (spec.mask.size() != output.size() && !(output.rank() == 4 && spec.mask.shape == spatial_of(output.shape())))
        throw DimensionError("seed mask shape " + shape_string(spec.mask.shape) + " does not fit output " +
                             shape_string(output.shape()));
      res.relevance = Tensor<Scalar>(output.shape());
      const bool broadcast = spec.mask.size() != output.size();
      for (Index i = 0; i < output.size(); ++i) {
        const Index m = broadcast ? i % spatial : i;
        if (spec.mask.data[static_cast<std::size_t>(m)]) res.relevance[i] = output[i];
      }
      break;
    }
  }
  return res;
}

template <typename Scalar>
Tensor<Scalar> relprop_conv3d(const Tensor<Scalar>& a, const Conv3d<Scalar>& spec, const Tensor<Scalar>& r_next,
                              double eps, AbsorptionStats* stats) {
  const TensorD ad = a.template cast<double>();
  const TensorD wp = positive_part(spec.weight.template cast<double>());
  const TensorD z = conv3d_linear(ad, wp, spec.stride, spec.padding);
  const TensorD s = stabilized_ratio(z, r_next.template cast<double>(), eps, stats);
  return hadamard<Scalar>(ad, conv3d_adjoint(s, wp, spec.stride, spec.padding, ad.shape()));
}

template <typename Scalar>
Tensor<Scalar> relprop_upconv3d(const Tensor<Scalar>& a, const UpConv3d<Scalar>& spec, const Tensor<Scalar>& r_next,
                                double eps, AbsorptionStats* stats) {
  const TensorD ad = a.template cast<double>();
  const TensorD wp = positive_part(spec.weight.template cast<double>());
  const TensorD z = upconv3d_linear(ad, wp, spec.stride);
  const TensorD s = stabilized_ratio(z, r_next.template cast<double>(), eps, stats);
  return hadamard<Scalar>(ad, upconv3d_adjoint(s, wp, spec.stride, ad.shape()));
}

template <typename Scalar>
Tensor<Scalar> relprop_maxpool(const WinnerIndex& winners, const Tensor<Scalar>& r_next, const Shape& input_shape) {
  return scatter_to_winners(winners, r_next, input_shape);
}

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> relprop_concat_split(const Tensor<Scalar>& r, const Shape& shape_a,
                                                               const Shape& shape_b) {
  if (shape_a.empty() || shape_b.empty() || r.rank() != static_cast<Index>(shape_a.size()) ||
      shape_a.size() != shape_b.size())
    throw DimensionError("concat split: rank mismatch");
  if (shape_a[0] + shape_b[0] != r.channels())
    throw DimensionError("concat split: " + std::to_string(shape_a[0]) + " + " + std::to_string(shape_b[0]) +
                         " channels do not add up to " + std::to_string(r.channels()));
  if (spatial_of(shape_a) != spatial_of(r.shape()) || spatial_of(shape_b) != spatial_of(r.shape()))
    throw DimensionError("concat split: spatial shapes " + shape_string(shape_a) + ", " + shape_string(shape_b) +
                         " vs " + shape_string(r.shape()));
  const Index na = shape_size(shape_a);
  return {Tensor<Scalar>(shape_a, r.vec().head(na)), Tensor<Scalar>(shape_b, r.vec().tail(r.size() - na))};
}

template <typename Scalar>
const LayerRelevance<Scalar>& RelevanceMap<Scalar>::at(Index layer_id) const {
  for (const auto& l : layers)
    if (l.layer_id == layer_id) return l;
  throw DimensionError("relevance map holds no entry for layer " + std::to_string(layer_id));
}

template <typename Scalar>
RelevanceMap<Scalar> run_lrp(const Network<Scalar>& net, const ActivationCache<Scalar>& cache, const SeedSpec& seed,
                             const FilterPlan& plan, const LrpOptions& options) {
  if (cache.size() != net.size() || cache.signature != network_signature(net))
    throw CacheError("activation cache does not match the network");
  for (const auto& [where, spec] : plan) {
    if (where != kFinalInsertion && (where < 0 || where >= net.size()))
      throw ConfigError("filter plan references unknown layer " + std::to_string(where));
    spec.validate();
  }

  RelevanceMap<Scalar> map;
  auto seeded = seed_relevance(sigmoid(cache.output), seed);
  map.output = std::move(seeded.relevance);
  map.seed_warning = seeded.warning;

  // rel_out[i]: relevance w.r.t. the output of layer i; complete once every consumer has run.
  std::vector<Tensor<Scalar>> rel_out(net.layers.size());
  if (!rel_out.empty()) rel_out.back() = map.output;
  Tensor<Scalar> r_input;

  auto deliver = [&](Index target, Tensor<Scalar> r) {
    Tensor<Scalar>& slot = target < 0 ? r_input : rel_out[static_cast<std::size_t>(target)];
    if (slot.empty())
      slot = std::move(r);
    else
      slot.vec() += r.vec();
  };

  for (Index id = net.size() - 1; id >= 0; --id) {
    const auto& entry = cache.entries[static_cast<std::size_t>(id)];
    Tensor<Scalar> r_next = std::move(rel_out[static_cast<std::size_t>(id)]);
    if (r_next.empty()) r_next = Tensor<Scalar>(cache.layer_output(id).shape());
    AbsorptionStats absorbed;
    try {
      std::visit(Overloaded{[&](const Conv3d<Scalar>& l) {
                              deliver(id - 1, relprop_conv3d(entry.input, l, r_next, options.eps, &absorbed));
                            },
                            [&](const ReLU&) { deliver(id - 1, relprop_passthrough(r_next)); },
                            [&](const BatchNorm<Scalar>&) { deliver(id - 1, relprop_passthrough(r_next)); },
                            [&](const MaxPool3d&) {
                              deliver(id - 1, relprop_maxpool(entry.winners, r_next, entry.input.shape()));
                            },
                            [&](const UpConv3d<Scalar>& l) {
                              deliver(id - 1, relprop_upconv3d(entry.input, l, r_next, options.eps, &absorbed));
                            },
                            [&](const Concat& l) {
                              const Shape skip_shape = cache.layer_output(l.source).shape();
                              Shape rest_shape = skip_shape;
                              rest_shape[0] = r_next.channels() - skip_shape[0];
                              auto [r_skip, r_rest] = relprop_concat_split(r_next, skip_shape, rest_shape);
                              deliver(l.source, std::move(r_skip));
                              // cropped-away voxels never reached the output
                              deliver(id - 1, pad_spatial(r_rest, spatial_of(entry.input.shape())));
                            }},
                 net.layers[static_cast<std::size_t>(id)]);
    } catch (const DimensionError& e) {
      throw DimensionError("relevance pass, layer " + std::to_string(id) + " (" + layer_kind(net.layers[static_cast<std::size_t>(id)]) + "): " + e.what());
    }

    Tensor<Scalar>& r_here = id == 0 ? r_input : rel_out[static_cast<std::size_t>(id - 1)];
    if (r_here.empty()) r_here = Tensor<Scalar>(entry.input.shape());
    if (const auto it = plan.find(id); it != plan.end()) r_here = apply_filtered_per_channel(r_here, it->second);

    map.absorbed += absorbed;
    LayerRelevance<Scalar> rec;
    rec.layer_id = id;
    rec.absorbed = absorbed;
    rec.in_flight = r_here.sum_double();
    for (Index k = 0; k + 1 < id; ++k)
      if (!rel_out[static_cast<std::size_t>(k)].empty()) rec.in_flight += rel_out[static_cast<std::size_t>(k)].sum_double();
    if (options.keep_layers) rec.relevance = r_here;
    map.layers.push_back(std::move(rec));
  }

  if (const auto it = plan.find(kFinalInsertion); it != plan.end())
    r_input = apply_filtered_per_channel(r_input, it->second);
  map.input = std::move(r_input);
  return map;
}

#define LRP3D_INSTANTIATE_LRP(S)                                                                             \
  template Tensor<S> sigmoid(const Tensor<S>&);                                                             \
  template SeedResult<S> seed_relevance(const Tensor<S>&, const SeedSpec&);                                 \
  template Tensor<S> relprop_conv3d(const Tensor<S>&, const Conv3d<S>&, const Tensor<S>&, double,           \
                                    AbsorptionStats*);                                                      \
  template Tensor<S> relprop_upconv3d(const Tensor<S>&, const UpConv3d<S>&, const Tensor<S>&, double,       \
                                      AbsorptionStats*);                                                    \
  template Tensor<S> relprop_maxpool(const WinnerIndex&, const Tensor<S>&, const Shape&);                   \
  template std::pair<Tensor<S>, Tensor<S>> relprop_concat_split(const Tensor<S>&, const Shape&, const Shape&); \
  template struct RelevanceMap<S>;                                                                          \
  template RelevanceMap<S> run_lrp(const Network<S>&, const ActivationCache<S>&, const SeedSpec&,           \
                                   const FilterPlan&, const LrpOptions&);

LRP3D_INSTANTIATE_LRP(float)
LRP3D_INSTANTIATE_LRP(double)

#undef LRP3D_INSTANTIATE_LRP

}  // namespace lrp3d
