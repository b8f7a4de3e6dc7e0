#ifndef LRP3D_LRP_HPP
#define LRP3D_LRP_HPP

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lrp3d/filters.hpp"
#include "lrp3d/network.hpp"

namespace lrp3d {

/// Default stabilizer added to z+ denominators.
inline constexpr double kDefaultLrpEps = 1e-9;

/// How the output-level relevance R^(L) is initialized from the head activation.
struct SeedSpec {
  enum class Kind { PredictedPositive, FullOutput, MaskedBy };

  Kind kind = Kind::PredictedPositive;
  Mask mask;               // MaskedBy only
  double threshold = 0.5;  // PredictedPositive only

  static SeedSpec predicted_positive(double threshold = 0.5) { return {Kind::PredictedPositive, {}, threshold}; }
  static SeedSpec full_output() { return {Kind::FullOutput, {}, 0.5}; }
  static SeedSpec masked_by(Mask m) { return {Kind::MaskedBy, std::move(m), 0.5}; }
};

template <typename Scalar>
struct SeedResult {
  Tensor<Scalar> relevance;
  bool warning = false;  // PredictedPositive with no voxel above threshold
};

/// `output` is the network's head activation (sigmoid probabilities).
template <typename Scalar>
SeedResult<Scalar> seed_relevance(const Tensor<Scalar>& output, const SeedSpec& spec);

/// Relevance that reached output units with a zero z+ denominator.
struct AbsorptionStats {
  Index units = 0;
  double mass = 0.0;

  AbsorptionStats& operator+=(const AbsorptionStats& o) {
    units += o.units;
    mass += o.mass;
    return *this;
  }
};

/// z+ rule on an explicit weight matrix. `weights(i, j)` connects input i to output j.
///   R_i = sum_j a_i w+_ij / (sum_k a_k w+_kj + eps) * R_j
/// Outputs whose denominator sum is exactly zero pass no relevance.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> relprop_zplus(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& a, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& weights,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& r_next, double eps = kDefaultLrpEps,
    AbsorptionStats* stats = nullptr) {
  if (weights.rows() != a.size() || weights.cols() != r_next.size())
    throw DimensionError("relprop_zplus: weights " + std::to_string(weights.rows()) + "x" +
                         std::to_string(weights.cols()) + " vs a(" + std::to_string(a.size()) + "), R(" +
                         std::to_string(r_next.size()) + ")");
  const Eigen::MatrixXd wp = weights.template cast<double>().cwiseMax(0.0);
  const Eigen::VectorXd ad = a.template cast<double>();
  const Eigen::VectorXd z = wp.transpose() * ad;
  Eigen::VectorXd s(z.size());
  for (Index j = 0; j < z.size(); ++j) {
    if (z[j] == 0.0) {
      s[j] = 0.0;
      if (stats && r_next[j] != Scalar(0)) {
        ++stats->units;
        stats->mass += static_cast<double>(r_next[j]);
      }
    } else {
      s[j] = static_cast<double>(r_next[j]) / (z[j] + eps);
    }
  }
  return (ad.array() * (wp * s).array()).matrix().template cast<Scalar>();
}

/// z+ rule through a convolution (bias ignored). `a` is the cached layer input.
template <typename Scalar>
Tensor<Scalar> relprop_conv3d(const Tensor<Scalar>& a, const Conv3d<Scalar>& spec, const Tensor<Scalar>& r_next,
                              double eps = kDefaultLrpEps, AbsorptionStats* stats = nullptr);

/// z+ rule through a transposed convolution (bias ignored).
template <typename Scalar>
Tensor<Scalar> relprop_upconv3d(const Tensor<Scalar>& a, const UpConv3d<Scalar>& spec, const Tensor<Scalar>& r_next,
                                double eps = kDefaultLrpEps, AbsorptionStats* stats = nullptr);

/// Winner-take-all routing through max pooling.
template <typename Scalar>
Tensor<Scalar> relprop_maxpool(const WinnerIndex& winners, const Tensor<Scalar>& r_next, const Shape& input_shape);

/// Splits concatenated relevance back into its two operands (channels of `a` first).
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> relprop_concat_split(const Tensor<Scalar>& r, const Shape& shape_a,
                                                               const Shape& shape_b);

/// ReLU and batch-norm layers pass relevance through unchanged.
template <typename Scalar>
Tensor<Scalar> relprop_passthrough(const Tensor<Scalar>& r_next) {
  return r_next;
}

/// x / max|x|; all-zero input returns zeros.
template <typename Scalar>
Tensor<Scalar> normalize_abs(const Tensor<Scalar>& r) {
  const Scalar n = r.max_abs();
  if (n == Scalar(0)) return Tensor<Scalar>(r.shape());
  return Tensor<Scalar>(r.shape(), r.vec() / n);
}

/// Filter insertion points: layer id (applied to the relevance at that
/// layer's input) or kFinalInsertion. Empty plan = standard LRP.
using FilterPlan = std::map<Index, FilterSpec>;

struct LrpOptions {
  double eps = kDefaultLrpEps;
  bool keep_layers = true;  // false keeps only R^(L) and R^(0)
};

template <typename Scalar>
struct LayerRelevance {
  Index layer_id = 0;
  Tensor<Scalar> relevance;  // w.r.t. the layer's forward input, after any filter at this layer
  double in_flight = 0.0;    // sum of this relevance plus skip relevance still waiting for its source
  AbsorptionStats absorbed;  // at this layer
};

template <typename Scalar>
struct RelevanceMap {
  Tensor<Scalar> output;                      // R^(L)
  std::vector<LayerRelevance<Scalar>> layers;  // traversal order: last layer first, layer 0 last
  Tensor<Scalar> input;                       // R^(0), after the FINAL filter if any
  AbsorptionStats absorbed;
  bool seed_warning = false;

  const LayerRelevance<Scalar>& at(Index layer_id) const;
};

/// Backward relevance pass over the cached forward activations.
template <typename Scalar>
RelevanceMap<Scalar> run_lrp(const Network<Scalar>& net, const ActivationCache<Scalar>& cache, const SeedSpec& seed,
                             const FilterPlan& plan = {}, const LrpOptions& options = {});

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& logits);

}  // namespace lrp3d

#endif  // LRP3D_LRP_HPP
