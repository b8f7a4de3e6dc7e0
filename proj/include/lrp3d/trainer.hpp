#ifndef LRP3D_TRAINER_HPP
#define LRP3D_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lrp3d/network.hpp"

namespace lrp3d {

/// One training/evaluation volume: (C,D,H,W) input and (D,H,W) lesion mask.
struct Case {
  std::string id;
  TensorF x;
  Mask mask;
};

using Dataset = std::vector<Case>;

inline constexpr double kDiceSmoothing = 1.0;

/// 1 - (2 sum(p g) + s) / (sum p + sum g + s).
template <typename Scalar>
double soft_dice_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt, double smoothing = kDiceSmoothing);

/// d(soft_dice_loss)/d(pred).
template <typename Scalar>
Tensor<Scalar> soft_dice_grad(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt, double smoothing = kDiceSmoothing);

/// 2|A n B| / (|A| + |B|); 1.0 when both masks are empty.
double dice(const Mask& a, const Mask& b);

/// Sigmoid of the single-channel logits, strictly above `threshold`.
template <typename Scalar>
Mask predict(const Network<Scalar>& net, const Tensor<Scalar>& x, double threshold = 0.5);

/// Binarize an already computed logit map (C=1).
template <typename Scalar>
Mask threshold_logits(const Tensor<Scalar>& logits, double threshold = 0.5);

/// Mask as (1,D,H,W) 0/1 tensor.
template <typename Scalar>
Tensor<Scalar> mask_to_tensor(const Mask& m);

struct TrainOptions {
  int epochs = 80;
  double lr = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double mean_dice = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainLog {
  std::vector<EpochRecord> records;
  std::uint64_t seed = 0;
  std::string config;  // echo of the model and training options

  /// "epoch,loss,mean_dice" CSV.
  std::string to_csv() const;
  bool operator==(const TrainLog&) const = default;
};

/// SGD with momentum; v <- momentum * v + g, p <- p - lr * v.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  template <typename Scalar>
  void step(Network<Scalar>& net, const std::vector<NamedTensor<Scalar>>& grads);

 private:
  double lr_;
  double momentum_;
  std::vector<Eigen::VectorXd> velocity_;
};

struct TrainResult {
  Network<float> net;
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Batch size 1, soft Dice loss on the sigmoid head, case order shuffled per
/// epoch from `seed`. Throws NumericError naming the last good epoch if the
/// loss becomes non-finite.
TrainResult train(Network<float> net, const Dataset& data, const TrainOptions& options,
                  const EpochCallback& on_epoch = {});

}  // namespace lrp3d

#endif  // LRP3D_TRAINER_HPP
