#include "lrp3d/trainer.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "lrp3d/lrp.hpp"
#include "lrp3d/rng.hpp"

namespace lrp3d {

namespace {

template <typename Scalar>
void require_same_size(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
  if (a.size() != b.size())
    throw DimensionError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
}

}  // namespace

template <typename Scalar>
double soft_dice_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt, double smoothing) {
  require_same_size(pred, gt, "soft dice loss");
  const Eigen::ArrayXd p = pred.vec().template cast<double>().array();
  const Eigen::ArrayXd g = gt.vec().template cast<double>().array();
  return 1.0 - (2.0 * (p * g).sum() + smoothing) / (p.sum() + g.sum() + smoothing);
}

template <typename Scalar>
Tensor<Scalar> soft_dice_grad(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt, double smoothing) {
  require_same_size(pred, gt, "soft dice loss");
  const Eigen::ArrayXd p = pred.vec().template cast<double>().array();
  const Eigen::ArrayXd g = gt.vec().template cast<double>().array();
  const double num = 2.0 * (p * g).sum() + smoothing;
  const double den = p.sum() + g.sum() + smoothing;
  const Eigen::ArrayXd grad = -(2.0 * g * den - num) / (den * den);
  return Tensor<Scalar>(pred.shape(), grad.matrix().template cast<Scalar>());
}

double dice(const Mask& a, const Mask& b) {
  if (a.size() != b.size())
    throw DimensionError("dice: mask shapes " + shape_string(a.shape) + " and " + shape_string(b.shape) + " differ");
  Index inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    na += a.data[i] != 0;
    nb += b.data[i] != 0;
    inter += a.data[i] && b.data[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

template <typename Scalar>
Mask threshold_logits(const Tensor<Scalar>& logits, double threshold) {
  if (logits.rank() != 4 || logits.channels() != 1)
    throw DimensionError("expected (1,D,H,W) logits, got " + shape_string(logits.shape()));
  const Tensor<Scalar> prob = sigmoid(logits);
  Mask m(spatial_of(logits.shape()));
  for (Index i = 0; i < prob.size(); ++i) m.data[static_cast<std::size_t>(i)] = static_cast<double>(prob[i]) > threshold;
  return m;
}

template <typename Scalar>
Mask predict(const Network<Scalar>& net, const Tensor<Scalar>& x, double threshold) {
  return threshold_logits(forward(net, x).output, threshold);
}

template <typename Scalar>
Tensor<Scalar> mask_to_tensor(const Mask& m) {
  Shape shape = m.shape;
  shape.insert(shape.begin(), 1);
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = m.data[static_cast<std::size_t>(i)] ? Scalar(1) : Scalar(0);
  return t;
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,loss,mean_dice\n";
  for (const auto& r : records) out << r.epoch << ',' << r.loss << ',' << r.mean_dice << '\n';
  return out.str();
}

template <typename Scalar>
void SgdMomentum::step(Network<Scalar>& net, const std::vector<NamedTensor<Scalar>>& grads) {
  std::size_t i = 0;
  const bool first = velocity_.empty();
  for_each_parameter<Scalar>(net, [&](const std::string& name, Tensor<Scalar>& param) {
    if (i >= grads.size() || grads[i].name != name || grads[i].tensor.size() != param.size())
      throw CacheError("gradient list does not match parameter '" + name + "'");
    if (first) velocity_.push_back(Eigen::VectorXd::Zero(param.size()));
    Eigen::VectorXd& v = velocity_.at(i);
    v = momentum_ * v + grads[i].tensor.vec().template cast<double>();
    if (lr_ != 0.0) param.vec() = (param.vec().template cast<double>() - lr_ * v).template cast<Scalar>();
    ++i;
  });
}

TrainResult train(Network<float> net, const Dataset& data, const TrainOptions& options, const EpochCallback& on_epoch) {
  if (data.empty()) throw ConfigError("training dataset is empty");
  if (options.epochs < 0) throw ConfigError("epoch count must be non-negative");
  TrainResult res;
  res.log.seed = options.seed;
  {
    std::ostringstream cfg;
    cfg << "{\"epochs\":" << options.epochs << ",\"lr\":" << options.lr << ",\"momentum\":" << options.momentum
        << ",\"seed\":" << options.seed << ",\"cases\":" << data.size() << "}";
    res.log.config = cfg.str();
  }

  Rng rng(options.seed);
  SgdMomentum opt(options.lr, options.momentum);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double loss_sum = 0.0;
    double dice_sum = 0.0;
    for (std::size_t idx : order) {
      const Case& c = data[idx];
      auto fwd = forward(net, c.x);
      const TensorF prob = sigmoid(fwd.output);
      const TensorF gt = mask_to_tensor<float>(c.mask);
      const double loss = soft_dice_loss(prob, gt);
      if (!std::isfinite(loss))
        throw NumericError("training diverged in epoch " + std::to_string(epoch) + "; last good epoch " +
                           std::to_string(epoch - 1));
      loss_sum += loss;
      dice_sum += dice(threshold_logits(fwd.output), c.mask);

      TensorF grad = soft_dice_grad(prob, gt);
      grad.vec() = (grad.vec().array() * prob.vec().array() * (1.0f - prob.vec().array())).matrix();
      auto back = backward(net, fwd.cache, grad);
      opt.step(net, back.params);
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(data.size()), dice_sum / static_cast<double>(data.size())};
    res.log.records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  res.net = std::move(net);
  return res;
}

#define LRP3D_INSTANTIATE_TRAINER(S)                                                    \
  template double soft_dice_loss(const Tensor<S>&, const Tensor<S>&, double);           \
  template Tensor<S> soft_dice_grad(const Tensor<S>&, const Tensor<S>&, double);        \
  template Mask predict(const Network<S>&, const Tensor<S>&, double);                   \
  template Mask threshold_logits(const Tensor<S>&, double);                             \
  template Tensor<S> mask_to_tensor(const Mask&);                                       \
  template void SgdMomentum::step(Network<S>&, const std::vector<NamedTensor<S>>&);

LRP3D_INSTANTIATE_TRAINER(float)
LRP3D_INSTANTIATE_TRAINER(double)

#undef LRP3D_INSTANTIATE_TRAINER

}  // namespace lrp3d
