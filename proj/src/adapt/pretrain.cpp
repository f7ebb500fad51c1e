#include "stereoadapt/pretrain.hpp"

#include <numeric>

#include "stereoadapt/error.hpp"
#include "stereoadapt/random.hpp"
#include "stereoadapt/tensor/optim.hpp"

namespace stereoadapt::adapt {

void PretrainConfig::validate() const {
  if (steps < 0) throw Error(ErrorCode::kInvalidArgument, "pretraining steps must be >= 0");
  if (!(lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "pretraining lr must be > 0");
  if (scale_weights.empty()) throw Error(ErrorCode::kInvalidArgument, "need scale weights");
}

std::vector<double> pretrain(net::StereoNet<float>& net, const std::vector<StereoFrame>& frames,
                             const PretrainConfig& cfg, const PretrainCallback& callback) {
  for (const auto& f : frames) {
    if (!f.gt) throw Error(ErrorCode::kInvalidArgument, "pretraining frame " + f.id + " has no ground truth");
  }
  return pretrain(
      net, frames.size(), [&](std::size_t i) { return frames[i]; }, cfg, callback);
}

std::vector<double> pretrain(net::StereoNet<float>& net, std::size_t count, const FrameAt& frame_at,
                             const PretrainConfig& cfg, const PretrainCallback& callback) {
  cfg.validate();
  if (count == 0) throw Error(ErrorCode::kInvalidArgument, "no pretraining frames");
  if (static_cast<int>(cfg.scale_weights.size()) < net.config().outputs()) {
    throw Error(ErrorCode::kInvalidArgument, "need one scale weight per network output");
  }
  tensor::Adam<float> adam(static_cast<float>(cfg.lr));
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(count);
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(cfg.steps));
  const std::set<tensor::ParamId> all = net.partition.all();
  std::size_t cursor = order.size();
  for (int step = 0; step < cfg.steps; ++step) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.next() % i)]);
      }
      cursor = 0;
    }
    const StereoFrame f = frame_at(order[cursor++]);
    if (!f.gt) throw Error(ErrorCode::kInvalidArgument, "pretraining frame " + f.id + " has no ground truth");
    tensor::Tape<float> tape;
    const net::PyramidVars<float> pyr = net::forward(tape, net, f.left, f.right);
    tensor::Var<float> loss = losses::multiscale_supervised_loss(pyr, *f.gt, cfg.scale_weights);
    const double value = loss.value().item();
    adam.step(net.params, tensor::backward(loss, all));
    history.push_back(value);
    if (callback) callback(step, value);
  }
  return history;
}

}  // namespace stereoadapt::adapt
