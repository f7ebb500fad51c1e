#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "stereoadapt/losses.hpp"
#include "stereoadapt/net/stereo_net.hpp"

namespace stereoadapt::adapt {

/// Offline supervised training with the weighted multi-scale L1 loss.
struct PretrainConfig {
  int steps = 2000;
  double lr = 1e-3;  // Adam
  std::uint64_t seed = 0;
  std::vector<double> scale_weights = losses::kPretrainScaleWeights;

  void validate() const;
};

/// Called after every step with (step index, loss).
using PretrainCallback = std::function<void(int, double)>;

/// One frame per step, visiting `frames` in seeded shuffled epochs. Frames
/// need dense or sparse gt. Returns the per-step losses.
std::vector<double> pretrain(net::StereoNet<float>& net, const std::vector<StereoFrame>& frames,
                             const PretrainConfig& cfg, const PretrainCallback& callback = {});

/// Same schedule over `count` frames produced on demand, for training sets
/// too large to hold in memory.
using FrameAt = std::function<StereoFrame(std::size_t)>;
std::vector<double> pretrain(net::StereoNet<float>& net, std::size_t count, const FrameAt& frame_at,
                             const PretrainConfig& cfg, const PretrainCallback& callback = {});

}  // namespace stereoadapt::adapt
