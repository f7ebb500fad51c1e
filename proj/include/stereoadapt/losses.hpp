#pragma once

#include <vector>

#include "stereoadapt/net/stereo_net.hpp"
#include "stereoadapt/types.hpp"

namespace stereoadapt::losses {

using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

struct PhotometricConfig {
  double alpha = 0.85;
  int ssim_window = 3;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;

  void validate() const;
};

struct LossValue {
  double value = 0.0;
  std::vector<double> per_scale;
  std::size_t valid_pixels = 0;
  bool empty_mask = false;  // proxy supervision had nothing to offer; skip the update
};

/// Reference pretraining weights, finest to coarsest supervised scale.
inline const std::vector<double> kPretrainScaleWeights = {0.005, 0.01, 0.02, 0.08, 0.32};

// Differentiable forms. Images enter as tape constants.

/// Per-pixel SSIM with box-filtered local statistics.
template <typename T>
Var<T> ssim(Var<T> a, Var<T> b, const PhotometricConfig& cfg);

/// alpha * (1 - SSIM(l, r~)) / 2 + (1 - alpha) * |l - r~|, averaged over
/// channels then pixels, where r~ is `right` warped by `disparity`.
template <typename T>
Var<T> photometric_loss(Var<T> left, Var<T> right, Var<T> disparity, const PhotometricConfig& cfg);

/// Mean |pred - z| over the label mask; 0 for an empty mask.
template <typename T>
Var<T> proxy_loss(Var<T> pred, const ProxyLabels& labels);

/// Weighted masked L1 between each pyramid scale and the reference
/// average-pooled to that scale (values divided by the factor).
template <typename T>
Var<T> multiscale_supervised_loss(const net::PyramidVars<T>& pyramid, const GroundTruth& gt,
                                  const std::vector<double>& weights);

// Value-level conveniences (f32, private tape).

Tensor<float> ssim_map(const Image& a, const Image& b, const PhotometricConfig& cfg = {});
LossValue photometric_loss(const Image& left, const Image& right, const DisparityMap& disparity,
                           const PhotometricConfig& cfg = {});
LossValue proxy_loss(const DisparityMap& pred, const ProxyLabels& labels);

/// eta(p) = 1 iff c(p) >= epsilon, restricted to defined pixels.
Bitmap confidence_mask(const Tensor<float>& confidence, const Bitmap& defined, double epsilon);
double mask_density(const Bitmap& mask);

/// Block-average of valid reference pixels, divided by `factor`; a block is
/// valid when any of its pixels is.
GroundTruth downsample_ground_truth(const GroundTruth& gt, int factor);

}  // namespace stereoadapt::losses
