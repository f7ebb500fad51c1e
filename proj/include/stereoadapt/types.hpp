#pragma once

#include <optional>
#include <string>

#include "stereoadapt/tensor/tensor.hpp"

namespace stereoadapt {

using Image = tensor::Tensor<float>;         // (C, H, W), values in [0, 1]
using DisparityMap = tensor::Tensor<float>;  // (1, H, W), pixels
using Bitmap = tensor::Tensor<float>;        // (1, H, W), 0 or 1

/// Dense or sparse reference disparities.
struct GroundTruth {
  DisparityMap disparity;
  Bitmap valid;
};

/// Sparse supervision: disparities z, per-pixel confidence c and the
/// thresholded validity mask. `defined` marks pixels where the source
/// produced a disparity at all; mask is a subset of defined.
struct ProxyLabels {
  DisparityMap z;
  tensor::Tensor<float> confidence;
  Bitmap defined;
  Bitmap mask;

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (float m : mask.values()) n += m != 0.0f;
    return n;
  }
  double density() const { return mask.empty() ? 0.0 : static_cast<double>(valid_count()) / mask.size(); }
  bool empty() const { return valid_count() == 0; }
};

/// One rectified stereo pair with optional references.
struct StereoFrame {
  Image left;
  Image right;
  std::optional<GroundTruth> gt;
  std::optional<ProxyLabels> proxy;
  std::optional<Bitmap> occlusion;  // 1 where the left pixel is hidden in the right view
  std::string id;
  std::string domain;

  int height() const { return left.height(); }
  int width() const { return left.width(); }
};

inline Bitmap make_bitmap(int h, int w, float fill = 0.0f) { return Bitmap::chw(1, h, w, fill); }

}  // namespace stereoadapt
