#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "stereoadapt/types.hpp"

namespace stereoadapt::harness {

struct MetricsRecord {
  double d1_all = 0.0;  // percent
  double epe = 0.0;     // pixels
  double photo_err = 0.0;
  std::size_t valid_px = 0;
  bool defined = false;  // false when no gt pixel was valid
};

/// D1-all counts a pixel as an outlier when its absolute error exceeds 3 px
/// and its relative error exceeds 5%. Both metrics run over gt-valid pixels;
/// `extra_mask`, when given, further restricts the evaluated set.
MetricsRecord metrics(const DisparityMap& pred, const GroundTruth& gt, const Bitmap* extra_mask = nullptr);

bool is_outlier(double error, double reference);

/// Photometric reconstruction error of the frame under `pred`.
double photometric_error_metric(const StereoFrame& frame, const DisparityMap& pred);

struct MetricsSummary {
  double d1_all = 0.0;
  double epe = 0.0;
  double photo_err = 0.0;
  std::size_t frames = 0;     // frames with defined metrics
  std::size_t undefined = 0;  // excluded from the averages
};

/// Averages over defined records; photo_err averages over every record.
MetricsSummary summarize(const std::vector<MetricsRecord>& records);

}  // namespace stereoadapt::harness
