#include "stereoadapt/harness/metrics.hpp"

#include <cmath>

#include "stereoadapt/error.hpp"
#include "stereoadapt/losses.hpp"

namespace stereoadapt::harness {

bool is_outlier(double error, double reference) {
  return error > 3.0 && error > 0.05 * std::abs(reference);
}

MetricsRecord metrics(const DisparityMap& pred, const GroundTruth& gt, const Bitmap* extra_mask) {
  tensor::require_same(pred.shape(), gt.disparity.shape(), "metrics prediction");
  tensor::require_same(pred.shape(), gt.valid.shape(), "metrics validity");
  if (extra_mask) tensor::require_same(pred.shape(), extra_mask->shape(), "metrics mask");
  MetricsRecord rec;
  double abs_sum = 0.0;
  std::size_t outliers = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt.valid[i] == 0.0f) continue;
    if (extra_mask && (*extra_mask)[i] == 0.0f) continue;
    const double err = std::abs(static_cast<double>(pred[i]) - gt.disparity[i]);
    abs_sum += err;
    outliers += is_outlier(err, gt.disparity[i]);
    ++rec.valid_px;
  }
  if (rec.valid_px > 0) {
    rec.defined = true;
    rec.epe = abs_sum / static_cast<double>(rec.valid_px);
    rec.d1_all = 100.0 * static_cast<double>(outliers) / static_cast<double>(rec.valid_px);
  }
  return rec;
}

double photometric_error_metric(const StereoFrame& frame, const DisparityMap& pred) {
  return losses::photometric_loss(frame.left, frame.right, pred).value;
}

MetricsSummary summarize(const std::vector<MetricsRecord>& records) {
  MetricsSummary s;
  for (const auto& r : records) {
    s.photo_err += r.photo_err;
    if (!r.defined) {
      ++s.undefined;
      continue;
    }
    s.d1_all += r.d1_all;
    s.epe += r.epe;
    ++s.frames;
  }
  if (s.frames) {
    s.d1_all /= static_cast<double>(s.frames);
    s.epe /= static_cast<double>(s.frames);
  }
  if (!records.empty()) s.photo_err /= static_cast<double>(records.size());
  return s;
}

}  // namespace stereoadapt::harness
