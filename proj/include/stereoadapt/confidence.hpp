#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stereoadapt/classic/stereo.hpp"
#include "stereoadapt/types.hpp"

// Confidence estimation and proxy-label distillation from classic matchers.
namespace stereoadapt::confidence {

using classic::CostVolume;
using classic::MatchResult;
using classic::WtaResult;

enum class FilterMode { kLrCheck, kWild, kNone };
enum class Combine { kMin, kProduct, kMean };
enum class Matcher { kSgm, kBm };

struct NamedMap {
  std::string name;
  tensor::Tensor<float> values;  // (1, H, W) in [0, 1]
};

/// Per-pixel confidence maps sharing one extent. `defined` marks pixels where
/// the matcher produced a usable winner; measures read 0 elsewhere.
struct MeasureSet {
  std::vector<NamedMap> maps;
  Bitmap defined;

  const tensor::Tensor<float>& get(const std::string& name) const;
};

/// Fixed squashing scales that bring each raw measure into [0, 1].
struct MeasureScales {
  double msm = 1.0;        // fraction of the metric maximum at which matching score reaches 0
  double pkrn = 0.5;       // ratio excess (c2m + s) / (c1 + s) - 1 giving 1 - 1/e
  double pkrn_bias = 0.5;  // s, in cost units, keeps near-zero c1 from dominating
  double wmn = 0.1;        // winner margin relative to the mean cost
  double mlm = 0.002;      // softmin temperature as a fraction of the metric maximum
  double lrd = 2.0;
  double lrc = 2.0;  // disparity disagreement in pixels at which consistency reaches 0
};

struct FilterConfig {
  FilterMode mode = FilterMode::kLrCheck;
  double lr_threshold = 1.0;
  double epsilon = 0.95;
  Combine combine = Combine::kMin;
  MeasureScales scales;

  void validate() const;
};

/// 1 iff |d_left(y,x) - d_right(y, x - round(d_left(y,x)))| <= tau with the
/// looked-up column in bounds.
Bitmap left_right_check(const DisparityMap& d_left, const DisparityMap& d_right, double tau);

/// Six measures: msm, pkrn, wmn, mlm, lrd, lrc (1 = most confident). The
/// peak-ratio and left-right-difference terms compare c1 against the second
/// local minimum c2m, so the winner's own flanks do not count as rivals.
MeasureSet compute_measures(const MatchResult& match, const MeasureScales& scales = {});

tensor::Tensor<float> combine_measures(const MeasureSet& measures, Combine rule);

struct DistillConfig {
  Matcher matcher = Matcher::kSgm;
  classic::SgmConfig sgm;
  classic::BmConfig bm;
  FilterConfig filter;

  DistillConfig();
};

struct DistillReport {
  double raw_density = 0.0;       // fraction of pixels with a defined raw disparity
  double density = 0.0;           // fraction surviving the filter
  bool has_gt = false;
  double raw_d1 = 0.0;            // percent, over defined pixels that carry gt
  double raw_epe = 0.0;
  double filtered_d1 = 0.0;       // percent, over surviving pixels that carry gt
  double filtered_epe = 0.0;
  std::size_t filtered_gt_px = 0;
  bool empty = false;
};

struct DistillResult {
  ProxyLabels labels;
  DistillReport report;
};

DistillResult distill(const StereoFrame& frame, const DistillConfig& cfg);

/// Labels derived from an already computed match, for callers that reuse it.
DistillResult distill_from_match(const StereoFrame& frame, const MatchResult& match, const FilterConfig& filter);

/// Sparse-disparity file: text header "SPARSE16 W H N\n" then N little-endian
/// records (u16 x, u16 y, f32 disparity).
void write_sparse_labels(const std::string& path, const ProxyLabels& labels);

/// When an extent is expected, a mismatch raises kExtentMismatch and a
/// zero-byte file reads as an empty label set of that extent.
ProxyLabels ingest_sparse_labels(const std::string& path, std::optional<std::pair<int, int>> expected_hw = {});

std::string to_string(FilterMode mode);
std::string to_string(Combine rule);
std::string to_string(Matcher matcher);
FilterMode parse_filter_mode(const std::string& text);
Combine parse_combine(const std::string& text);
Matcher parse_matcher(const std::string& text);

}  // namespace stereoadapt::confidence
