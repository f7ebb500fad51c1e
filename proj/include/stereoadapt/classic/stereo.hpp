#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "stereoadapt/types.hpp"

// Traditional matchers used as proxy-label sources: census/SAD costs,
// winner-takes-all, semi-global aggregation and block matching.
namespace stereoadapt::classic {

enum class Side { kLeft, kRight };
enum class Metric { kCensusHamming, kSad };

/// Matching costs laid out [y][x][d]. For a left-referenced volume cost(y,x,d)
/// compares left(y,x) with right(y,x-d); for a right-referenced one,
/// right(y,x) with left(y,x+d). Unmatchable candidates carry max_cost.
struct CostVolume {
  int height = 0;
  int width = 0;
  int disparities = 0;
  Side reference = Side::kLeft;
  float max_cost = 0.0f;
  std::vector<float> cost;

  CostVolume() = default;
  CostVolume(int h, int w, int d, Side side, float max_c)
      : height(h), width(w), disparities(d), reference(side), max_cost(max_c),
        cost(static_cast<std::size_t>(h) * w * d, 0.0f) {}

  float& at(int y, int x, int d) { return cost[(static_cast<std::size_t>(y) * width + x) * disparities + d]; }
  float at(int y, int x, int d) const { return cost[(static_cast<std::size_t>(y) * width + x) * disparities + d]; }
  const float* curve(int y, int x) const { return &cost[(static_cast<std::size_t>(y) * width + x) * disparities]; }
  float* curve(int y, int x) { return &cost[(static_cast<std::size_t>(y) * width + x) * disparities]; }
};

/// Per-pixel census descriptors; bit i is set when the i-th neighbour
/// (row-major over the window, centre skipped) is brighter than the centre.
struct CensusMap {
  int height = 0;
  int width = 0;
  int bits = 0;
  std::vector<std::uint64_t> descriptors;

  std::uint64_t at(int y, int x) const { return descriptors[static_cast<std::size_t>(y) * width + x]; }
};

/// Channel mean, (C, H, W) -> (1, H, W).
Image to_gray(const Image& image);

CensusMap census_transform(const Image& image, int window);

/// `window` is the census window for kCensusHamming and the SAD block size
/// for kSad.
CostVolume build_cost_volume(const Image& left, const Image& right, int max_disparity, Metric metric, int window,
                             Side reference = Side::kLeft);

/// Sorted-cost summary of each pixel's curve: best c1, second best c2 and the
/// best other local minimum c2m (c1 <= c2 <= c2m).
struct WtaResult {
  DisparityMap disparity;
  std::vector<float> c1;
  std::vector<float> c2;
  std::vector<float> c2m;
};

/// argmin over d, ties toward the smaller disparity.
WtaResult wta(const CostVolume& volume);

using Direction = std::pair<int, int>;  // (dy, dx) step along the path

std::vector<Direction> four_paths();
std::vector<Direction> eight_paths();

struct SgmConfig {
  int max_disparity = 64;
  float p1 = 7.0f;
  float p2 = 84.0f;
  std::vector<Direction> paths = four_paths();
  int census_window = 5;
  bool subpixel = false;

  void validate() const;
};

/// Sum over paths r of L_r(p,d) = C(p,d) + min(L_r(p-r,d), L_r(p-r,d+-1) + P1,
/// min_k L_r(p-r,k) + P2) - min_k L_r(p-r,k), with L_r = C at path starts.
CostVolume sgm_aggregate(const CostVolume& volume, const SgmConfig& cfg);

struct BmConfig {
  int max_disparity = 64;
  int window = 9;
  bool subpixel = false;

  void validate() const;
};

/// Everything a matcher produced for both reference sides.
struct MatchResult {
  DisparityMap left;
  DisparityMap right;
  CostVolume volume_left;
  CostVolume volume_right;
  WtaResult wta_left;
  WtaResult wta_right;
};

MatchResult block_matching(const Image& left, const Image& right, const BmConfig& cfg);
MatchResult sgm(const Image& left, const Image& right, const SgmConfig& cfg);

/// Three-point parabola refinement around each integer winner.
DisparityMap subpixel_refine(const CostVolume& volume, const DisparityMap& integer_disparity);

}  // namespace stereoadapt::classic
