#include <algorithm>
#include <limits>

#include "stereoadapt/classic/stereo.hpp"
#include "stereoadapt/error.hpp"

namespace stereoadapt::classic {

std::vector<Direction> four_paths() { return {{0, 1}, {0, -1}, {1, 0}, {-1, 0}}; }

std::vector<Direction> eight_paths() {
  return {{0, 1}, {0, -1}, {1, 0}, {-1, 0}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
}

void SgmConfig::validate() const {
  if (max_disparity < 0) throw Error(ErrorCode::kInvalidArgument, "max_disparity must be >= 0");
  if (!(p1 >= 0.0f) || !(p2 >= p1)) throw Error(ErrorCode::kInvalidArgument, "need P2 >= P1 >= 0");
  if (paths.empty()) throw Error(ErrorCode::kInvalidArgument, "SGM needs at least one path");
  for (const auto& [dy, dx] : paths) {
    if (dy < -1 || dy > 1 || dx < -1 || dx > 1 || (dy == 0 && dx == 0)) {
      throw Error(ErrorCode::kInvalidArgument, "SGM paths must be unit scanline directions");
    }
  }
  if (census_window < 1 || census_window % 2 == 0 || census_window > 7) {
    throw Error(ErrorCode::kInvalidArgument, "census window must be odd and <= 7");
  }
}

void BmConfig::validate() const {
  if (max_disparity < 0) throw Error(ErrorCode::kInvalidArgument, "max_disparity must be >= 0");
  if (window < 1 || window % 2 == 0) throw Error(ErrorCode::kInvalidArgument, "BM window must be odd");
}

CostVolume sgm_aggregate(const CostVolume& volume, const SgmConfig& cfg) {
  cfg.validate();
  const int h = volume.height, w = volume.width, nd = volume.disparities;
  // Each path term is bounded by C + P2, which bounds the sum as well.
  const float bound = static_cast<float>(cfg.paths.size()) * (volume.max_cost + cfg.p2);
  CostVolume sum(h, w, nd, volume.reference, bound);
  std::vector<float> lr(volume.cost.size());

  for (const auto& [dy, dx] : cfg.paths) {
    // Visit order such that p - r is always finished before p.
    const int y0 = dy >= 0 ? 0 : h - 1, y1 = dy >= 0 ? h : -1, sy = dy >= 0 ? 1 : -1;
    const int x0 = dx >= 0 ? 0 : w - 1, x1 = dx >= 0 ? w : -1, sx = dx >= 0 ? 1 : -1;
    for (int y = y0; y != y1; y += sy) {
      for (int x = x0; x != x1; x += sx) {
        const std::size_t base = (static_cast<std::size_t>(y) * w + x) * nd;
        const float* c = &volume.cost[base];
        float* l = &lr[base];
        const int py = y - dy, px = x - dx;
        if (py < 0 || py >= h || px < 0 || px >= w) {
          std::copy(c, c + nd, l);
          continue;
        }
        const float* prev = &lr[(static_cast<std::size_t>(py) * w + px) * nd];
        const float prev_min = *std::min_element(prev, prev + nd);
        for (int d = 0; d < nd; ++d) {
          float best = prev[d];
          if (d > 0) best = std::min(best, prev[d - 1] + cfg.p1);
          if (d + 1 < nd) best = std::min(best, prev[d + 1] + cfg.p1);
          best = std::min(best, prev_min + cfg.p2);
          l[d] = c[d] + best - prev_min;
        }
      }
    }
    for (std::size_t i = 0; i < lr.size(); ++i) sum.cost[i] += lr[i];
  }
  return sum;
}

MatchResult block_matching(const Image& left, const Image& right, const BmConfig& cfg) {
  cfg.validate();
  MatchResult out;
  out.volume_left = build_cost_volume(left, right, cfg.max_disparity, Metric::kSad, cfg.window, Side::kLeft);
  out.volume_right = build_cost_volume(left, right, cfg.max_disparity, Metric::kSad, cfg.window, Side::kRight);
  out.wta_left = wta(out.volume_left);
  out.wta_right = wta(out.volume_right);
  out.left = cfg.subpixel ? subpixel_refine(out.volume_left, out.wta_left.disparity) : out.wta_left.disparity;
  out.right = cfg.subpixel ? subpixel_refine(out.volume_right, out.wta_right.disparity) : out.wta_right.disparity;
  return out;
}

MatchResult sgm(const Image& left, const Image& right, const SgmConfig& cfg) {
  cfg.validate();
  MatchResult out;
  for (Side side : {Side::kLeft, Side::kRight}) {
    const CostVolume raw =
        build_cost_volume(left, right, cfg.max_disparity, Metric::kCensusHamming, cfg.census_window, side);
    CostVolume agg = sgm_aggregate(raw, cfg);
    WtaResult res = wta(agg);
    DisparityMap disp = cfg.subpixel ? subpixel_refine(agg, res.disparity) : res.disparity;
    if (side == Side::kLeft) {
      out.volume_left = std::move(agg);
      out.wta_left = std::move(res);
      out.left = std::move(disp);
    } else {
      out.volume_right = std::move(agg);
      out.wta_right = std::move(res);
      out.right = std::move(disp);
    }
  }
  return out;
}

}  // namespace stereoadapt::classic
