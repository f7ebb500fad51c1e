#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <limits>

#include "stereoadapt/classic/stereo.hpp"
#include "stereoadapt/harness/metrics.hpp"
#include "stereoadapt/harness/synthetic.hpp"
#include "support.hpp"

namespace stereoadapt {
namespace {

using namespace testing;
using classic::CostVolume;
using classic::Metric;
using classic::Side;
using classic::SgmConfig;

// left(x) = T(x), right(x) = T(x + k): every left pixel matches at disparity k.
std::pair<Image, Image> shifted_pair(int h, int w, int k, Rng& rng) {
  const auto canvas = random_tensor<float>(Shape{1, h, w + k}, rng, 0.0, 1.0);
  Image left = Image::chw(1, h, w), right = Image::chw(1, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      left.at(0, y, x) = canvas.at(0, y, x);
      right.at(0, y, x) = canvas.at(0, y, x + k);
    }
  }
  return {left, right};
}

CostVolume random_volume(int h, int w, int d, Rng& rng, float hi = 10.0f) {
  CostVolume v(h, w, d, Side::kLeft, hi);
  for (auto& c : v.cost) c = static_cast<float>(rng.uniform_int(0, static_cast<int>(hi)));
  return v;
}

SgmConfig single_path(float p1, float p2) {
  SgmConfig cfg;
  cfg.p1 = p1;
  cfg.p2 = p2;
  cfg.paths = {{0, 1}};
  return cfg;
}

TEST(Census, ConstantImageHasZeroDescriptors) {
  const auto c = classic::census_transform(Image::chw(1, 6, 7, 0.4f), 5);
  EXPECT_EQ(c.bits, 24);
  for (auto d : c.descriptors) EXPECT_EQ(d, 0u);
}

TEST(Census, BrightCentreSetsTheBitPointingAtIt) {
  Image img = Image::chw(1, 7, 7);
  img.at(0, 3, 3) = 1.0f;
  const auto c = classic::census_transform(img, 3);
  EXPECT_EQ(c.bits, 8);
  // Neighbour offset (dy, dx) sees the centre at (-dy, -dx); bit index is row-major, centre skipped.
  auto bit_of = [](int dy, int dx) {
    const int idx = (dy + 1) * 3 + (dx + 1);
    return idx > 4 ? idx - 1 : idx;
  };
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dy == 0 && dx == 0) continue;
      EXPECT_EQ(c.at(3 + dy, 3 + dx), std::uint64_t{1} << bit_of(-dy, -dx));
    }
  }
  EXPECT_EQ(c.at(3, 3), 0u);
  EXPECT_EQ(c.at(0, 0), 0u);
}

TEST(Census, RejectsLargeWindow) {
  EXPECT_EQ(error_code_of([] { classic::census_transform(Image::chw(1, 4, 4), 9); }), ErrorCode::kInvalidArgument);
}

TEST(CostVolume, IdenticalImagesHaveZeroCostAtZeroDisparity) {
  Rng rng(1);
  const auto img = random_tensor<float>(Shape{1, 8, 12}, rng, 0.0, 1.0);
  for (Metric m : {Metric::kCensusHamming, Metric::kSad}) {
    const auto v = classic::build_cost_volume(img, img, 4, m, 5);
    EXPECT_EQ(v.disparities, 5);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 12; ++x) EXPECT_EQ(v.at(y, x, 0), 0.0f);
    }
  }
}

TEST(CostVolume, ShiftedPairHasZeroCostAtShift) {
  Rng rng(2);
  const int k = 3;
  auto [l, r] = shifted_pair(10, 24, k, rng);
  const auto census = classic::build_cost_volume(l, r, 6, Metric::kCensusHamming, 5);
  const auto sad = classic::build_cost_volume(l, r, 6, Metric::kSad, 5);
  for (int y = 2; y < 8; ++y) {
    for (int x = k + 2; x < 22 - k; ++x) {
      EXPECT_EQ(census.at(y, x, k), 0.0f);
      EXPECT_NEAR(sad.at(y, x, k), 0.0f, 1e-6f);
    }
  }
}

TEST(CostVolume, MatchesPerPixelOracle) {
  Rng rng(3);
  const auto l = random_tensor<float>(Shape{1, 7, 13}, rng, 0.0, 1.0);
  const auto r = random_tensor<float>(Shape{1, 7, 13}, rng, 0.0, 1.0);
  const int win = 3, rad = 1, nd = 5;
  auto px = [](const Image& img, int y, int x) {
    return img.at(0, std::clamp(y, 0, img.height() - 1), std::clamp(x, 0, img.width() - 1));
  };
  for (Side side : {Side::kLeft, Side::kRight}) {
    const auto& ref = side == Side::kLeft ? l : r;
    const auto& oth = side == Side::kLeft ? r : l;
    const auto sad = classic::build_cost_volume(l, r, nd - 1, Metric::kSad, win, side);
    const auto cen = classic::build_cost_volume(l, r, nd - 1, Metric::kCensusHamming, win, side);
    for (int y = 0; y < 7; ++y) {
      for (int x = 0; x < 13; ++x) {
        for (int d = 0; d < nd; ++d) {
          const int xo = side == Side::kLeft ? x - d : x + d;
          if (xo < 0 || xo >= 13) {
            EXPECT_EQ(sad.at(y, x, d), sad.max_cost);
            EXPECT_EQ(cen.at(y, x, d), cen.max_cost);
            continue;
          }
          double s = 0.0;
          int ham = 0;
          for (int dy = -rad; dy <= rad; ++dy) {
            for (int dx = -rad; dx <= rad; ++dx) {
              // Border-replicated reference window, each pixel paired with its shifted partner.
              const int cx = std::clamp(x + dx, 0, 12);
              const int ox = side == Side::kLeft ? cx - d : cx + d;
              s += std::abs(px(ref, y + dy, cx) - px(oth, y + dy, ox));
              if (dy || dx) {
                const bool a = px(ref, y + dy, x + dx) > px(ref, y, x);
                const bool b = px(oth, y + dy, xo + dx) > px(oth, y, xo);
                ham += a != b;
              }
            }
          }
          EXPECT_NEAR(sad.at(y, x, d), s, 1e-5);
          EXPECT_EQ(cen.at(y, x, d), static_cast<float>(ham));
        }
      }
    }
  }
}

TEST(Wta, UniqueMinimaAndTies) {
  CostVolume v(1, 3, 4, Side::kLeft, 9.0f);
  const float costs[] = {5, 1, 3, 4, /**/ 2, 2, 2, 2, /**/ 9, 8, 7, 0};
  std::copy(std::begin(costs), std::end(costs), v.cost.begin());
  const auto res = classic::wta(v);
  EXPECT_EQ(res.disparity[0], 1.0f);
  EXPECT_EQ(res.disparity[1], 0.0f);
  EXPECT_EQ(res.disparity[2], 3.0f);
  EXPECT_EQ(res.c1[0], 1.0f);
  EXPECT_EQ(res.c2[0], 3.0f);
  EXPECT_EQ(res.c2m[0], 5.0f);  // d = 0 is the only other local minimum
}

TEST(Wta, SummaryOrderingHolds) {
  Rng rng(4);
  const auto v = random_volume(9, 9, 7, rng);
  const auto res = classic::wta(v);
  for (std::size_t i = 0; i < res.c1.size(); ++i) {
    EXPECT_LE(res.c1[i], res.c2[i]);
    EXPECT_LE(res.c2[i], res.c2m[i]);
  }
}

TEST(SgmAggregate, HandUnrolledScanline) {
  CostVolume v(1, 3, 2, Side::kLeft, 1.0f);
  const float c[] = {1, 0, 0, 1, 1, 0};
  std::copy(std::begin(c), std::end(c), v.cost.begin());
  const auto agg = classic::sgm_aggregate(v, single_path(1.0f, 2.0f));
  const float expected[] = {1, 0, 1, 1, 1, 0};
  for (int i = 0; i < 6; ++i) EXPECT_EQ(agg.cost[static_cast<std::size_t>(i)], expected[i]);
  const auto res = classic::wta(agg);
  EXPECT_EQ(res.disparity[0], 1.0f);
  EXPECT_EQ(res.disparity[1], 0.0f);
  EXPECT_EQ(res.disparity[2], 1.0f);
}

double penalty(int a, int b, double p1, double p2) {
  const int j = std::abs(a - b);
  return j == 0 ? 0.0 : j == 1 ? p1 : p2;
}

// Minimum scanline energy of all disparity sequences over columns [0, x] that
// end at each d, by enumerating every sequence.
std::vector<double> enumerate_energies(const CostVolume& v, int y, int x, double p1, double p2) {
  const int nd = v.disparities;
  std::vector<double> best(static_cast<std::size_t>(nd), std::numeric_limits<double>::infinity());
  std::vector<int> seq(static_cast<std::size_t>(x + 1), 0);
  while (true) {
    double e = 0.0;
    for (int i = 0; i <= x; ++i) {
      e += v.at(y, i, seq[static_cast<std::size_t>(i)]);
      if (i) e += penalty(seq[static_cast<std::size_t>(i)], seq[static_cast<std::size_t>(i - 1)], p1, p2);
    }
    auto& b = best[static_cast<std::size_t>(seq.back())];
    b = std::min(b, e);
    int i = 0;
    while (i <= x && ++seq[static_cast<std::size_t>(i)] == nd) seq[static_cast<std::size_t>(i++)] = 0;
    if (i > x) break;
  }
  return best;
}

// Unnormalized reference recurrence, O(W D^2) per row.
std::vector<std::vector<double>> dp_energies(const CostVolume& v, int y, double p1, double p2) {
  const int nd = v.disparities;
  std::vector<std::vector<double>> e(static_cast<std::size_t>(v.width), std::vector<double>(nd));
  for (int d = 0; d < nd; ++d) e[0][static_cast<std::size_t>(d)] = v.at(y, 0, d);
  for (int x = 1; x < v.width; ++x) {
    for (int d = 0; d < nd; ++d) {
      double m = std::numeric_limits<double>::infinity();
      for (int k = 0; k < nd; ++k) m = std::min(m, e[static_cast<std::size_t>(x - 1)][static_cast<std::size_t>(k)] + penalty(d, k, p1, p2));
      e[static_cast<std::size_t>(x)][static_cast<std::size_t>(d)] = v.at(y, x, d) + m;
    }
  }
  return e;
}

// Aggregated costs and energies differ by a per-pixel constant (the subtracted minima).
void expect_equal_up_to_offset(const float* agg, const std::vector<double>& energy) {
  const double a0 = *std::min_element(agg, agg + energy.size());
  const double e0 = *std::min_element(energy.begin(), energy.end());
  for (std::size_t d = 0; d < energy.size(); ++d) EXPECT_NEAR(agg[d] - a0, energy[d] - e0, 1e-3);
}

TEST(SgmAggregate, SinglePathMatchesExhaustiveEnumeration) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = rng.uniform_int(1, 6), w = rng.uniform_int(1, 6), nd = rng.uniform_int(1, 4);
    const auto v = random_volume(h, w, nd, rng);
    const float p1 = static_cast<float>(rng.uniform_int(0, 4));
    const float p2 = p1 + static_cast<float>(rng.uniform_int(0, 8));
    const auto agg = classic::sgm_aggregate(v, single_path(p1, p2));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) expect_equal_up_to_offset(agg.curve(y, x), enumerate_energies(v, y, x, p1, p2));
    }
  }
}

TEST(SgmAggregate, SinglePathMatchesReferenceRecurrence) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8), nd = rng.uniform_int(1, 8);
    const auto v = random_volume(h, w, nd, rng, 24.0f);
    const float p1 = static_cast<float>(rng.uniform_int(0, 7));
    const float p2 = p1 + static_cast<float>(rng.uniform_int(0, 30));
    const auto agg = classic::sgm_aggregate(v, single_path(p1, p2));
    for (int y = 0; y < h; ++y) {
      const auto e = dp_energies(v, y, p1, p2);
      for (int x = 0; x < w; ++x) expect_equal_up_to_offset(agg.curve(y, x), e[static_cast<std::size_t>(x)]);
    }
  }
}

TEST(SgmAggregate, ZeroPenaltiesAreWtaEquivalent) {
  Rng rng(7);
  const auto v = random_volume(10, 12, 6, rng);
  SgmConfig cfg;
  cfg.p1 = cfg.p2 = 0.0f;
  const auto agg = classic::sgm_aggregate(v, cfg);
  for (std::size_t i = 0; i < v.cost.size(); ++i) EXPECT_EQ(agg.cost[i], 4.0f * v.cost[i]);
  EXPECT_EQ(classic::wta(agg).disparity, classic::wta(v).disparity);
}

TEST(SgmAggregate, PathCostsStayBounded) {
  Rng rng(8);
  const auto v = random_volume(12, 12, 8, rng, 24.0f);
  for (const auto& dir : classic::eight_paths()) {
    SgmConfig cfg;
    cfg.paths = {dir};
    const auto agg = classic::sgm_aggregate(v, cfg);
    for (std::size_t i = 0; i < v.cost.size(); ++i) EXPECT_LE(agg.cost[i], v.cost[i] + cfg.p2);
  }
}

TEST(SgmConfig, RejectsInvalidPenalties) {
  SgmConfig cfg;
  cfg.p1 = 10.0f;
  cfg.p2 = 5.0f;
  EXPECT_EQ(error_code_of([&] { cfg.validate(); }), ErrorCode::kInvalidArgument);
  cfg = {};
  cfg.paths = {{0, 2}};
  EXPECT_EQ(error_code_of([&] { cfg.validate(); }), ErrorCode::kInvalidArgument);
}

TEST(BlockMatching, TexturedPlaneRecoversShift) {
  Rng rng(9);
  const int k = 5;
  auto [l, r] = shifted_pair(24, 64, k, rng);
  classic::BmConfig cfg;
  cfg.max_disparity = 12;
  const auto m = classic::block_matching(l, r, cfg);
  for (int y = 4; y < 20; ++y) {
    for (int x = k + 4; x < 60; ++x) EXPECT_EQ(m.left.at(0, y, x), static_cast<float>(k));
  }
  for (int y = 4; y < 20; ++y) {
    for (int x = 4; x < 60 - k - 4; ++x) EXPECT_EQ(m.right.at(0, y, x), static_cast<float>(k));
  }
}

TEST(BlockMatching, TexturelessImageTiesToZero) {
  classic::BmConfig cfg;
  cfg.max_disparity = 8;
  const auto img = Image::chw(1, 16, 32, 0.5f);
  const auto m = classic::block_matching(img, img, cfg);
  for (float v : m.left.values()) EXPECT_EQ(v, 0.0f);
}

TEST(BlockMatching, SubpixelOffGivesIntegers) {
  Rng rng(10);
  const auto l = random_tensor<float>(Shape{1, 12, 24}, rng, 0.0, 1.0);
  const auto r = random_tensor<float>(Shape{1, 12, 24}, rng, 0.0, 1.0);
  classic::BmConfig cfg;
  cfg.max_disparity = 6;
  const auto m = classic::block_matching(l, r, cfg);
  for (float v : m.left.values()) EXPECT_EQ(v, std::round(v));
  cfg.subpixel = true;
  const auto s = classic::block_matching(l, r, cfg);
  for (std::size_t i = 0; i < s.left.size(); ++i) EXPECT_LE(std::abs(s.left[i] - m.left[i]), 0.5f);
}

TEST(Sgm, IdenticalViewsGiveZero) {
  Rng rng(11);
  const auto img = random_tensor<float>(Shape{1, 16, 32}, rng, 0.0, 1.0);
  SgmConfig cfg;
  cfg.max_disparity = 8;
  const auto m = classic::sgm(img, img, cfg);
  for (int y = 2; y < 14; ++y) {
    for (int x = 2; x < 30; ++x) EXPECT_EQ(m.left.at(0, y, x), 0.0f);
  }
}

TEST(Sgm, ShiftedTextureWithinHalfPixel) {
  Rng rng(12);
  const int k = 6;
  auto [l, r] = shifted_pair(24, 64, k, rng);
  SgmConfig cfg;
  cfg.max_disparity = 16;
  cfg.subpixel = true;
  const auto m = classic::sgm(l, r, cfg);
  for (int y = 2; y < 22; ++y) {
    for (int x = k + 2; x < 62; ++x) EXPECT_NEAR(m.left.at(0, y, x), k, 0.5);
  }
  for (float v : m.left.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 16.0f);
  }
}

TEST(Sgm, DeterministicAndPure) {
  Rng rng(13);
  auto [l, r] = shifted_pair(16, 32, 2, rng);
  SgmConfig cfg;
  cfg.max_disparity = 6;
  const auto a = classic::sgm(l, r, cfg);
  const auto b = classic::sgm(l, r, cfg);
  EXPECT_EQ(a.left, b.left);
  EXPECT_EQ(a.right, b.right);
  EXPECT_EQ(a.volume_left.cost, b.volume_left.cost);
}

TEST(Sgm, AccurateOnSyntheticScenes) {
  harness::SyntheticSpec spec;
  spec.height = 128;
  spec.width = 256;
  spec.max_disparity = 32;
  spec.segments[0].frames = 3;
  SgmConfig cfg;
  cfg.max_disparity = 32;
  for (int i = 0; i < 3; ++i) {
    const auto frame = harness::render_synthetic_frame(spec, 77, i);
    const auto m = classic::sgm(frame.left, frame.right, cfg);
    const auto rec = harness::metrics(m.left, *frame.gt);
    EXPECT_LT(rec.d1_all, 15.0) << "frame " << i;
  }
}

}  // namespace
}  // namespace stereoadapt
