#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "stereoadapt/classic/stereo.hpp"
#include "stereoadapt/error.hpp"

namespace stereoadapt::classic {
namespace {

void require_pair(const Image& left, const Image& right, int max_disparity) {
  tensor::require_rank(left.shape(), 3, "stereo left");
  tensor::require_same(left.shape(), right.shape(), "stereo pair");
  if (left.height() < 1 || left.width() < 1) throw Error(ErrorCode::kDegenerateInput, "empty stereo pair");
  if (max_disparity < 0) throw Error(ErrorCode::kInvalidArgument, "max_disparity must be >= 0");
}

// Box sum of |a - b| over a window for every pixel, replicate border.
std::vector<float> sad_block(const Image& a, const Image& b, int shift, Side side, int window,
                             std::vector<unsigned char>& in_range) {
  const int h = a.height(), w = a.width(), r = window / 2;
  std::vector<float> diff(static_cast<std::size_t>(h) * w, 0.0f);
  in_range.assign(static_cast<std::size_t>(w), 0);
  for (int x = 0; x < w; ++x) {
    const int xo = side == Side::kLeft ? x - shift : x + shift;
    in_range[x] = xo >= 0 && xo < w;
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int xo = side == Side::kLeft ? x - shift : x + shift;
      xo = std::clamp(xo, 0, w - 1);
      diff[static_cast<std::size_t>(y) * w + x] = std::abs(a.at(0, y, x) - b.at(0, y, xo));
    }
  }
  // Separable box sum with clamped indices; double accumulators keep it exact enough.
  std::vector<double> rows(diff.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += diff[static_cast<std::size_t>(y) * w + std::clamp(x + k, 0, w - 1)];
      rows[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  std::vector<float> out(diff.size(), 0.0f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += rows[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(s);
    }
  }
  return out;
}

}  // namespace

Image to_gray(const Image& image) {
  tensor::require_rank(image.shape(), 3, "to_gray");
  const int c = image.channels(), h = image.height(), w = image.width();
  if (c == 1) return image;
  Image out = Image::chw(1, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float s = 0.0f;
      for (int k = 0; k < c; ++k) s += image.at(k, y, x);
      out.at(0, y, x) = s / static_cast<float>(c);
    }
  }
  return out;
}

CensusMap census_transform(const Image& image, int window) {
  if (window < 1 || window % 2 == 0 || window > 7) {
    throw Error(ErrorCode::kInvalidArgument, "census window must be odd and <= 7");
  }
  const Image gray = to_gray(image);
  const int h = gray.height(), w = gray.width(), r = window / 2;
  CensusMap out{h, w, window * window - 1, std::vector<std::uint64_t>(static_cast<std::size_t>(h) * w, 0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float centre = gray.at(0, y, x);
      std::uint64_t bits = 0;
      int bit = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const float v = gray.at(0, std::clamp(y + dy, 0, h - 1), std::clamp(x + dx, 0, w - 1));
          if (v > centre) bits |= std::uint64_t{1} << bit;
          ++bit;
        }
      }
      out.descriptors[static_cast<std::size_t>(y) * w + x] = bits;
    }
  }
  return out;
}

CostVolume build_cost_volume(const Image& left, const Image& right, int max_disparity, Metric metric, int window,
                             Side reference) {
  require_pair(left, right, max_disparity);
  const int h = left.height(), w = left.width(), nd = max_disparity + 1;
  const Image& ref = reference == Side::kLeft ? left : right;
  const Image& other = reference == Side::kLeft ? right : left;

  if (metric == Metric::kCensusHamming) {
    const CensusMap cr = census_transform(ref, window);
    const CensusMap co = census_transform(other, window);
    CostVolume vol(h, w, nd, reference, static_cast<float>(cr.bits));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float* c = vol.curve(y, x);
        for (int d = 0; d < nd; ++d) {
          const int xo = reference == Side::kLeft ? x - d : x + d;
          c[d] = (xo < 0 || xo >= w) ? vol.max_cost
                                     : static_cast<float>(std::popcount(cr.at(y, x) ^ co.at(y, xo)));
        }
      }
    }
    return vol;
  }

  if (window < 1 || window % 2 == 0) throw Error(ErrorCode::kInvalidArgument, "SAD window must be odd");
  const Image gr = to_gray(ref), go = to_gray(other);
  // Images live in [0, 1], so a window can differ by at most window^2.
  CostVolume vol(h, w, nd, reference, static_cast<float>(window * window));
  std::vector<unsigned char> in_range;
  for (int d = 0; d < nd; ++d) {
    const std::vector<float> sums = sad_block(gr, go, d, reference, window, in_range);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        vol.at(y, x, d) = in_range[x] ? std::min(sums[static_cast<std::size_t>(y) * w + x], vol.max_cost)
                                      : vol.max_cost;
      }
    }
  }
  return vol;
}

WtaResult wta(const CostVolume& volume) {
  const int h = volume.height, w = volume.width, nd = volume.disparities;
  WtaResult out;
  out.disparity = DisparityMap::chw(1, h, w);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  out.c1.resize(n);
  out.c2.resize(n);
  out.c2m.resize(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float* c = volume.curve(y, x);
      int best = 0;
      for (int d = 1; d < nd; ++d) {
        if (c[d] < c[best]) best = d;
      }
      const float c1 = c[best];
      float c2 = std::numeric_limits<float>::infinity();
      float c2m = std::numeric_limits<float>::infinity();
      float cmax = c1;
      for (int d = 0; d < nd; ++d) {
        cmax = std::max(cmax, c[d]);
        if (d == best) continue;
        c2 = std::min(c2, c[d]);
        const bool local_min = (d == 0 || c[d] <= c[d - 1]) && (d == nd - 1 || c[d] <= c[d + 1]);
        if (local_min) c2m = std::min(c2m, c[d]);
      }
      if (nd == 1) c2 = c1;
      if (!std::isfinite(c2m)) c2m = cmax;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      out.disparity.at(0, y, x) = static_cast<float>(best);
      out.c1[i] = c1;
      out.c2[i] = c2;
      out.c2m[i] = c2m;
    }
  }
  return out;
}

DisparityMap subpixel_refine(const CostVolume& volume, const DisparityMap& integer_disparity) {
  DisparityMap out = integer_disparity;
  const int nd = volume.disparities;
  for (int y = 0; y < volume.height; ++y) {
    for (int x = 0; x < volume.width; ++x) {
      const int d = static_cast<int>(integer_disparity.at(0, y, x));
      if (d <= 0 || d >= nd - 1) continue;
      const float* c = volume.curve(y, x);
      const float denom = c[d - 1] - 2.0f * c[d] + c[d + 1];
      if (denom <= 0.0f) continue;
      const float offset = std::clamp((c[d - 1] - c[d + 1]) / (2.0f * denom), -0.5f, 0.5f);
      out.at(0, y, x) = static_cast<float>(d) + offset;
    }
  }
  return out;
}

}  // namespace stereoadapt::classic
