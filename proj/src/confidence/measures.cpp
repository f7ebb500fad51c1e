#include <algorithm>
#include <cmath>

#include "stereoadapt/confidence.hpp"
#include "stereoadapt/error.hpp"

namespace stereoadapt::confidence {
namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Maps a non-negative "bigger is better" quantity into [0, 1).
double saturate(double v, double scale) { return v <= 0.0 ? 0.0 : 1.0 - std::exp(-v / scale); }

}  // namespace

const tensor::Tensor<float>& MeasureSet::get(const std::string& name) const {
  for (const auto& m : maps) {
    if (m.name == name) return m.values;
  }
  throw Error(ErrorCode::kInvalidArgument, "no confidence measure named " + name);
}

void FilterConfig::validate() const {
  if (!(lr_threshold >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "lr threshold must be >= 0");
  if (!(epsilon >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "epsilon must be >= 0");
}

Bitmap left_right_check(const DisparityMap& d_left, const DisparityMap& d_right, double tau) {
  tensor::require_same(d_left.shape(), d_right.shape(), "left_right_check");
  const int h = d_left.height(), w = d_left.width();
  Bitmap out = make_bitmap(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float dl = d_left.at(0, y, x);
      const long xr = x - std::lround(dl);
      if (xr < 0 || xr >= w) continue;
      if (std::abs(static_cast<double>(dl) - d_right.at(0, y, static_cast<int>(xr))) <= tau) out.at(0, y, x) = 1.0f;
    }
  }
  return out;
}

MeasureSet compute_measures(const MatchResult& match, const MeasureScales& s) {
  const CostVolume& vol = match.volume_left;
  const WtaResult& wl = match.wta_left;
  const WtaResult& wr = match.wta_right;
  const int h = vol.height, w = vol.width, nd = vol.disparities;
  if (match.volume_right.height != h || match.volume_right.width != w) {
    throw Error(ErrorCode::kShapeMismatch, "left and right match results differ in extent");
  }
  const char* names[] = {"msm", "pkrn", "wmn", "mlm", "lrd", "lrc"};
  MeasureSet set;
  for (const char* n : names) set.maps.push_back({n, tensor::Tensor<float>::chw(1, h, w)});
  set.defined = make_bitmap(h, w);
  const double max_cost = vol.max_cost > 0.0f ? vol.max_cost : 1.0;
  const double temperature = s.mlm * max_cost;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const int d1 = static_cast<int>(wl.disparity.at(0, y, x));
      if (x - d1 < 0) continue;  // winner outside the other view
      set.defined.at(0, y, x) = 1.0f;
      const double c1 = wl.c1[i], c2m = wl.c2m[i];
      const float* curve = vol.curve(y, x);

      const double msm = 1.0 - c1 / (s.msm * max_cost);
      const double pkrn = saturate((c2m + s.pkrn_bias) / (c1 + s.pkrn_bias) - 1.0, s.pkrn);

      double total = 0.0, z = 0.0;
      for (int d = 0; d < nd; ++d) {
        total += curve[d];
        z += std::exp(-(curve[d] - c1) / temperature);  // winner term is exp(0)
      }
      const double mean_cost = total / nd;
      const double wmn = mean_cost > 0.0 ? saturate((c2m - c1) / mean_cost, s.wmn) : 0.0;
      const double mlm = nd > 1 ? (1.0 / z - 1.0 / nd) / (1.0 - 1.0 / nd) : 0.0;

      const int xr = x - d1;
      const double cr = wr.c1[static_cast<std::size_t>(y) * w + xr];
      const double lrd = saturate((c2m - c1) / (std::abs(c1 - cr) + s.pkrn_bias), s.lrd);
      const double diff = std::abs(static_cast<double>(match.left.at(0, y, x)) - match.right.at(0, y, xr));
      const double lrc = 1.0 - diff / s.lrc;

      set.maps[0].values[i] = clamp01(msm);
      set.maps[1].values[i] = clamp01(pkrn);
      set.maps[2].values[i] = clamp01(wmn);
      set.maps[3].values[i] = clamp01(mlm);
      set.maps[4].values[i] = clamp01(lrd);
      set.maps[5].values[i] = clamp01(lrc);
    }
  }
  return set;
}

tensor::Tensor<float> combine_measures(const MeasureSet& measures, Combine rule) {
  if (measures.maps.empty()) throw Error(ErrorCode::kInvalidArgument, "no measures to combine");
  const auto& shape = measures.maps.front().values.shape();
  for (const auto& m : measures.maps) tensor::require_same(shape, m.values.shape(), "combine_measures");
  tensor::Tensor<float> out(shape);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = rule == Combine::kMin ? 1.0 : (rule == Combine::kProduct ? 1.0 : 0.0);
    for (const auto& m : measures.maps) {
      const double v = m.values[i];
      switch (rule) {
        case Combine::kMin: acc = std::min(acc, v); break;
        case Combine::kProduct: acc *= v; break;
        case Combine::kMean: acc += v; break;
      }
    }
    if (rule == Combine::kMean) acc /= static_cast<double>(measures.maps.size());
    out[i] = static_cast<float>(acc);
  }
  return out;
}

std::string to_string(FilterMode mode) {
  switch (mode) {
    case FilterMode::kLrCheck: return "lr";
    case FilterMode::kWild: return "wild";
    case FilterMode::kNone: return "none";
  }
  return "?";
}

std::string to_string(Combine rule) {
  switch (rule) {
    case Combine::kMin: return "min";
    case Combine::kProduct: return "product";
    case Combine::kMean: return "mean";
  }
  return "?";
}

std::string to_string(Matcher matcher) { return matcher == Matcher::kSgm ? "sgm" : "bm"; }

FilterMode parse_filter_mode(const std::string& text) {
  if (text == "lr" || text == "lr-check") return FilterMode::kLrCheck;
  if (text == "wild") return FilterMode::kWild;
  if (text == "none") return FilterMode::kNone;
  throw Error(ErrorCode::kInvalidArgument, "unknown filter mode '" + text + "'");
}

Combine parse_combine(const std::string& text) {
  if (text == "min") return Combine::kMin;
  if (text == "product") return Combine::kProduct;
  if (text == "mean") return Combine::kMean;
  throw Error(ErrorCode::kInvalidArgument, "unknown combination rule '" + text + "'");
}

Matcher parse_matcher(const std::string& text) {
  if (text == "sgm") return Matcher::kSgm;
  if (text == "bm") return Matcher::kBm;
  throw Error(ErrorCode::kInvalidArgument, "unknown matcher '" + text + "'");
}

}  // namespace stereoadapt::confidence
