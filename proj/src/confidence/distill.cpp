#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stereoadapt/confidence.hpp"
#include "stereoadapt/error.hpp"
#include "stereoadapt/harness/metrics.hpp"
#include "stereoadapt/losses.hpp"

namespace stereoadapt::confidence {
namespace {

struct ErrorTally {
  double abs_sum = 0.0;
  std::size_t outliers = 0;
  std::size_t n = 0;

  void add(double pred, double gt) {
    const double err = std::abs(pred - gt);
    abs_sum += err;
    outliers += harness::is_outlier(err, gt);
    ++n;
  }
  double d1() const { return n ? 100.0 * static_cast<double>(outliers) / static_cast<double>(n) : 0.0; }
  double epe() const { return n ? abs_sum / static_cast<double>(n) : 0.0; }
};

template <typename U>
void put_le(std::ostream& out, U v) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.put(static_cast<char>((v >> (8 * b)) & 0xff));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) v |= static_cast<U>(static_cast<U>(p[b]) << (8 * b));
  return v;
}

}  // namespace

DistillConfig::DistillConfig() {
  sgm.subpixel = true;
  bm.subpixel = true;
}

DistillResult distill_from_match(const StereoFrame& frame, const MatchResult& match, const FilterConfig& filter) {
  filter.validate();
  const int h = match.left.height(), w = match.left.width();
  DistillResult out;
  ProxyLabels& labels = out.labels;
  labels.z = match.left;

  switch (filter.mode) {
    case FilterMode::kLrCheck: {
      labels.confidence = left_right_check(match.left, match.right, filter.lr_threshold);
      labels.defined = make_bitmap(h, w, 1.0f);
      break;
    }
    case FilterMode::kWild: {
      const MeasureSet measures = compute_measures(match, filter.scales);
      labels.confidence = combine_measures(measures, filter.combine);
      labels.defined = measures.defined;
      break;
    }
    case FilterMode::kNone: {
      labels.confidence = tensor::Tensor<float>::chw(1, h, w, 1.0f);
      labels.defined = make_bitmap(h, w, 1.0f);
      break;
    }
  }
  labels.mask = losses::confidence_mask(labels.confidence, labels.defined, filter.epsilon);

  DistillReport& rep = out.report;
  rep.raw_density = losses::mask_density(labels.defined);
  rep.density = labels.density();
  rep.empty = labels.empty();
  if (frame.gt) {
    tensor::require_same(frame.gt->disparity.shape(), labels.z.shape(), "distill ground truth");
    rep.has_gt = true;
    ErrorTally raw, kept;
    for (std::size_t i = 0; i < labels.z.size(); ++i) {
      if (frame.gt->valid[i] == 0.0f || labels.defined[i] == 0.0f) continue;
      raw.add(labels.z[i], frame.gt->disparity[i]);
      if (labels.mask[i] != 0.0f) kept.add(labels.z[i], frame.gt->disparity[i]);
    }
    rep.raw_d1 = raw.d1();
    rep.raw_epe = raw.epe();
    rep.filtered_d1 = kept.d1();
    rep.filtered_epe = kept.epe();
    rep.filtered_gt_px = kept.n;
  }
  return out;
}

DistillResult distill(const StereoFrame& frame, const DistillConfig& cfg) {
  if (frame.left.height() < 1 || frame.left.width() < 1) {
    throw Error(ErrorCode::kDegenerateInput, "cannot distill an empty frame");
  }
  const MatchResult match = cfg.matcher == Matcher::kSgm ? classic::sgm(frame.left, frame.right, cfg.sgm)
                                                         : classic::block_matching(frame.left, frame.right, cfg.bm);
  return distill_from_match(frame, match, cfg.filter);
}

void write_sparse_labels(const std::string& path, const ProxyLabels& labels) {
  const int h = labels.z.height(), w = labels.z.width();
  if (h > 65535 || w > 65535) throw Error(ErrorCode::kInvalidArgument, "extent too large for sparse format");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path + " for writing");
  out << "SPARSE16 " << w << ' ' << h << ' ' << labels.valid_count() << '\n';
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (labels.mask.at(0, y, x) == 0.0f) continue;
      put_le<std::uint16_t>(out, static_cast<std::uint16_t>(x));
      put_le<std::uint16_t>(out, static_cast<std::uint16_t>(y));
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(labels.z.at(0, y, x)));
    }
  }
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed for " + path);
}

ProxyLabels ingest_sparse_labels(const std::string& path, std::optional<std::pair<int, int>> expected_hw) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open sparse labels " + path);
  auto malformed = [&](const std::string& why) { return Error(ErrorCode::kMalformedFile, path + ": " + why); };
  auto empty_labels = [](int h, int w) {
    return ProxyLabels{DisparityMap::chw(1, h, w), tensor::Tensor<float>::chw(1, h, w), make_bitmap(h, w),
                       make_bitmap(h, w)};
  };

  if (in.peek() == std::char_traits<char>::eof()) {
    if (expected_hw) return empty_labels(expected_hw->first, expected_hw->second);
    throw malformed("empty file and no expected extent");
  }
  std::string header;
  if (!std::getline(in, header)) throw malformed("missing header");
  std::istringstream hs(header);
  std::string magic;
  long w = -1, h = -1, n = -1;
  std::string extra;
  if (!(hs >> magic >> w >> h >> n) || magic != "SPARSE16" || (hs >> extra)) throw malformed("bad header");
  if (w < 1 || h < 1 || w > 65535 || h > 65535 || n < 0 || n > w * h) throw malformed("header values out of range");
  if (expected_hw && (expected_hw->first != h || expected_hw->second != w)) {
    throw Error(ErrorCode::kExtentMismatch, path + ": labels are " + std::to_string(w) + "x" + std::to_string(h) +
                                                ", sequence is " + std::to_string(expected_hw->second) + "x" +
                                                std::to_string(expected_hw->first));
  }
  const std::size_t bytes = static_cast<std::size_t>(n) * 8;
  std::vector<unsigned char> payload(bytes);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) throw malformed("truncated records");
  if (in.peek() != std::char_traits<char>::eof()) throw malformed("trailing bytes after records");

  ProxyLabels labels = empty_labels(static_cast<int>(h), static_cast<int>(w));
  for (long i = 0; i < n; ++i) {
    const unsigned char* rec = payload.data() + i * 8;
    const int x = get_le<std::uint16_t>(rec), y = get_le<std::uint16_t>(rec + 2);
    const float d = std::bit_cast<float>(get_le<std::uint32_t>(rec + 4));
    if (x >= w || y >= h) throw malformed("record " + std::to_string(i) + " outside the image");
    if (!std::isfinite(d)) throw malformed("record " + std::to_string(i) + " has a non-finite disparity");
    if (labels.mask.at(0, y, x) != 0.0f) throw malformed("duplicate record at " + std::to_string(x) + "," + std::to_string(y));
    labels.z.at(0, y, x) = d;
    labels.confidence.at(0, y, x) = 1.0f;
    labels.defined.at(0, y, x) = 1.0f;
    labels.mask.at(0, y, x) = 1.0f;
  }
  return labels;
}

}  // namespace stereoadapt::confidence
