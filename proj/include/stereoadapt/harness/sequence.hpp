#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stereoadapt/harness/synthetic.hpp"
#include "stereoadapt/types.hpp"

namespace stereoadapt::harness {

/// Ordered stream of frames.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::optional<StereoFrame> next() = 0;
  /// Total frame count when known up front.
  virtual std::optional<int> size() const { return std::nullopt; }
};

class VectorSource : public FrameSource {
 public:
  explicit VectorSource(const std::vector<StereoFrame>& frames) : frames_(&frames) {}
  std::optional<StereoFrame> next() override;
  std::optional<int> size() const override { return static_cast<int>(frames_->size()); }

 private:
  const std::vector<StereoFrame>* frames_;
  std::size_t pos_ = 0;
};

/// Renders frames lazily.
class SyntheticSource : public FrameSource {
 public:
  SyntheticSource(SyntheticSpec spec, std::uint64_t seed);
  std::optional<StereoFrame> next() override;
  std::optional<int> size() const override { return spec_.total_frames(); }

 private:
  SyntheticSpec spec_;
  std::uint64_t seed_;
  int pos_ = 0;
};

/// Optional central crop applied to every frame read from disk.
struct CropSpec {
  int height = 0;  // 0 keeps the full extent
  int width = 0;
};

/// Directory holding a `frames.txt` manifest whose lines read
/// `<id> <domain> left=<png> right=<png> [gt=<png16>] [occ=<png>] [proxy=<sparse>]`
/// with paths relative to the directory.
class DirectorySource : public FrameSource {
 public:
  explicit DirectorySource(const std::string& dir, CropSpec crop = {});
  std::optional<StereoFrame> next() override;
  std::optional<int> size() const override { return static_cast<int>(entries_.size()); }

 private:
  struct Entry {
    std::string id, domain, left, right, gt, occ, proxy;
  };
  std::string dir_;
  CropSpec crop_;
  std::vector<Entry> entries_;
  std::size_t pos_ = 0;
};

/// Thresholds channel 0 at 0.5.
Bitmap to_bitmap(const Image& image);

/// Central crop of every map in the frame.
StereoFrame central_crop(const StereoFrame& frame, int height, int width);

/// Writes frames plus manifest; proxies go out in the sparse format.
void write_sequence_dir(const std::string& dir, const std::vector<StereoFrame>& frames);

/// Opens a directory sequence, or renders one when `path` is a synthetic spec file.
std::unique_ptr<FrameSource> open_sequence(const std::string& path, std::uint64_t synthetic_seed = 0,
                                           CropSpec crop = {});

}  // namespace stereoadapt::harness
