#include "stereoadapt/harness/sequence.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stereoadapt/confidence.hpp"
#include "stereoadapt/error.hpp"
#include "stereoadapt/harness/image_io.hpp"

namespace stereoadapt::harness {

namespace fs = std::filesystem;

std::optional<StereoFrame> VectorSource::next() {
  if (pos_ >= frames_->size()) return std::nullopt;
  return (*frames_)[pos_++];
}

SyntheticSource::SyntheticSource(SyntheticSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  spec_.validate();
}

std::optional<StereoFrame> SyntheticSource::next() {
  if (pos_ >= spec_.total_frames()) return std::nullopt;
  return render_synthetic_frame(spec_, seed_, pos_++);
}

DirectorySource::DirectorySource(const std::string& dir, CropSpec crop) : dir_(dir), crop_(crop) {
  const std::string manifest = (fs::path(dir) / "frames.txt").string();
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open sequence manifest " + manifest);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    Entry e;
    if (!(ss >> e.id >> e.domain)) {
      throw Error(ErrorCode::kMalformedFile, manifest + ":" + std::to_string(lineno) + ": expected id and domain");
    }
    std::string kv;
    while (ss >> kv) {
      const auto eq = kv.find('=');
      const std::string key = kv.substr(0, eq), val = eq == std::string::npos ? "" : kv.substr(eq + 1);
      if (val.empty()) throw Error(ErrorCode::kMalformedFile, manifest + ": bad field '" + kv + "'");
      if (key == "left") e.left = val;
      else if (key == "right") e.right = val;
      else if (key == "gt") e.gt = val;
      else if (key == "occ") e.occ = val;
      else if (key == "proxy") e.proxy = val;
      else throw Error(ErrorCode::kMalformedFile, manifest + ": unknown field '" + key + "'");
    }
    if (e.left.empty() || e.right.empty()) {
      throw Error(ErrorCode::kMalformedFile, manifest + ":" + std::to_string(lineno) + ": left and right are required");
    }
    entries_.push_back(std::move(e));
  }
}

std::optional<StereoFrame> DirectorySource::next() {
  if (pos_ >= entries_.size()) return std::nullopt;
  const Entry& e = entries_[pos_++];
  auto path = [&](const std::string& rel) { return (fs::path(dir_) / rel).string(); };
  StereoFrame f;
  f.id = e.id;
  f.domain = e.domain;
  try {
    f.left = read_png_image(path(e.left));
    f.right = read_png_image(path(e.right));
    tensor::require_same(f.left.shape(), f.right.shape(), "frame " + e.id + " views");
    if (!e.gt.empty()) f.gt = read_disparity_png16(path(e.gt));
    if (!e.occ.empty()) f.occlusion = to_bitmap(read_png_image(path(e.occ)));
    if (!e.proxy.empty()) {
      f.proxy = confidence::ingest_sparse_labels(path(e.proxy), std::make_pair(f.left.height(), f.left.width()));
    }
  } catch (const Error& err) {
    throw Error(err.code(), "frame " + e.id + ": " + err.what());
  }
  if (f.gt) tensor::require_same(f.gt->disparity.shape(), DisparityMap::chw(1, f.height(), f.width()).shape(),
                                 "frame " + e.id + " ground truth");
  if (crop_.height > 0 || crop_.width > 0) {
    f = central_crop(f, crop_.height > 0 ? crop_.height : f.height(), crop_.width > 0 ? crop_.width : f.width());
  }
  return f;
}

namespace {

tensor::Tensor<float> crop_map(const tensor::Tensor<float>& m, int top, int left, int h, int w) {
  tensor::Tensor<float> out = tensor::Tensor<float>::chw(m.channels(), h, w);
  for (int c = 0; c < m.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, y, x) = m.at(c, top + y, left + x);
    }
  }
  return out;
}

}  // namespace

Bitmap to_bitmap(const Image& image) {
  Bitmap out = make_bitmap(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) out.at(0, y, x) = image.at(0, y, x) >= 0.5f ? 1.0f : 0.0f;
  }
  return out;
}

StereoFrame central_crop(const StereoFrame& frame, int height, int width) {
  if (height > frame.height() || width > frame.width() || height < 1 || width < 1) {
    throw Error(ErrorCode::kExtentMismatch, "frame " + frame.id + " is smaller than the requested crop");
  }
  const int top = (frame.height() - height) / 2, left = (frame.width() - width) / 2;
  StereoFrame out;
  out.id = frame.id;
  out.domain = frame.domain;
  out.left = crop_map(frame.left, top, left, height, width);
  out.right = crop_map(frame.right, top, left, height, width);
  if (frame.gt) out.gt = GroundTruth{crop_map(frame.gt->disparity, top, left, height, width),
                                     crop_map(frame.gt->valid, top, left, height, width)};
  if (frame.occlusion) out.occlusion = crop_map(*frame.occlusion, top, left, height, width);
  if (frame.proxy) {
    const ProxyLabels& p = *frame.proxy;
    out.proxy = ProxyLabels{crop_map(p.z, top, left, height, width), crop_map(p.confidence, top, left, height, width),
                            crop_map(p.defined, top, left, height, width), crop_map(p.mask, top, left, height, width)};
  }
  return out;
}

void write_sequence_dir(const std::string& dir, const std::vector<StereoFrame>& frames) {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "frames.txt");
  if (!manifest) throw Error(ErrorCode::kIoFailure, "cannot write manifest in " + dir);
  manifest << "# id domain fields\n";
  for (const auto& f : frames) {
    const std::string stem = f.id;
    manifest << f.id << ' ' << (f.domain.empty() ? "-" : f.domain);
    write_png_image((fs::path(dir) / (stem + "_left.png")).string(), f.left);
    write_png_image((fs::path(dir) / (stem + "_right.png")).string(), f.right);
    manifest << " left=" << stem << "_left.png right=" << stem << "_right.png";
    if (f.gt) {
      write_disparity_png16((fs::path(dir) / (stem + "_gt.png")).string(), *f.gt);
      manifest << " gt=" << stem << "_gt.png";
    }
    if (f.occlusion) {
      write_png_image((fs::path(dir) / (stem + "_occ.png")).string(), *f.occlusion);
      manifest << " occ=" << stem << "_occ.png";
    }
    if (f.proxy) {
      confidence::write_sparse_labels((fs::path(dir) / (stem + "_proxy.sparse")).string(), *f.proxy);
      manifest << " proxy=" << stem << "_proxy.sparse";
    }
    manifest << '\n';
  }
  if (!manifest) throw Error(ErrorCode::kIoFailure, "write failed for manifest in " + dir);
}

std::unique_ptr<FrameSource> open_sequence(const std::string& path, std::uint64_t synthetic_seed, CropSpec crop) {
  if (fs::is_directory(path)) return std::make_unique<DirectorySource>(path, crop);
  if (!fs::exists(path)) throw Error(ErrorCode::kIoFailure, "no such sequence: " + path);
  const Config cfg = Config::load(path);
  return std::make_unique<SyntheticSource>(synthetic_spec_from_config(cfg),
                                           static_cast<std::uint64_t>(cfg.get_int64("seed", static_cast<long long>(synthetic_seed))));
}

}  // namespace stereoadapt::harness
