#include "stereoadapt/harness/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "stereoadapt/error.hpp"
#include "stereoadapt/random.hpp"

namespace stereoadapt::harness {
namespace {

enum class ShapeKind { kRectangle, kEllipse, kBackground };

struct Layer {
  int disparity = 0;
  ShapeKind kind = ShapeKind::kBackground;
  double cx = 0.0, cy = 0.0, rx = 0.0, ry = 0.0;
  double mean = 0.5;
  double contrast = 1.0;
  double period = 12.0;
  std::uint64_t texture_seed = 0;
  std::array<double, 3> tint{1.0, 1.0, 1.0};
  double velocity = 0.0;  // px/frame
};

struct Scene {
  std::vector<Layer> layers;  // back to front
};

double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x9e3779b1ull +
                                                       splitmix64(static_cast<std::uint64_t>(iy))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(double u, double v, std::uint64_t seed) {
  const double fu = std::floor(u), fv = std::floor(v);
  const auto iu = static_cast<std::int64_t>(fu), iv = static_cast<std::int64_t>(fv);
  const double tu = smooth(u - fu), tv = smooth(v - fv);
  const double a = lattice(iu, iv, seed), b = lattice(iu + 1, iv, seed);
  const double c = lattice(iu, iv + 1, seed), d = lattice(iu + 1, iv + 1, seed);
  return (a + (b - a) * tu) * (1.0 - tv) + (c + (d - c) * tu) * tv;
}

double fractal(double u, double v, const TextureParams& tex, double period, std::uint64_t seed) {
  double sum = 0.0, norm = 0.0, amp = 1.0, p = period;
  for (int o = 0; o < tex.octaves; ++o) {
    sum += amp * value_noise(u / p, v / p, seed + static_cast<std::uint64_t>(o) * 0x632be59bd9b4e019ull);
    norm += amp;
    amp *= tex.persistence;
    p *= 0.5;
  }
  return sum / norm;
}

bool covers(const Layer& l, double x, double y) {
  switch (l.kind) {
    case ShapeKind::kBackground: return true;
    case ShapeKind::kRectangle: return std::abs(x - l.cx) <= l.rx && std::abs(y - l.cy) <= l.ry;
    case ShapeKind::kEllipse: {
      const double dx = (x - l.cx) / l.rx, dy = (y - l.cy) / l.ry;
      return dx * dx + dy * dy <= 1.0;
    }
  }
  return false;
}

Scene make_scene(const SyntheticSpec& spec, const SegmentSpec& seg, std::uint64_t seed) {
  Rng rng(seed);
  Scene scene;
  const int dmax = spec.max_disparity;
  const double direction = rng.uniform() < 0.5 ? -1.0 : 1.0;
  const double speed = direction * spec.camera_speed * rng.uniform(0.5, 1.0);

  auto textured = [&](Layer& l) {
    l.mean = rng.uniform(0.3, 0.7);
    l.contrast = rng.uniform(0.7, 1.2);
    l.period = seg.texture.base_period * rng.uniform(0.7, 1.4);
    l.texture_seed = rng.next();
    if (spec.channels == 3) {
      for (double& t : l.tint) t = rng.uniform(0.6, 1.0);
    }
    l.velocity = speed * static_cast<double>(l.disparity) / std::max(1, dmax);
  };

  Layer bg;
  bg.disparity = rng.uniform_int(0, std::max(0, dmax / 4));
  bg.kind = ShapeKind::kBackground;
  textured(bg);
  scene.layers.push_back(bg);

  const int n = rng.uniform_int(seg.min_layers, seg.max_layers);
  std::vector<Layer> objects;
  for (int i = 0; i < n; ++i) {
    Layer l;
    l.disparity = rng.uniform_int(std::min(dmax, bg.disparity + 1), dmax);
    l.kind = rng.uniform() < 0.5 ? ShapeKind::kRectangle : ShapeKind::kEllipse;
    l.cx = rng.uniform(-0.1, 1.1) * spec.width;
    l.cy = rng.uniform(0.0, 1.0) * spec.height;
    l.rx = rng.uniform(0.08, 0.3) * spec.width;
    l.ry = rng.uniform(0.15, 0.5) * spec.height;
    textured(l);
    objects.push_back(l);
  }
  std::stable_sort(objects.begin(), objects.end(),
                   [](const Layer& a, const Layer& b) { return a.disparity < b.disparity; });
  scene.layers.insert(scene.layers.end(), objects.begin(), objects.end());
  return scene;
}

// Index of the front-most layer covering left-view point (x, y) at frame k.
// A layer's content sits at layer coordinates (x - velocity * k, y).
int visible_layer(const Scene& s, double x, double y, int k) {
  for (int i = static_cast<int>(s.layers.size()) - 1; i >= 0; --i) {
    const Layer& l = s.layers[i];
    if (covers(l, x - l.velocity * k, y)) return i;
  }
  return 0;
}

// Front-most layer seen by the right view at (xr, y): layer i is there when
// it covers left-view coordinate xr + d_i.
int visible_layer_right(const Scene& s, double xr, double y, int k) {
  for (int i = static_cast<int>(s.layers.size()) - 1; i >= 0; --i) {
    const Layer& l = s.layers[i];
    if (covers(l, xr + l.disparity - l.velocity * k, y)) return i;
  }
  return 0;
}

double shade(const Layer& l, const TextureParams& tex, double x, double y, int k) {
  const double n = fractal(x - l.velocity * k, y, tex, l.period, l.texture_seed);
  return std::clamp(l.mean + 2.0 * tex.contrast * l.contrast * (n - 0.5), 0.02, 0.98);
}

struct Locator {
  int segment = 0;
  int local = 0;
};

Locator locate(const SyntheticSpec& spec, int index) {
  int start = 0;
  for (std::size_t g = 0; g < spec.segments.size(); ++g) {
    if (index < start + spec.segments[g].frames) return {static_cast<int>(g), index - start};
    start += spec.segments[g].frames;
  }
  throw Error(ErrorCode::kInvalidArgument, "synthetic frame index " + std::to_string(index) + " out of range");
}

void perturb(Image& img, const PhotometricShift& p, Rng& rng) {
  for (float& v : img.values()) {
    double x = std::pow(static_cast<double>(v), p.gamma);
    x = p.contrast * (x - 0.5) + 0.5 + p.brightness;
    if (p.noise > 0.0) x += p.noise * rng.normal();
    v = static_cast<float>(std::clamp(x, 0.0, 1.0));
  }
}

std::string frame_id(const SegmentSpec& seg, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return seg.domain + "-" + buf;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (height < 1 || width < 1) throw Error(ErrorCode::kInvalidArgument, "synthetic extent must be positive");
  if (channels != 1 && channels != 3) throw Error(ErrorCode::kInvalidArgument, "synthetic channels must be 1 or 3");
  if (max_disparity < 0 || max_disparity >= width) {
    throw Error(ErrorCode::kInvalidArgument, "max_disparity must lie in [0, width)");
  }
  if (shot_length < 1) throw Error(ErrorCode::kInvalidArgument, "shot_length must be >= 1");
  if (segments.empty()) throw Error(ErrorCode::kInvalidArgument, "synthetic sequence needs a segment");
  for (const auto& s : segments) {
    if (s.frames < 0) throw Error(ErrorCode::kInvalidArgument, "segment frame count must be >= 0");
    if (s.min_layers < 0 || s.max_layers < s.min_layers) {
      throw Error(ErrorCode::kInvalidArgument, "segment layer range is empty");
    }
    if (!(s.photometric.gamma > 0.0) || !(s.photometric.noise >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "gamma must be > 0 and noise >= 0");
    }
    if (s.texture.octaves < 1 || !(s.texture.base_period > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "texture needs >= 1 octave and a positive period");
    }
  }
}

int SyntheticSpec::total_frames() const {
  int n = 0;
  for (const auto& s : segments) n += s.frames;
  return n;
}

StereoFrame render_clean_frame(const SyntheticSpec& spec, std::uint64_t seed, int index) {
  spec.validate();
  const Locator loc = locate(spec, index);
  const SegmentSpec& seg = spec.segments[loc.segment];
  const int shot = loc.local / spec.shot_length, k = loc.local % spec.shot_length;
  const Scene scene = make_scene(spec, seg, mix_seed(mix_seed(seed, static_cast<std::uint64_t>(loc.segment)),
                                                     static_cast<std::uint64_t>(shot)));
  const int h = spec.height, w = spec.width, c = spec.channels;

  StereoFrame f;
  f.left = Image::chw(c, h, w);
  f.right = Image::chw(c, h, w);
  f.gt = GroundTruth{DisparityMap::chw(1, h, w), make_bitmap(h, w, 1.0f)};
  f.occlusion = make_bitmap(h, w);
  f.id = frame_id(seg, index);
  f.domain = seg.domain;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int li = visible_layer(scene, x, y, k);
      const Layer& l = scene.layers[li];
      const double v = shade(l, seg.texture, x, y, k);
      for (int ch = 0; ch < c; ++ch) f.left.at(ch, y, x) = static_cast<float>(v * l.tint[ch]);
      f.gt->disparity.at(0, y, x) = static_cast<float>(l.disparity);
      const int xr = x - l.disparity;
      if (xr < 0 || visible_layer_right(scene, xr, y, k) != li) f.occlusion->at(0, y, x) = 1.0f;

      const int ri = visible_layer_right(scene, x, y, k);
      const Layer& r = scene.layers[ri];
      const double vr = shade(r, seg.texture, x + r.disparity, y, k);
      for (int ch = 0; ch < c; ++ch) f.right.at(ch, y, x) = static_cast<float>(vr * r.tint[ch]);
    }
  }
  return f;
}

StereoFrame render_synthetic_frame(const SyntheticSpec& spec, std::uint64_t seed, int index) {
  StereoFrame f = render_clean_frame(spec, seed, index);
  const SegmentSpec& seg = spec.segments[locate(spec, index).segment];
  Rng rng(mix_seed(mix_seed(seed, 0x6e6f697365ull), static_cast<std::uint64_t>(index)));
  perturb(f.left, seg.photometric, rng);
  perturb(f.right, seg.photometric, rng);
  return f;
}

std::vector<StereoFrame> gen_synthetic_sequence(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<StereoFrame> frames;
  frames.reserve(static_cast<std::size_t>(spec.total_frames()));
  for (int i = 0; i < spec.total_frames(); ++i) frames.push_back(render_synthetic_frame(spec, seed, i));
  return frames;
}

SyntheticSpec synthetic_spec_from_config(const Config& cfg) {
  SyntheticSpec spec;
  spec.height = cfg.get_int("height", spec.height);
  spec.width = cfg.get_int("width", spec.width);
  spec.channels = cfg.get_int("channels", spec.channels);
  spec.max_disparity = cfg.get_int("max_disparity", spec.max_disparity);
  spec.shot_length = cfg.get_int("shot_length", spec.shot_length);
  spec.camera_speed = cfg.get_double("camera_speed", spec.camera_speed);
  const int n = cfg.get_int("segments", 1);
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "segments must be >= 1");
  spec.segments.assign(static_cast<std::size_t>(n), SegmentSpec{});
  for (int i = 0; i < n; ++i) {
    const std::string p = "segment." + std::to_string(i) + ".";
    SegmentSpec& s = spec.segments[i];
    s.domain = cfg.get_string(p + "domain", std::string(1, static_cast<char>('A' + i % 26)));
    s.frames = cfg.get_int(p + "frames", s.frames);
    s.photometric.brightness = cfg.get_double(p + "brightness", s.photometric.brightness);
    s.photometric.gamma = cfg.get_double(p + "gamma", s.photometric.gamma);
    s.photometric.contrast = cfg.get_double(p + "contrast", s.photometric.contrast);
    s.photometric.noise = cfg.get_double(p + "noise", s.photometric.noise);
    s.texture.base_period = cfg.get_double(p + "texture_period", s.texture.base_period);
    s.texture.octaves = cfg.get_int(p + "texture_octaves", s.texture.octaves);
    s.texture.persistence = cfg.get_double(p + "texture_persistence", s.texture.persistence);
    s.texture.contrast = cfg.get_double(p + "texture_contrast", s.texture.contrast);
    s.min_layers = cfg.get_int(p + "min_layers", s.min_layers);
    s.max_layers = cfg.get_int(p + "max_layers", s.max_layers);
  }
  spec.validate();
  return spec;
}

Config synthetic_spec_to_config(const SyntheticSpec& spec) {
  Config cfg;
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  cfg.set("height", std::to_string(spec.height));
  cfg.set("width", std::to_string(spec.width));
  cfg.set("channels", std::to_string(spec.channels));
  cfg.set("max_disparity", std::to_string(spec.max_disparity));
  cfg.set("shot_length", std::to_string(spec.shot_length));
  cfg.set("camera_speed", num(spec.camera_speed));
  cfg.set("segments", std::to_string(spec.segments.size()));
  for (std::size_t i = 0; i < spec.segments.size(); ++i) {
    const std::string p = "segment." + std::to_string(i) + ".";
    const SegmentSpec& s = spec.segments[i];
    cfg.set(p + "domain", s.domain);
    cfg.set(p + "frames", std::to_string(s.frames));
    cfg.set(p + "brightness", num(s.photometric.brightness));
    cfg.set(p + "gamma", num(s.photometric.gamma));
    cfg.set(p + "contrast", num(s.photometric.contrast));
    cfg.set(p + "noise", num(s.photometric.noise));
    cfg.set(p + "texture_period", num(s.texture.base_period));
    cfg.set(p + "texture_octaves", std::to_string(s.texture.octaves));
    cfg.set(p + "texture_persistence", num(s.texture.persistence));
    cfg.set(p + "texture_contrast", num(s.texture.contrast));
    cfg.set(p + "min_layers", std::to_string(s.min_layers));
    cfg.set(p + "max_layers", std::to_string(s.max_layers));
  }
  return cfg;
}

}  // namespace stereoadapt::harness
