#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stereoadapt/harness/config.hpp"
#include "stereoadapt/types.hpp"

namespace stereoadapt::harness {

/// Perturbation applied to both views of every frame in a segment:
/// I' = clamp(contrast * (I^gamma - 0.5) + 0.5 + brightness + N(0, noise^2)).
struct PhotometricShift {
  double brightness = 0.0;
  double gamma = 1.0;
  double contrast = 1.0;
  double noise = 0.0;
};

struct TextureParams {
  double base_period = 12.0;  // pixels per lattice cell of the coarsest octave
  int octaves = 4;
  double persistence = 0.6;
  double contrast = 1.0;  // spread of layer texture values around their mean
};

struct SegmentSpec {
  std::string domain = "A";
  int frames = 100;
  PhotometricShift photometric;
  TextureParams texture;
  int min_layers = 2;
  int max_layers = 5;
};

struct SyntheticSpec {
  int height = 64;
  int width = 128;
  int channels = 1;
  int max_disparity = 16;
  int shot_length = 25;        // frames per randomly drawn scene
  double camera_speed = 1.0;   // image motion in px/frame of a layer at max disparity
  std::vector<SegmentSpec> segments{SegmentSpec{}};

  void validate() const;
  int total_frames() const;
};

/// Renders frame `index` of the sequence; frames are independent of each
/// other given (spec, seed), so any frame can be produced on its own.
StereoFrame render_synthetic_frame(const SyntheticSpec& spec, std::uint64_t seed, int index);

/// Same frame before the segment's photometric perturbation.
StereoFrame render_clean_frame(const SyntheticSpec& spec, std::uint64_t seed, int index);

std::vector<StereoFrame> gen_synthetic_sequence(const SyntheticSpec& spec, std::uint64_t seed);

/// Keys: height, width, channels, max_disparity, shot_length, camera_speed,
/// segments, then per segment i: segment.i.{domain, frames, brightness,
/// gamma, contrast, noise, texture_period, texture_octaves,
/// texture_persistence, texture_contrast, min_layers, max_layers}.
SyntheticSpec synthetic_spec_from_config(const Config& cfg);
Config synthetic_spec_to_config(const SyntheticSpec& spec);

}  // namespace stereoadapt::harness
