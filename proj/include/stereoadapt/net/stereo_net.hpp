#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stereoadapt/tensor/ops.hpp"
#include "stereoadapt/tensor/param_store.hpp"

namespace stereoadapt::net {

using tensor::ParamId;
using tensor::ParamStore;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

/// Rational multiplier applied to every channel count of the reference layout.
struct WidthScale {
  int num = 1;
  int den = 1;

  int apply(int channels) const { return std::max(1, channels * num / den); }
  bool operator==(const WidthScale&) const = default;
};

struct NetConfig {
  WidthScale width_scale{};
  int levels = 6;  // encoder blocks; levels - 1 disparity outputs, finest at 1/4
  int max_corr_disp = 2;
  int in_channels = 3;

  int outputs() const { return levels - 1; }
  int divisor() const { return 1 << levels; }
  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

struct ConvLayer {
  std::string name;
  int in = 0;
  int out = 0;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  bool activation = true;
  ParamId weight = -1;
  ParamId bias = -1;
};

/// Layer wiring. decoders[0] works at 1/4 resolution, decoders.back() at the
/// coarsest scale; encoder[b] is block b + 1 (two convs, first with stride 2).
struct Architecture {
  NetConfig config;
  std::vector<std::vector<ConvLayer>> encoder;
  std::vector<std::vector<ConvLayer>> decoders;
  std::vector<ConvLayer> refinement;
};

/// Disjoint parameter groups. modules[0] is M1 (encoder blocks 1-2, the
/// quarter-resolution decoder and the refinement); modules[i] for i >= 1
/// holds encoder block i + 2 and the decoder of the same scale.
struct ModulePartition {
  std::vector<std::set<ParamId>> modules;

  int size() const { return static_cast<int>(modules.size()); }
  std::set<ParamId> all() const;
  /// 1-based module index owning `id`, or 0 when unowned.
  int owner(ParamId id) const;
};

template <typename T>
struct StereoNet {
  Architecture arch;
  ParamStore<T> params;
  ModulePartition partition;

  const NetConfig& config() const { return arch.config; }

  template <typename U>
  StereoNet<U> cast() const {
    return StereoNet<U>{arch, params.template cast<U>(), partition};
  }
};

/// Deterministic initialisation: He-normal for activated layers, small
/// normal for disparity heads, zeros for the last refinement layer. The
/// coarsest head starts with bias 0.1. forward() maps input intensities
/// through (x - 0.5) / 0.25 before the encoder.
template <typename T>
StereoNet<T> build_network(const NetConfig& cfg, std::uint64_t seed);

/// Rebuilds the wiring and partition for `cfg` around existing parameters
/// (names must match the layout).
template <typename T>
StereoNet<T> assemble_network(const NetConfig& cfg, ParamStore<T> params);

/// kFull keeps every gradient route. kModular detaches the upsampled coarser
/// disparity consumed by each finer scale, so the loss on one output reaches
/// only its own module.
enum class Routes { kFull, kModular };

template <typename T>
struct PyramidVars {
  std::vector<Var<T>> scales;   // scales[0] is the refined 1/4 map
  std::vector<int> factors;     // downsampling factor of each scale
  Var<T> full;                  // refined map upsampled to input extent
};

template <typename T>
struct DisparityPyramid {
  std::vector<Tensor<T>> scales;
  std::vector<int> factors;
  Tensor<T> full;
};

/// Records a full forward pass on `tape`. Images are (C, H, W) with H and W
/// divisible by 2^levels.
template <typename T>
PyramidVars<T> forward(Tape<T>& tape, const StereoNet<T>& net, const Tensor<T>& left, const Tensor<T>& right,
                       Routes routes = Routes::kFull);

/// Forward pass on a private tape, values only.
template <typename T>
DisparityPyramid<T> predict(const StereoNet<T>& net, const Tensor<T>& left, const Tensor<T>& right);

/// Decoder at one scale. `bound` holds the tape handles of all parameters,
/// indexed by ParamId. `up_disp` is absent at the coarsest scale; the output
/// is clamped at 0.
template <typename T>
Var<T> decode(const std::vector<Var<T>>& bound, const std::vector<ConvLayer>& layers, Var<T> features,
              Var<T> correlation, std::optional<Var<T>> up_disp);

/// Residual refinement of the quarter-resolution disparity.
template <typename T>
Var<T> refine(const std::vector<Var<T>>& bound, const std::vector<ConvLayer>& layers, Var<T> quarter_disp,
              Var<T> quarter_features);

/// Binary checkpoint: magic line, text manifest (name, shape, byte offset),
/// then little-endian f32 payload.
void save_checkpoint(const std::string& path, const StereoNet<float>& net);
StereoNet<float> load_checkpoint(const std::string& path);

}  // namespace stereoadapt::net
