#include "stereoadapt/net/stereo_net.hpp"

#include <array>
#include <cmath>
#include <random>

namespace stereoadapt::net {
namespace {

constexpr std::array<int, 6> kEncoderChannels = {16, 32, 64, 96, 128, 192};
constexpr std::array<int, 6> kDecoderChannels = {128, 128, 96, 64, 32, 1};
constexpr std::array<int, 6> kRefineChannels = {128, 128, 128, 64, 32, 1};
constexpr std::array<int, 6> kRefineDilations = {1, 2, 4, 8, 16, 1};
constexpr float kLeakySlope = 0.2f;
// Coarsest-head bias in coarsest-scale pixels. Starting every scale above the
// clamp keeps gradients flowing through it at init.
constexpr double kInitialCoarseDisparity = 0.1;

std::string scale_tag(int factor) { return "s" + std::to_string(factor); }

// Builds the wiring and registers parameter names (zero-valued) in order.
template <typename T>
Architecture layout(const NetConfig& cfg, ParamStore<T>* params) {
  Architecture arch;
  arch.config = cfg;
  auto add_layer = [&](ConvLayer layer) {
    if (params) {
      layer.weight = params->add(layer.name + ".weight",
                                 Tensor<T>(tensor::Shape{layer.out, layer.in, layer.kernel, layer.kernel}));
      layer.bias = params->add(layer.name + ".bias", Tensor<T>(tensor::Shape{layer.out}));
    }
    return layer;
  };

  std::vector<int> feat(static_cast<std::size_t>(cfg.levels));
  int in = cfg.in_channels;
  for (int b = 0; b < cfg.levels; ++b) {
    const int out = cfg.width_scale.apply(kEncoderChannels[static_cast<std::size_t>(b)]);
    const std::string base = "encoder.block" + std::to_string(b + 1);
    std::vector<ConvLayer> block;
    block.push_back(add_layer({base + ".a", in, out, 3, 2, 1, true}));
    block.push_back(add_layer({base + ".b", out, out, 3, 1, 1, true}));
    arch.encoder.push_back(std::move(block));
    feat[static_cast<std::size_t>(b)] = out;
    in = out;
  }

  const int corr = 2 * cfg.max_corr_disp + 1;
  for (int i = 0; i < cfg.outputs(); ++i) {
    const bool coarsest = i == cfg.outputs() - 1;
    const std::string base = "decoder." + scale_tag(1 << (i + 2));
    int c_in = feat[static_cast<std::size_t>(i + 1)] + corr + (coarsest ? 0 : 1);
    std::vector<ConvLayer> dec;
    for (std::size_t j = 0; j < kDecoderChannels.size(); ++j) {
      const bool last = j + 1 == kDecoderChannels.size();
      const int out = last ? 1 : cfg.width_scale.apply(kDecoderChannels[j]);
      const std::string name = last ? base + ".disp" : base + ".conv" + std::to_string(j + 1);
      dec.push_back(add_layer({name, c_in, out, 3, 1, 1, !last}));
      c_in = out;
    }
    arch.decoders.push_back(std::move(dec));
  }

  int c_in = 1 + feat[1];
  for (std::size_t j = 0; j < kRefineChannels.size(); ++j) {
    const bool last = j + 1 == kRefineChannels.size();
    const int out = last ? 1 : cfg.width_scale.apply(kRefineChannels[j]);
    arch.refinement.push_back(
        add_layer({"refine.conv" + std::to_string(j + 1), c_in, out, 3, 1, kRefineDilations[j], !last}));
    c_in = out;
  }
  return arch;
}

void bind_ids(Architecture& arch, const std::function<ParamId(const std::string&)>& lookup) {
  auto bind = [&](ConvLayer& l) {
    l.weight = lookup(l.name + ".weight");
    l.bias = lookup(l.name + ".bias");
  };
  for (auto& block : arch.encoder) {
    for (auto& l : block) bind(l);
  }
  for (auto& dec : arch.decoders) {
    for (auto& l : dec) bind(l);
  }
  for (auto& l : arch.refinement) bind(l);
}

ModulePartition partition_of(const Architecture& arch) {
  ModulePartition part;
  part.modules.resize(arch.decoders.size());
  auto take = [](std::set<ParamId>& dst, const std::vector<ConvLayer>& layers) {
    for (const auto& l : layers) {
      dst.insert(l.weight);
      dst.insert(l.bias);
    }
  };
  take(part.modules[0], arch.encoder[0]);
  take(part.modules[0], arch.encoder[1]);
  take(part.modules[0], arch.decoders[0]);
  take(part.modules[0], arch.refinement);
  for (std::size_t i = 1; i < arch.decoders.size(); ++i) {
    take(part.modules[i], arch.encoder[i + 1]);
    take(part.modules[i], arch.decoders[i]);
  }
  return part;
}

template <typename T>
Var<T> apply_layer(const std::vector<Var<T>>& bound, const ConvLayer& l, Var<T> x) {
  Var<T> y = tensor::conv2d(x, bound[static_cast<std::size_t>(l.weight)], bound[static_cast<std::size_t>(l.bias)],
                            l.stride, l.dilation);
  return l.activation ? tensor::leaky_relu(y, static_cast<T>(kLeakySlope)) : y;
}

// Fixed affine map of [0, 1] intensities to roughly zero mean, unit spread.
// Raw intensities leave correlation dominated by brightness, not structure.
constexpr double kInputMean = 0.5;
constexpr double kInputSpread = 0.25;

template <typename T>
Tensor<T> normalize_input(const Tensor<T>& image) {
  Tensor<T> out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) {
    out[i] = static_cast<T>((image[i] - kInputMean) / kInputSpread);
  }
  return out;
}

}  // namespace

void NetConfig::validate() const {
  if (levels < 2 || levels > 6) throw Error(ErrorCode::kInvalidArgument, "levels must be in [2, 6]");
  if (max_corr_disp < 0) throw Error(ErrorCode::kInvalidArgument, "max_corr_disp must be >= 0");
  if (in_channels < 1) throw Error(ErrorCode::kInvalidArgument, "in_channels must be >= 1");
  if (width_scale.num < 1 || width_scale.den < 1) throw Error(ErrorCode::kInvalidArgument, "width scale must be > 0");
}

std::set<ParamId> ModulePartition::all() const {
  std::set<ParamId> out;
  for (const auto& m : modules) out.insert(m.begin(), m.end());
  return out;
}

int ModulePartition::owner(ParamId id) const {
  for (std::size_t i = 0; i < modules.size(); ++i) {
    if (modules[i].count(id)) return static_cast<int>(i) + 1;
  }
  return 0;
}

template <typename T>
StereoNet<T> build_network(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  StereoNet<T> net;
  net.arch = layout<T>(cfg, &net.params);
  net.partition = partition_of(net.arch);

  std::mt19937_64 rng(seed);
  auto init = [&](const ConvLayer& l, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : net.params.value(l.weight).values()) v = static_cast<T>(dist(rng));
  };
  const double gain = 2.0 / (1.0 + kLeakySlope * kLeakySlope);
  auto fan_in = [](const ConvLayer& l) { return static_cast<double>(l.in * l.kernel * l.kernel); };
  for (const auto& block : net.arch.encoder) {
    for (const auto& l : block) init(l, std::sqrt(gain / fan_in(l)));
  }
  for (const auto& dec : net.arch.decoders) {
    for (const auto& l : dec) init(l, l.activation ? std::sqrt(gain / fan_in(l)) : 0.1 / std::sqrt(fan_in(l)));
  }
  for (const auto& l : net.arch.refinement) {
    if (l.activation) init(l, std::sqrt(gain / fan_in(l)));
  }
  net.params.value(net.arch.decoders.back().back().bias)[0] = static_cast<T>(kInitialCoarseDisparity);
  return net;
}

template <typename T>
StereoNet<T> assemble_network(const NetConfig& cfg, ParamStore<T> params) {
  cfg.validate();
  ParamStore<T> expected;
  Architecture arch = layout<T>(cfg, &expected);
  if (expected.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "parameter count " + std::to_string(params.size()) +
                                               " does not match the configured layout (" +
                                               std::to_string(expected.size()) + ")");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto id = static_cast<ParamId>(i);
    const ParamId found = params.id(expected.name(id));
    require_same(params.value(found).shape(), expected.value(id).shape(), expected.name(id).c_str());
  }
  bind_ids(arch, [&](const std::string& n) { return params.id(n); });
  StereoNet<T> net{std::move(arch), std::move(params), {}};
  net.partition = partition_of(net.arch);
  return net;
}

template <typename T>
Var<T> decode(const std::vector<Var<T>>& bound, const std::vector<ConvLayer>& layers, Var<T> features,
              Var<T> correlation, std::optional<Var<T>> up_disp) {
  if (features.value().height() != correlation.value().height() ||
      features.value().width() != correlation.value().width() ||
      (up_disp && (up_disp->value().height() != features.value().height() ||
                   up_disp->value().width() != features.value().width()))) {
    throw Error(ErrorCode::kShapeMismatch, "decoder inputs must share one spatial extent");
  }
  std::vector<Var<T>> parts = {features, correlation};
  if (up_disp) parts.push_back(*up_disp);
  Var<T> x = tensor::concat(parts);
  for (const auto& l : layers) x = apply_layer(bound, l, x);
  if (up_disp) x = tensor::add(*up_disp, x);
  return tensor::relu(x);
}

template <typename T>
Var<T> refine(const std::vector<Var<T>>& bound, const std::vector<ConvLayer>& layers, Var<T> quarter_disp,
              Var<T> quarter_features) {
  Var<T> x = tensor::concat(std::vector<Var<T>>{quarter_disp, quarter_features});
  for (const auto& l : layers) x = apply_layer(bound, l, x);
  return tensor::relu(tensor::add(quarter_disp, x));
}

template <typename T>
PyramidVars<T> forward(Tape<T>& tape, const StereoNet<T>& net, const Tensor<T>& left, const Tensor<T>& right,
                       Routes routes) {
  const NetConfig& cfg = net.config();
  tensor::require_rank(left.shape(), 3, "left image");
  tensor::require_same(left.shape(), right.shape(), "stereo pair");
  if (left.channels() != cfg.in_channels) {
    throw Error(ErrorCode::kShapeMismatch, "network expects " + std::to_string(cfg.in_channels) +
                                               " image channels, got " + std::to_string(left.channels()));
  }
  if (left.height() % cfg.divisor() != 0 || left.width() % cfg.divisor() != 0) {
    throw Error(ErrorCode::kIndivisibleExtent,
                "image " + std::to_string(left.height()) + "x" + std::to_string(left.width()) +
                    " is not divisible by " + std::to_string(cfg.divisor()) + "; pad or crop in the harness");
  }

  std::vector<Var<T>> bound;
  bound.reserve(net.params.size());
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    bound.push_back(tape.parameter(static_cast<ParamId>(i), net.params.value(static_cast<ParamId>(i))));
  }

  std::vector<Var<T>> feat_l, feat_r;
  Var<T> xl = tape.constant(normalize_input(left));
  Var<T> xr = tape.constant(normalize_input(right));
  for (const auto& block : net.arch.encoder) {
    for (const auto& l : block) {
      xl = apply_layer(bound, l, xl);
      xr = apply_layer(bound, l, xr);
    }
    feat_l.push_back(xl);
    feat_r.push_back(xr);
  }

  const int outputs = cfg.outputs();
  PyramidVars<T> out;
  out.scales.resize(static_cast<std::size_t>(outputs));
  out.factors.resize(static_cast<std::size_t>(outputs));
  std::optional<Var<T>> coarser;
  for (int i = outputs - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    Var<T> fl = feat_l[ui + 1];
    Var<T> fr = feat_r[ui + 1];
    std::optional<Var<T>> up;
    if (coarser) {
      up = tensor::upsample_bilinear(*coarser, 2, true);
      if (routes == Routes::kModular) up = tensor::detach(*up);
      fr = tensor::warp(fr, *up);
    }
    Var<T> corr = tensor::correlation(fl, fr, cfg.max_corr_disp);
    Var<T> y = decode(bound, net.arch.decoders[ui], fl, corr, up);
    out.scales[ui] = y;
    out.factors[ui] = 1 << (i + 2);
    coarser = y;
  }
  out.scales[0] = refine(bound, net.arch.refinement, out.scales[0], feat_l[1]);
  out.full = tensor::upsample_bilinear(out.scales[0], 4, true);
  return out;
}

template <typename T>
DisparityPyramid<T> predict(const StereoNet<T>& net, const Tensor<T>& left, const Tensor<T>& right) {
  Tape<T> tape;
  PyramidVars<T> vars = forward(tape, net, left, right, Routes::kFull);
  DisparityPyramid<T> out;
  for (const auto& v : vars.scales) out.scales.push_back(v.value());
  out.factors = vars.factors;
  out.full = vars.full.value();
  return out;
}

#define STEREOADAPT_INSTANTIATE_NET(T)                                                                      \
  template StereoNet<T> build_network<T>(const NetConfig&, std::uint64_t);                                  \
  template StereoNet<T> assemble_network<T>(const NetConfig&, ParamStore<T>);                               \
  template Var<T> decode<T>(const std::vector<Var<T>>&, const std::vector<ConvLayer>&, Var<T>, Var<T>,      \
                            std::optional<Var<T>>);                                                         \
  template Var<T> refine<T>(const std::vector<Var<T>>&, const std::vector<ConvLayer>&, Var<T>, Var<T>);     \
  template PyramidVars<T> forward<T>(Tape<T>&, const StereoNet<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                     Routes);                                                               \
  template DisparityPyramid<T> predict<T>(const StereoNet<T>&, const Tensor<T>&, const Tensor<T>&);

STEREOADAPT_INSTANTIATE_NET(float)
STEREOADAPT_INSTANTIATE_NET(double)

}  // namespace stereoadapt::net
