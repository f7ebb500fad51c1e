#include "stereoadapt/losses.hpp"

#include <cmath>

namespace stereoadapt::losses {

namespace ops = tensor;

void PhotometricConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must be in [0, 1]");
  if (ssim_window < 1 || ssim_window % 2 == 0) throw Error(ErrorCode::kInvalidArgument, "ssim window must be odd");
}

template <typename T>
Var<T> ssim(Var<T> a, Var<T> b, const PhotometricConfig& cfg) {
  cfg.validate();
  const int win = cfg.ssim_window;
  Var<T> mu_a = ops::box_filter(a, win);
  Var<T> mu_b = ops::box_filter(b, win);
  Var<T> mu_aa = ops::mul(mu_a, mu_a);
  Var<T> mu_bb = ops::mul(mu_b, mu_b);
  Var<T> mu_ab = ops::mul(mu_a, mu_b);
  Var<T> var_a = ops::sub(ops::box_filter(ops::mul(a, a), win), mu_aa);
  Var<T> var_b = ops::sub(ops::box_filter(ops::mul(b, b), win), mu_bb);
  Var<T> cov = ops::sub(ops::box_filter(ops::mul(a, b), win), mu_ab);
  const T c1 = static_cast<T>(cfg.ssim_c1), c2 = static_cast<T>(cfg.ssim_c2);
  Var<T> num = ops::mul(ops::add_scalar(ops::scale(mu_ab, T(2)), c1), ops::add_scalar(ops::scale(cov, T(2)), c2));
  Var<T> den = ops::mul(ops::add_scalar(ops::add(mu_aa, mu_bb), c1), ops::add_scalar(ops::add(var_a, var_b), c2));
  return ops::div(num, den);
}

template <typename T>
Var<T> photometric_loss(Var<T> left, Var<T> right, Var<T> disparity, const PhotometricConfig& cfg) {
  cfg.validate();
  Var<T> recon = ops::warp(right, disparity);
  const T alpha = static_cast<T>(cfg.alpha);
  Var<T> dssim = ops::scale(ops::add_scalar(ops::scale(ssim(left, recon, cfg), T(-1)), T(1)), alpha / T(2));
  Var<T> l1 = ops::scale(ops::abs(ops::sub(left, recon)), T(1) - alpha);
  return ops::mean(ops::channel_mean(ops::add(dssim, l1)));
}

template <typename T>
Var<T> proxy_loss(Var<T> pred, const ProxyLabels& labels) {
  Tape<T>& tape = pred.tape();
  Var<T> z = tape.constant(labels.z.template cast<T>());
  return ops::masked_mean(ops::abs(ops::sub(pred, z)), labels.mask.template cast<T>());
}

GroundTruth downsample_ground_truth(const GroundTruth& gt, int factor) {
  if (factor < 1) throw Error(ErrorCode::kInvalidArgument, "downsample factor must be >= 1");
  const int h = gt.disparity.height(), w = gt.disparity.width();
  if (h % factor || w % factor) throw Error(ErrorCode::kIndivisibleExtent, "ground truth not divisible by factor");
  const int oh = h / factor, ow = w / factor;
  GroundTruth out{DisparityMap::chw(1, oh, ow), make_bitmap(oh, ow)};
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      int n = 0;
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) {
          if (gt.valid.at(0, y * factor + dy, x * factor + dx) != 0.0f) {
            acc += gt.disparity.at(0, y * factor + dy, x * factor + dx);
            ++n;
          }
        }
      }
      if (n) {
        out.disparity.at(0, y, x) = static_cast<float>(acc / n / factor);
        out.valid.at(0, y, x) = 1.0f;
      }
    }
  }
  return out;
}

template <typename T>
Var<T> multiscale_supervised_loss(const net::PyramidVars<T>& pyramid, const GroundTruth& gt,
                                  const std::vector<double>& weights) {
  if (weights.size() < pyramid.scales.size()) {
    throw Error(ErrorCode::kInvalidArgument, "need one weight per pyramid scale");
  }
  Tape<T>& tape = pyramid.full.tape();
  tensor::require_same(gt.disparity.shape(), pyramid.full.value().shape(), "supervised loss reference");
  std::vector<Var<T>> terms;
  std::vector<T> w;
  for (std::size_t i = 0; i < pyramid.scales.size(); ++i) {
    const GroundTruth small = downsample_ground_truth(gt, pyramid.factors[i]);
    Var<T> ref = tape.constant(small.disparity.template cast<T>());
    terms.push_back(ops::masked_mean(ops::abs(ops::sub(pyramid.scales[i], ref)), small.valid.template cast<T>()));
    w.push_back(static_cast<T>(weights[i]));
  }
  return ops::weighted_sum(terms, w);
}

Tensor<float> ssim_map(const Image& a, const Image& b, const PhotometricConfig& cfg) {
  tensor::Tape<float> tape;
  return ssim(tape.constant(a), tape.constant(b), cfg).value();
}

LossValue photometric_loss(const Image& left, const Image& right, const DisparityMap& disparity,
                           const PhotometricConfig& cfg) {
  tensor::Tape<float> tape;
  Var<float> loss = photometric_loss(tape.constant(left), tape.constant(right), tape.constant(disparity), cfg);
  LossValue out;
  out.value = loss.value().item();
  out.valid_pixels = static_cast<std::size_t>(left.height()) * left.width();
  return out;
}

LossValue proxy_loss(const DisparityMap& pred, const ProxyLabels& labels) {
  tensor::Tape<float> tape;
  Var<float> loss = proxy_loss(tape.constant(pred), labels);
  LossValue out;
  out.value = loss.value().item();
  out.valid_pixels = labels.valid_count();
  out.empty_mask = out.valid_pixels == 0;
  return out;
}

Bitmap confidence_mask(const Tensor<float>& confidence, const Bitmap& defined, double epsilon) {
  tensor::require_same(confidence.shape(), defined.shape(), "confidence_mask");
  Bitmap mask(confidence.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = (defined[i] != 0.0f && static_cast<double>(confidence[i]) >= epsilon) ? 1.0f : 0.0f;
  }
  return mask;
}

double mask_density(const Bitmap& mask) {
  if (mask.empty()) return 0.0;
  std::size_t n = 0;
  for (float m : mask.values()) n += m != 0.0f;
  return static_cast<double>(n) / static_cast<double>(mask.size());
}

#define STEREOADAPT_INSTANTIATE_LOSSES(T)                                                       \
  template Var<T> ssim<T>(Var<T>, Var<T>, const PhotometricConfig&);                            \
  template Var<T> photometric_loss<T>(Var<T>, Var<T>, Var<T>, const PhotometricConfig&);        \
  template Var<T> proxy_loss<T>(Var<T>, const ProxyLabels&);                                    \
  template Var<T> multiscale_supervised_loss<T>(const net::PyramidVars<T>&, const GroundTruth&, \
                                                const std::vector<double>&);

STEREOADAPT_INSTANTIATE_LOSSES(float)
STEREOADAPT_INSTANTIATE_LOSSES(double)

}  // namespace stereoadapt::losses
