#pragma once

#include <cmath>
#include <map>

#include "stereoadapt/tensor/param_store.hpp"

namespace stereoadapt::tensor {

/// Heavy-ball momentum: v <- momentum * v + g; theta <- theta - lr * v.
/// Buffers are created lazily (zero) and persist for the optimizer's
/// lifetime, also across steps that leave a parameter untouched.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(T lr, T momentum) : lr_(lr), momentum_(momentum) {}

  void step(ParamStore<T>& params, const GradMap<T>& grads) {
    for (const auto& [id, g] : grads) {
      Tensor<T>& theta = params.value(id);
      require_same(theta.shape(), g.shape(), "sgd step");
      auto [it, inserted] = velocity_.try_emplace(id, Tensor<T>(g.shape()));
      Tensor<T>& v = it->second;
      for (std::size_t i = 0; i < g.size(); ++i) {
        v[i] = momentum_ * v[i] + g[i];
        theta[i] -= lr_ * v[i];
      }
    }
  }

  T lr() const { return lr_; }
  T momentum() const { return momentum_; }
  void set_lr(T lr) { lr_ = lr; }
  const std::map<ParamId, Tensor<T>>& buffers() const { return velocity_; }

 private:
  T lr_;
  T momentum_;
  std::map<ParamId, Tensor<T>> velocity_;
};

/// Adam with bias correction; used for offline pretraining only.
template <typename T>
class Adam {
 public:
  explicit Adam(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore<T>& params, const GradMap<T>& grads) {
    ++t_;
    const T c1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T c2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (const auto& [id, g] : grads) {
      Tensor<T>& theta = params.value(id);
      auto& m = first_.try_emplace(id, Tensor<T>(g.shape())).first->second;
      auto& v = second_.try_emplace(id, Tensor<T>(g.shape())).first->second;
      for (std::size_t i = 0; i < g.size(); ++i) {
        m[i] = beta1_ * m[i] + (T(1) - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (T(1) - beta2_) * g[i] * g[i];
        theta[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
    }
  }

  void set_lr(T lr) { lr_ = lr; }
  T lr() const { return lr_; }

 private:
  T lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<ParamId, Tensor<T>> first_, second_;
};

}  // namespace stereoadapt::tensor
