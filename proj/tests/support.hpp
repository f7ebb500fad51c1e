#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "stereoadapt/error.hpp"
#include "stereoadapt/random.hpp"
#include "stereoadapt/tensor/ops.hpp"

namespace stereoadapt::testing {

using tensor::Shape;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

template <typename T = double>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Values in +-[lo, hi], keeping clear of kinks at zero.
inline Tensor<double> away_from_zero(const Shape& shape, Rng& rng, double lo = 0.1, double hi = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  return t;
}

/// Runs `fn` and returns the code of the stereoadapt::Error it throws.
template <typename Fn>
std::optional<ErrorCode> error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
  std::size_t checked = 0;
};

using GraphFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

/// Central differences on every element of every input. The op output is
/// reduced with fixed random weights so all output elements contribute.
/// Relative error is |a - n| / max(|a| + |n|, floor).
inline GradCheckResult grad_check(const GraphFn& graph, std::vector<Tensor<double>> inputs, std::uint64_t seed = 1,
                                  double h = 1e-6, double floor = 1e-6) {
  Rng rng(seed);
  Tensor<double> weights;
  auto evaluate = [&](const std::vector<Tensor<double>>& values, bool with_grad, tensor::GradMap<double>* grads) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (std::size_t i = 0; i < values.size(); ++i) vars.push_back(tape.parameter(static_cast<int>(i), values[i]));
    Var<double> out = graph(tape, vars);
    if (weights.empty()) weights = random_tensor(out.shape(), rng, 0.5, 1.5);
    Var<double> loss = tensor::sum(tensor::mul(out, tape.constant(weights)));
    if (with_grad) {
      std::set<int> ids;
      for (std::size_t i = 0; i < values.size(); ++i) ids.insert(static_cast<int>(i));
      *grads = tensor::backward(loss, ids);
    }
    return loss.value().item();
  };

  tensor::GradMap<double> analytic;
  evaluate(inputs, true, &analytic);
  GradCheckResult res;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double keep = inputs[i][k];
      const double step = h * std::max(1.0, std::abs(keep));
      inputs[i][k] = keep + step;
      const double up = evaluate(inputs, false, nullptr);
      inputs[i][k] = keep - step;
      const double down = evaluate(inputs, false, nullptr);
      inputs[i][k] = keep;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.at(static_cast<int>(i))[k];
      res.max_rel_error = std::max(res.max_rel_error, std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor));
      res.max_abs_grad = std::max(res.max_abs_grad, std::abs(a));
      ++res.checked;
    }
  }
  return res;
}

}  // namespace stereoadapt::testing
