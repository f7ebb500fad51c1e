#pragma once

#include <vector>

#include "stereoadapt/tensor/tape.hpp"

// Differentiable operators over rank-3 (C, H, W) feature maps. Every op
// records itself on the tape of its first input.
namespace stereoadapt::tensor {

/// Cross-correlation with "same" zero padding: output extent is
/// ceil(H / stride) x ceil(W / stride). Weights are (Cout, Cin, k, k), k odd.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weights, Var<T> bias, int stride, int dilation);

template <typename T>
Var<T> leaky_relu(Var<T> x, T slope);

/// max(x, 0); the gradient at exactly 0 is 0.
template <typename T>
Var<T> relu(Var<T> x);

/// Horizontal correlation over shifts s in [-max_disp, max_disp]:
/// out[s + max_disp, y, x] = mean_c left[c, y, x] * right[c, y, x + s].
template <typename T>
Var<T> correlation(Var<T> left, Var<T> right, int max_disp);

/// out[c, y, x] = source sampled at (x - disparity[y, x], y), linear
/// interpolation along the row, coordinates clamped to [0, W - 1].
template <typename T>
Var<T> warp(Var<T> source, Var<T> disparity);

/// Bilinear resize by an integer factor (half-pixel centres). With
/// `scale_values` the result is also multiplied by `factor`.
template <typename T>
Var<T> upsample_bilinear(Var<T> x, int factor, bool scale_values);

/// Channel concatenation; all inputs share H and W.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts);

/// Same value, no gradient route back to the input.
template <typename T>
Var<T> detach(Var<T> x);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> div(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, T factor);
template <typename T>
Var<T> add_scalar(Var<T> x, T offset);
template <typename T>
Var<T> abs(Var<T> x);

/// Mean over a (window x window) neighbourhood with replicated borders.
template <typename T>
Var<T> box_filter(Var<T> x, int window);

/// Mean over channels, (C, H, W) -> (1, H, W).
template <typename T>
Var<T> channel_mean(Var<T> x);

template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);

/// sum(x * mask) / sum(mask) for a constant 0/1 mask; 0 when the mask is empty.
template <typename T>
Var<T> masked_mean(Var<T> x, const Tensor<T>& mask);

/// sum_i weights[i] * terms[i] over scalar terms.
template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights);

}  // namespace stereoadapt::tensor
