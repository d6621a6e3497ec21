// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations. Every function here records a tape node when
// an input requires a gradient and grad mode is on.
#pragma once

#include <vector>

#include "gpcn/tensor.hpp"

namespace gpcn::ops {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor neg(const Tensor& x);

Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);

/// sqrt(re^2 + im^2 + eps^2), elementwise.
Tensor amplitude(const Tensor& re, const Tensor& im, double eps);
/// Full-quadrant angle of (re, im) in (-pi, pi]; atan2(0, 0) = 0.
/// The gradient uses re^2 + im^2 + eps^2 in the denominator.
Tensor phase(const Tensor& re, const Tensor& im, double eps);

// Reductions to a scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Layout.
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length);
/// Reflect-pads the last two axes (no edge repeat, like numpy "reflect").
Tensor pad_reflect(const Tensor& x, std::int64_t bottom, std::int64_t right);
/// Keeps the top-left h x w window of the last two axes.
Tensor crop(const Tensor& x, std::int64_t h, std::int64_t w);

// Layers.

/// Cross-correlation of x[N,Cin,H,W] with weight[Cout,Cin,kh,kw], zero padding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int padding);
/// Per-channel cross-correlation: weight[C,1,kh,kw]; bias may be undefined.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int padding);
/// Affine map over the last axis: weight[Dout,Din], bias[Dout] (may be undefined).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Normalizes over `axis` then applies per-feature gamma/beta (shape [extent of axis]).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int axis,
                  double eps = 1e-6);

}  // namespace gpcn::ops
