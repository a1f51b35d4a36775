#pragma once

// Differentiable tensor operations. Every op validates shapes up front,
// computes its value through the kernel layer, and records adjoints on the
// tape when autograd is enabled.

#include <vector>

#include "seflow/tensor.hpp"

namespace seflow {

/// Convolution geometry. Same-padding with zeros: the output always has the
/// input's time length, whatever kernel size and dilation are.
struct ConvSpec {
  int kernel_size = 1;
  int dilation = 1;
  int in_channels = 0;
  int out_channels = 0;

  int pad_total() const { return (kernel_size - 1) * dilation; }
  int pad_left() const { return pad_total() / 2; }
};

namespace ops {

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <class S>
Tensor<S> scale(const Tensor<S>& a, S factor);

/// weights: (out_channels, in_channels, kernel); bias: (1, out_channels, 1) or undefined.
template <class S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& weights, const Tensor<S>& bias,
                 const ConvSpec& spec);

/// weights: (channels, 1, kernel); one filter per input channel.
template <class S>
Tensor<S> depthwise_conv(const Tensor<S>& x, const Tensor<S>& weights, int dilation);

/// Depthwise filter followed by a pointwise channel mix; equals conv1d with
/// the composed dense kernel.
template <class S>
Tensor<S> separable_conv(const Tensor<S>& x, const Tensor<S>& depthwise, const Tensor<S>& pointwise,
                         const Tensor<S>& pointwise_bias, int dilation);

/// tanh(a) * sigmoid(b), elementwise.
template <class S>
Tensor<S> gated_unit(const Tensor<S>& a, const Tensor<S>& b);

/// y[b,:,t] = W x[b,:,t]; W given as (c, c, 1).
template <class S>
Tensor<S> channel_matmul(const Tensor<S>& x, const Tensor<S>& w);

/// Scalar tensor holding count * log|det W|. Raises NumericError when |det W|
/// falls below 1e-12 (degenerate mixing matrix).
template <class S>
Tensor<S> channel_logdet(const Tensor<S>& w, long long count);

/// y = x * exp(log_scale) + shift, elementwise.
template <class S>
Tensor<S> affine_scale_shift(const Tensor<S>& x, const Tensor<S>& log_scale,
                             const Tensor<S>& shift);

template <class S>
Tensor<S> slice_channels(const Tensor<S>& x, int c_begin, int c_end);
template <class S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& parts);

template <class S>
Tensor<S> sum(const Tensor<S>& x);
template <class S>
Tensor<S> sum_squares(const Tensor<S>& x);

/// Per-output-channel weight normalization: w[o] = g[o] * v[o] / ||v[o]||.
/// direction: any weight layout with the output channel leading; magnitude: (out, 1, 1).
template <class S>
Tensor<S> weight_norm(const Tensor<S>& direction, const Tensor<S>& magnitude);

}  // namespace ops
}  // namespace seflow
