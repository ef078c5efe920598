#pragma once

#include <cstddef>

#include "wdsm/tensor.hpp"

// Differentiable operations. Every op takes the tape explicitly; an op records
// a backward closure only when at least one input requires a gradient, and
// its output requires a gradient under the same condition.
namespace wdsm::ops {

// 3x3 cross-correlation, stride 1, zero padding 1 (output keeps H, W).
// x: [C_in,H,W], kernel: [C_out,C_in,3,3], bias: [C_out].
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias);

// Pointwise channel mixing. x: [C_in,H,W], weight: [C_out,C_in], bias: [C_out].
template <typename T>
Tensor<T> conv1x1(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// 2x2 non-overlapping max. Backward routes to the first maximum in row-major
// window order.
template <typename T>
Tensor<T> maxpool2(Tape<T>& tape, const Tensor<T>& x);

// Nearest-neighbour 2x upsampling.
template <typename T>
Tensor<T> upsample2(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

// [C,H,W] -> [H,W]
template <typename T>
Tensor<T> select_channel(Tape<T>& tape, const Tensor<T>& x, std::size_t channel);

// [C,H,W] -> [C]
template <typename T>
Tensor<T> global_avg_pool(Tape<T>& tape, const Tensor<T>& x);

// x: [C], weight: [O,C], bias: [O] -> [O]
template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x);

// Per-pixel softmax across a 2-channel [2,H,W] tensor.
template <typename T>
Tensor<T> softmax_channels(Tape<T>& tape, const Tensor<T>& x);

// min(x, limit); gradient 1 where x < limit, 0 elsewhere.
template <typename T>
Tensor<T> clamp_max(Tape<T>& tape, const Tensor<T>& x, T limit);

// Multiplies by a constant binary mask [H,W], broadcast over channels when x
// is [C,H,W].
template <typename T>
Tensor<T> mul_mask(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& mask);

template <typename T>
Tensor<T> reduce_sum(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> reduce_mean(Tape<T>& tape, const Tensor<T>& x);

// Elementwise binary ops: equal shapes, or either side a rank-0 scalar.
template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
// Throws NumericError if any denominator element is zero.
template <typename T>
Tensor<T> div(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> abs(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> square(Tape<T>& tape, const Tensor<T>& x);

}  // namespace wdsm::ops
