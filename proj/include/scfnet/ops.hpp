#pragma once

#include <span>
#include <vector>

#include "scfnet/tensor.hpp"

// Differentiable tensor operations. Every op validates shapes, computes its
// forward result eagerly and, when recording is on, pushes a backward closure
// onto the active tape.
namespace scfnet::ops {

/// Which slice sums to one: Rows normalizes along the last axis, Cols along
/// the second-to-last.
enum class SoftmaxAxis { Rows, Cols };

enum class PointwiseFn { Relu, Sigmoid, AddConst, Scale };

enum class CombineMode { Add, Mul, Concat };

// [m x k] * [k x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Batched product of rank-3 tensors, [B x m x k] * [B x k x n], with optional
// transposition of either operand's trailing two axes.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false, bool trans_b = false);

// Rank 2 or 3 input; numerically stabilized by max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, SoftmaxAxis axis);

/// 2-D cross-correlation (no kernel flip) with zero padding.
/// x: [B x C x H x W], w: [O x C x kh x kw] -> [B x O x H' x W'] where
/// H' = (H + 2*pad - kh) / stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad);

// x: [B x C x H x W], bias: [C]
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias);

template <typename T>
Tensor<T> pointwise(const Tensor<T>& x, PointwiseFn fn, T constant = T(0));
template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c);

// Add/Mul need identical shapes; Concat joins along `axis`.
template <typename T>
Tensor<T> combine(const std::vector<Tensor<T>>& xs, CombineMode mode, std::size_t axis = 0);
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis);

// x * gate where every gate dim equals x's or is 1 (rank <= 4, same rank).
template <typename T>
Tensor<T> broadcast_mul(const Tensor<T>& x, const Tensor<T>& gate);

// [B x C x H x W] -> [B x C x 1 x 1]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

// Padding cells never win the max.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride, int pad);

/// Bilinear resampling with the align_corners=false convention: output pixel
/// centre (i + 0.5) maps to input coordinate (i + 0.5) * in / out - 0.5,
/// clamped at the border.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;  // biased (divides by count)
  std::size_t count = 0;    // elements per channel
};

// Per-channel normalization over batch and spatial axes, then affine.
template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                           double eps, BatchStats* stats);

// Normalization with fixed statistics, then affine.
template <typename T>
Tensor<T> batch_norm_infer(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                           std::span<const T> mean, std::span<const T> var, double eps);

// mean(max(z,0) - z*y + log1p(exp(-|z|))); target values in [0, 1].
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target);

}  // namespace scfnet::ops
