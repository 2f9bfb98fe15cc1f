#pragma once

#include <array>
#include <string>
#include <vector>

#include "scfnet/params.hpp"
#include "scfnet/tensor.hpp"

namespace scfnet {

inline constexpr double kNormEps = 1e-5;
inline constexpr double kNormMomentum = 0.1;

/// Residual encoder layout: a stem (7x7 stride-2 conv, norm, relu, 3x3
/// stride-2 max pool) followed by four stages of basic residual blocks. The
/// first block of stages 2-4 downsamples by 2, giving cumulative strides
/// 4, 8, 16, 32.
struct BackboneConfig {
  int stem_channels = 16;
  std::array<int, 4> stage_channels{16, 32, 64, 128};
  std::array<int, 4> blocks_per_stage{1, 1, 1, 1};

  static BackboneConfig desk() { return {}; }
  // ResNet101 stage widths and block counts, built from basic blocks.
  static BackboneConfig full_scale() { return {64, {256, 512, 1024, 2048}, {3, 4, 23, 3}}; }

  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

inline constexpr std::array<int, 4> kStageStrides{4, 8, 16, 32};

template <typename T>
struct FeaturePyramid {
  std::array<Tensor<T>, 4> levels;  // strides 4, 8, 16, 32
};

/// Batch normalization with running statistics.
///
/// Train mode normalizes each channel over batch and spatial positions and
/// folds the batch statistics into the running estimates:
///   running_mean <- (1 - m) * running_mean + m * batch_mean
///   running_var  <- (1 - m) * running_var  + m * batch_var * n / (n - 1)
/// with m = kNormMomentum and n elements per channel (the unbiased factor is
/// skipped when n == 1). Infer mode uses the running estimates and fails until
/// at least one train-mode pass has been recorded.
template <typename T>
struct NormLayer {
  Tensor<T> scale, shift;
  Tensor<T> running_mean, running_var, updates;

  static NormLayer create(ParamStore<T>& store, const std::string& prefix, std::size_t channels);
};

template <typename T>
Tensor<T> norm_layer(const Tensor<T>& x, const NormLayer<T>& norm, Mode mode);

template <typename T>
struct ResidualBlockParams {
  Tensor<T> conv1, conv2;
  NormLayer<T> norm1, norm2;
  Tensor<T> proj;  // undefined for identity shortcuts
  NormLayer<T> proj_norm;
  int stride = 1;

  static ResidualBlockParams create(ParamStore<T>& store, const std::string& prefix, std::size_t in_ch,
                                    std::size_t out_ch, int stride);
};

// relu(norm(conv(relu(norm(conv(x))))) + shortcut(x))
template <typename T>
Tensor<T> residual_block(const Tensor<T>& x, const ResidualBlockParams<T>& p, Mode mode);

template <typename T>
struct BackboneParams {
  Tensor<T> stem_conv;
  NormLayer<T> stem_norm;
  std::array<std::vector<ResidualBlockParams<T>>, 4> stages;

  static BackboneParams create(ParamStore<T>& store, const std::string& prefix, const BackboneConfig& cfg);
};

// Stem plus stage 1: the [B x C1 x H/4 x W/4] map.
template <typename T>
Tensor<T> backbone_stem(const Tensor<T>& frame, const BackboneParams<T>& p, Mode mode);

// Runs stage `index` (0-based; 1..3 downsample).
template <typename T>
Tensor<T> backbone_stage(const Tensor<T>& x, const BackboneParams<T>& p, std::size_t index, Mode mode);

// Independent single-branch pass: F1..F4 without any fusion.
template <typename T>
FeaturePyramid<T> backbone_forward(const Tensor<T>& frame, const BackboneParams<T>& p, Mode mode);

void check_frame_dims(std::size_t height, std::size_t width);

// Shapes of F1..F4 for a [batch x 3 x height x width] input, from the conv
// output-size formula alone.
std::array<Shape, 4> pyramid_shapes(const BackboneConfig& cfg, std::size_t batch, std::size_t height,
                                    std::size_t width);

// Learnable scalars in one backbone stream (norm buffers excluded).
std::size_t backbone_parameter_count(const BackboneConfig& cfg);

}  // namespace scfnet
