#include "scfnet/backbone.hpp"

#include <cmath>

#include "scfnet/ops.hpp"

namespace scfnet {

void BackboneConfig::validate() const {
  if (stem_channels <= 0) throw ConfigError("backbone stem_channels must be positive");
  for (int c : stage_channels)
    if (c <= 0) throw ConfigError("backbone stage channels must be positive");
  for (int b : blocks_per_stage)
    if (b < 1) throw ConfigError("backbone needs at least one block per stage");
}

void check_frame_dims(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || height % 32 != 0 || width % 32 != 0) {
    throw ArgumentError("frame dims " + std::to_string(height) + "x" + std::to_string(width) +
                        " must be positive multiples of 32");
  }
}

std::array<Shape, 4> pyramid_shapes(const BackboneConfig& cfg, std::size_t batch, std::size_t height,
                                    std::size_t width) {
  cfg.validate();
  check_frame_dims(height, width);
  auto out = [](std::size_t n, std::size_t k, std::size_t stride, std::size_t pad) {
    return (n + 2 * pad - k) / stride + 1;
  };
  std::size_t h = out(out(height, 7, 2, 3), 3, 2, 1);
  std::size_t w = out(out(width, 7, 2, 3), 3, 2, 1);
  std::array<Shape, 4> shapes;
  for (std::size_t s = 0; s < 4; ++s) {
    if (s > 0) {
      h = out(h, 3, 2, 1);
      w = out(w, 3, 2, 1);
    }
    shapes[s] = {batch, static_cast<std::size_t>(cfg.stage_channels[s]), h, w};
  }
  return shapes;
}

std::size_t backbone_parameter_count(const BackboneConfig& cfg) {
  cfg.validate();
  const auto stem = static_cast<std::size_t>(cfg.stem_channels);
  std::size_t total = stem * 3 * 49 + 2 * stem;
  std::size_t in = stem;
  for (std::size_t s = 0; s < 4; ++s) {
    const auto c = static_cast<std::size_t>(cfg.stage_channels[s]);
    for (int b = 0; b < cfg.blocks_per_stage[s]; ++b) {
      total += c * in * 9 + c * c * 9 + 4 * c;
      if ((s > 0 && b == 0) || in != c) total += c * in + 2 * c;
      in = c;
    }
  }
  return total;
}

template <typename T>
NormLayer<T> NormLayer<T>::create(ParamStore<T>& store, const std::string& prefix, std::size_t channels) {
  NormLayer n;
  n.scale = store.constant_parameter(prefix + ".scale", {channels}, T(1));
  n.shift = store.constant_parameter(prefix + ".shift", {channels}, T(0));
  n.running_mean = store.add_buffer(prefix + ".running_mean", Tensor<T>::zeros({channels}));
  n.running_var = store.add_buffer(prefix + ".running_var", Tensor<T>::full({channels}, T(1)));
  n.updates = store.add_buffer(prefix + ".updates", Tensor<T>::zeros({1}));
  return n;
}

template <typename T>
Tensor<T> norm_layer(const Tensor<T>& x, const NormLayer<T>& norm, Mode mode) {
  if (mode == Mode::Infer) {
    if (norm.updates.item() == T(0)) {
      throw ConfigError("norm layer used in infer mode before any running statistics were recorded");
    }
    return ops::batch_norm_infer(x, norm.scale, norm.shift, norm.running_mean.data(),
                                 norm.running_var.data(), kNormEps);
  }
  ops::BatchStats stats;
  auto y = ops::batch_norm_train(x, norm.scale, norm.shift, kNormEps, &stats);
  // Buffers are not on the tape; update them in place.
  auto rm = Tensor<T>(norm.running_mean).mutable_data();
  auto rv = Tensor<T>(norm.running_var).mutable_data();
  const double unbias = stats.count > 1 ? static_cast<double>(stats.count) / (stats.count - 1) : 1.0;
  for (std::size_t c = 0; c < rm.size(); ++c) {
    rm[c] = static_cast<T>((1.0 - kNormMomentum) * rm[c] + kNormMomentum * stats.mean[c]);
    rv[c] = static_cast<T>((1.0 - kNormMomentum) * rv[c] + kNormMomentum * stats.var[c] * unbias);
  }
  Tensor<T>(norm.updates).mutable_data()[0] += T(1);
  return y;
}

template <typename T>
ResidualBlockParams<T> ResidualBlockParams<T>::create(ParamStore<T>& store, const std::string& prefix,
                                                      std::size_t in_ch, std::size_t out_ch, int stride) {
  ResidualBlockParams p;
  p.stride = stride;
  const double gain = std::sqrt(2.0);
  p.conv1 = store.normal_parameter(prefix + ".conv1", {out_ch, in_ch, 3, 3}, in_ch * 9, gain);
  p.norm1 = NormLayer<T>::create(store, prefix + ".norm1", out_ch);
  p.conv2 = store.normal_parameter(prefix + ".conv2", {out_ch, out_ch, 3, 3}, out_ch * 9, gain);
  p.norm2 = NormLayer<T>::create(store, prefix + ".norm2", out_ch);
  if (stride != 1 || in_ch != out_ch) {
    p.proj = store.normal_parameter(prefix + ".proj", {out_ch, in_ch, 1, 1}, in_ch, gain);
    p.proj_norm = NormLayer<T>::create(store, prefix + ".proj_norm", out_ch);
  }
  return p;
}

template <typename T>
Tensor<T> residual_block(const Tensor<T>& x, const ResidualBlockParams<T>& p, Mode mode) {
  if (p.stride != 1 && p.stride != 2) throw ArgumentError("residual block stride must be 1 or 2");
  auto h = ops::relu(norm_layer(ops::conv2d(x, p.conv1, p.stride, 1), p.norm1, mode));
  h = norm_layer(ops::conv2d(h, p.conv2, 1, 1), p.norm2, mode);
  Tensor<T> shortcut = x;
  if (p.proj.defined()) shortcut = norm_layer(ops::conv2d(x, p.proj, p.stride, 0), p.proj_norm, mode);
  return ops::relu(ops::add(h, shortcut));
}

template <typename T>
BackboneParams<T> BackboneParams<T>::create(ParamStore<T>& store, const std::string& prefix,
                                            const BackboneConfig& cfg) {
  cfg.validate();
  BackboneParams p;
  const auto stem = static_cast<std::size_t>(cfg.stem_channels);
  p.stem_conv = store.normal_parameter(prefix + ".stem.conv", {stem, 3, 7, 7}, 3 * 49, std::sqrt(2.0));
  p.stem_norm = NormLayer<T>::create(store, prefix + ".stem.norm", stem);
  std::size_t in_ch = stem;
  for (std::size_t s = 0; s < 4; ++s) {
    const auto out_ch = static_cast<std::size_t>(cfg.stage_channels[s]);
    for (int b = 0; b < cfg.blocks_per_stage[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      p.stages[s].push_back(ResidualBlockParams<T>::create(
          store, prefix + ".stage" + std::to_string(s + 1) + ".block" + std::to_string(b), in_ch, out_ch,
          stride));
      in_ch = out_ch;
    }
  }
  return p;
}

template <typename T>
Tensor<T> backbone_stage(const Tensor<T>& x, const BackboneParams<T>& p, std::size_t index, Mode mode) {
  Tensor<T> h = x;
  for (const auto& block : p.stages.at(index)) h = residual_block(h, block, mode);
  return h;
}

template <typename T>
Tensor<T> backbone_stem(const Tensor<T>& frame, const BackboneParams<T>& p, Mode mode) {
  if (frame.rank() != 4 || frame.dim(1) != 3) {
    throw ShapeError("backbone expects [B x 3 x H x W] frames, got " + shape_str(frame.shape()));
  }
  check_frame_dims(frame.dim(2), frame.dim(3));
  auto h = ops::relu(norm_layer(ops::conv2d(frame, p.stem_conv, 2, 3), p.stem_norm, mode));
  h = ops::max_pool2d(h, 3, 2, 1);
  return backbone_stage(h, p, 0, mode);
}

template <typename T>
FeaturePyramid<T> backbone_forward(const Tensor<T>& frame, const BackboneParams<T>& p, Mode mode) {
  FeaturePyramid<T> pyr;
  pyr.levels[0] = backbone_stem(frame, p, mode);
  for (std::size_t s = 1; s < 4; ++s) pyr.levels[s] = backbone_stage(pyr.levels[s - 1], p, s, mode);
  return pyr;
}

#define SCFNET_BACKBONE_INSTANTIATE(T)                                                           \
  template struct NormLayer<T>;                                                                  \
  template struct ResidualBlockParams<T>;                                                        \
  template struct BackboneParams<T>;                                                             \
  template Tensor<T> norm_layer(const Tensor<T>&, const NormLayer<T>&, Mode);                    \
  template Tensor<T> residual_block(const Tensor<T>&, const ResidualBlockParams<T>&, Mode);      \
  template Tensor<T> backbone_stage(const Tensor<T>&, const BackboneParams<T>&, std::size_t, Mode); \
  template Tensor<T> backbone_stem(const Tensor<T>&, const BackboneParams<T>&, Mode);            \
  template FeaturePyramid<T> backbone_forward(const Tensor<T>&, const BackboneParams<T>&, Mode);

SCFNET_BACKBONE_INSTANTIATE(float)
SCFNET_BACKBONE_INSTANTIATE(double)

}  // namespace scfnet
