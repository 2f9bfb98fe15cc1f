#include "scfnet/model.hpp"

#include <algorithm>
#include <cmath>

#include "scfnet/ops.hpp"

namespace scfnet {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Full:
      return "SCFNet";
    case Variant::NoPcm:
      return "w/o. PCM";
    case Variant::NoCcm:
      return "w/o. CCM";
    case Variant::NoGac:
      return "w/o. GAC";
  }
  return "?";
}

FusionSwitches variant_switches(Variant v) {
  FusionSwitches s;
  if (v == Variant::NoPcm) s.pcm = FusionMode::Add;
  if (v == Variant::NoCcm) s.ccm = FusionMode::Add;
  if (v == Variant::NoGac) s.gac = GacMode::Add;
  return s;
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig cfg;
  cfg.backbone = BackboneConfig::full_scale();
  cfg.decoder_dim = 256;
  cfg.height = 512;
  cfg.width = 512;
  return cfg;
}

void ModelConfig::validate() const {
  backbone.validate();
  if (decoder_dim <= 0) throw ConfigError("decoder_dim must be positive");
  if (height <= 0 || width <= 0 || height % 32 != 0 || width % 32 != 0) {
    throw ConfigError("model input size " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be positive multiples of 32");
  }
  if (gate_ratio < 1) throw ConfigError("gate_ratio must be >= 1");
  if (gate_kernel < 1 || gate_kernel % 2 == 0) throw ConfigError("gate_kernel must be odd and positive");
  if (pcm_reduction < 1) throw ConfigError("pcm_reduction must be >= 1");
}

template <typename T>
DecoderParams<T> DecoderParams<T>::create(ParamStore<T>& store, const std::string& prefix,
                                          const std::array<int, 4>& in_channels, std::size_t dim) {
  DecoderParams p;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto c = static_cast<std::size_t>(in_channels[i]);
    const std::string name = prefix + ".proj" + std::to_string(i + 1);
    p.proj_w[i] = store.normal_parameter(name + ".weight", {dim, c, 1, 1}, c, 1.0);
    p.proj_b[i] = store.constant_parameter(name + ".bias", {dim}, T(0));
  }
  p.fuse_w = store.normal_parameter(prefix + ".fuse.weight", {dim, 4 * dim, 1, 1}, 4 * dim, 1.0);
  p.fuse_b = store.constant_parameter(prefix + ".fuse.bias", {dim}, T(0));
  p.pred_w = store.normal_parameter(prefix + ".pred.weight", {1, dim, 1, 1}, dim, 1.0);
  p.pred_b = store.constant_parameter(prefix + ".pred.bias", {1}, T(0));
  return p;
}

template <typename T>
Tensor<T> decoder_forward(const FeaturePyramid<T>& pyr, const DecoderParams<T>& p, std::size_t out_h,
                          std::size_t out_w) {
  const auto& f1 = pyr.levels[0];
  if (f1.rank() != 4) throw ShapeError("decoder expects rank-4 pyramid levels, got " + shape_str(f1.shape()));
  const std::size_t grid_h = f1.dim(2), grid_w = f1.dim(3);
  if (grid_h * 4 != out_h || grid_w * 4 != out_w) {
    throw ShapeError("decoder level 1 " + shape_str(f1.shape()) + " is not at stride 4 of " +
                     std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  std::vector<Tensor<T>> projected;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& f = pyr.levels[i];
    const std::size_t stride = std::size_t{1} << i;
    if (f.rank() != 4 || f.dim(0) != f1.dim(0) || f.dim(1) != p.proj_w[i].dim(1) || f.dim(2) * stride != grid_h ||
        f.dim(3) * stride != grid_w) {
      throw ShapeError("decoder pyramid level " + std::to_string(i + 1) + " has shape " + shape_str(f.shape()));
    }
    auto h = ops::add_channel_bias(ops::conv2d(f, p.proj_w[i], 1, 0), p.proj_b[i]);
    if (stride != 1) h = ops::bilinear_upsample(h, grid_h, grid_w);
    projected.push_back(h);
  }
  auto fused = ops::add_channel_bias(ops::conv2d(ops::concat(projected, 1), p.fuse_w, 1, 0), p.fuse_b);
  auto mask = ops::add_channel_bias(ops::conv2d(fused, p.pred_w, 1, 0), p.pred_b);
  return ops::bilinear_upsample(mask, out_h, out_w);
}

template <typename T>
ScfNet<T>::ScfNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), store_(seed) {
  cfg_.validate();
  const bool shared = cfg_.sharing == Sharing::Shared;
  const std::size_t streams = shared ? 1 : 3;
  for (std::size_t b = 0; b < streams; ++b) {
    backbones_.push_back(BackboneParams<T>::create(store_, "backbone" + std::to_string(b), cfg_.backbone));
  }
  const auto& chans = cfg_.backbone.stage_channels;
  for (std::size_t s = 1; s < 4; ++s) {
    const auto c = static_cast<std::size_t>(chans[s]);
    const std::string stage = "stage" + std::to_string(s + 1);
    if (cfg_.fusion.pcm == FusionMode::CoAttention) {
      for (std::size_t side = 0; side < (shared ? 1u : 2u); ++side) {
        pcms_[s].push_back(PcmParams<T>::create(store_, "pcm." + stage + "." + std::to_string(side), c,
                                                cfg_.pcm_reduction, cfg_.gate_ratio, cfg_.gate_kernel));
      }
    }
    if (cfg_.fusion.ccm == FusionMode::CoAttention) {
      // Without GAC the CCM keeps only its GAF block.
      auto ccm = CcmParams<T>{};
      if (cfg_.fusion.gac == GacMode::On) {
        ccm = CcmParams<T>::create(store_, "ccm." + stage, c, cfg_.gate_ratio, cfg_.gate_kernel);
      } else {
        ccm.gaf = GateParams<T>::create(store_, "ccm." + stage + ".gaf", c, cfg_.gate_ratio, cfg_.gate_kernel);
      }
      ccms_[s].push_back(std::move(ccm));
    }
  }
  if (cfg_.fusion.gac == GacMode::On) {
    for (std::size_t l = 0; l < 4; ++l) {
      for (std::size_t b = 0; b < streams; ++b) {
        gacs_[l].push_back(GateParams<T>::create(store_, "gac.level" + std::to_string(l + 1) + "." +
                                                             std::to_string(b),
                                                 static_cast<std::size_t>(chans[l]), cfg_.gate_ratio,
                                                 cfg_.gate_kernel));
      }
    }
  }
  for (std::size_t h = 0; h < (shared ? 1u : 2u); ++h) {
    decoders_.push_back(DecoderParams<T>::create(store_, "decoder" + std::to_string(h), chans,
                                                 static_cast<std::size_t>(cfg_.decoder_dim)));
  }
}

template <typename T>
const BackboneParams<T>& ScfNet<T>::backbone(std::size_t branch) const {
  return backbones_.size() == 1 ? backbones_[0] : backbones_.at(branch);
}

template <typename T>
const PcmParams<T>& ScfNet<T>::pcm(std::size_t stage, std::size_t side) const {
  const auto& v = pcms_.at(stage);
  return v.size() == 1 ? v[0] : v.at(side);
}

template <typename T>
const GacParams<T>& ScfNet<T>::pyramid_gac(std::size_t level, std::size_t branch) const {
  const auto& v = gacs_.at(level);
  return v.size() == 1 ? v[0] : v.at(branch);
}

template <typename T>
const DecoderParams<T>& ScfNet<T>::decoder(std::size_t head) const {
  return decoders_.size() == 1 ? decoders_[0] : decoders_.at(head);
}

template <typename T>
Tensor<T> ScfNet<T>::integrate(const Tensor<T>& x, std::size_t level, std::size_t branch) const {
  if (cfg_.fusion.gac == GacMode::Add) return x;
  return gac_enhance(x, pyramid_gac(level, branch));
}

template <typename T>
EncoderOutput<T> ScfNet<T>::encode(const Tensor<T>& prev, const Tensor<T>& mid, const Tensor<T>& next, Mode mode,
                                   bool with_middle) const {
  const std::array<const Tensor<T>*, 3> frames{&prev, &mid, &next};
  for (const auto* f : frames) {
    if (f->rank() != 4 || f->dim(1) != 3 || f->dim(2) != static_cast<std::size_t>(cfg_.height) ||
        f->dim(3) != static_cast<std::size_t>(cfg_.width) || f->dim(0) != prev.dim(0)) {
      throw ShapeError("encoder expects frames [B x 3 x " + std::to_string(cfg_.height) + " x " +
                       std::to_string(cfg_.width) + "], got " + shape_str(f->shape()));
    }
  }
  EncoderOutput<T> out;
  std::array<Tensor<T>, 3> state;
  for (std::size_t b = 0; b < 3; ++b) {
    state[b] = backbone_stem(*frames[b], backbone(b), mode);
  }
  auto record_level = [&](std::size_t level) {
    for (std::size_t b = 0; b < 3; ++b) {
      if (b == 1 && !with_middle) continue;
      out.pyramids[b].levels[level] = integrate(state[b], level, b);
    }
  };
  record_level(0);
  for (std::size_t s = 1; s < 4; ++s) {
    std::array<Tensor<T>, 3> x;
    for (std::size_t b = 0; b < 3; ++b) x[b] = backbone_stage(state[b], backbone(b), s, mode);

    Tensor<T> left, right, mid_from_left, mid_from_right;
    if (cfg_.fusion.pcm == FusionMode::CoAttention) {
      std::tie(left, mid_from_left) = pcm_fuse(x[0], x[1], pcm(s, 0));
      std::tie(right, mid_from_right) = pcm_fuse(x[2], x[1], pcm(s, 1));
    } else {
      left = ops::add(x[0], x[1]);
      mid_from_left = ops::add(x[1], x[0]);
      right = ops::add(x[2], x[1]);
      mid_from_right = ops::add(x[1], x[2]);
    }
    Tensor<T> middle;
    if (cfg_.fusion.ccm == FusionMode::CoAttention) {
      middle = ccm_fuse(mid_from_left, mid_from_right, ccms_[s].front(), cfg_.fusion.gac == GacMode::On);
    } else {
      middle = ops::add(mid_from_left, mid_from_right);
    }
    state = {left, middle, right};
    record_level(s);
  }
  return out;
}

template <typename T>
HeadLogits<T> ScfNet<T>::forward(const Tensor<T>& prev, const Tensor<T>& mid, const Tensor<T>& next,
                                 Mode mode) const {
  const auto enc = encode(prev, mid, next, mode, false);
  const auto h = static_cast<std::size_t>(cfg_.height), w = static_cast<std::size_t>(cfg_.width);
  return {decoder_forward(enc.pyramids[0], decoder(0), h, w), decoder_forward(enc.pyramids[2], decoder(1), h, w)};
}

template <typename T>
LocalizationMap to_map(const Tensor<T>& logits, std::size_t batch_index, int frame_index) {
  if (logits.rank() != 4 || logits.dim(1) != 1 || batch_index >= logits.dim(0)) {
    throw ShapeError("to_map expects [B x 1 x H x W] logits, got " + shape_str(logits.shape()));
  }
  LocalizationMap m;
  m.height = logits.dim(2);
  m.width = logits.dim(3);
  m.frame_index = frame_index;
  const std::size_t hw = m.height * m.width;
  m.probs.resize(hw);
  const T* src = logits.data().data() + batch_index * hw;
  for (std::size_t i = 0; i < hw; ++i) {
    const double z = static_cast<double>(src[i]);
    m.probs[i] = static_cast<float>(z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)));
  }
  return m;
}

template <typename T>
std::pair<LocalizationMap, LocalizationMap> ScfNet<T>::predict(const Frame& prev, const Frame& mid,
                                                               const Frame& next) const {
  NoGradScope<T> no_grad;
  const auto logits = forward(stack_frames<T>({&prev}), stack_frames<T>({&mid}), stack_frames<T>({&next}),
                              Mode::Infer);
  return {to_map(logits.prev, 0, 0), to_map(logits.next, 0, 2)};
}

std::vector<int> coverage_audit(std::size_t frames) {
  if (frames == 0) throw ArgumentError("coverage_audit of an empty video");
  std::vector<int> counts(frames, 0);
  for (std::size_t k = 0; k < frames; ++k) {
    counts[k == 0 ? 0 : k - 1] += 1;
    counts[std::min(k + 1, frames - 1)] += 1;
  }
  return counts;
}

template <typename T>
std::vector<LocalizationMap> video_infer(const std::vector<Frame>& frames, const ScfNet<T>& model) {
  if (frames.empty()) throw ArgumentError("video_infer needs at least one frame");
  const std::size_t n = frames.size();
  const auto& cfg = model.config();
  const auto h = static_cast<std::size_t>(cfg.height), w = static_cast<std::size_t>(cfg.width);
  for (const auto& f : frames) {
    if (f.height != h || f.width != w) {
      throw ArgumentError("video_infer frames must be resized to " + std::to_string(h) + "x" + std::to_string(w));
    }
  }
  std::vector<std::vector<double>> acc(n, std::vector<double>(h * w, 0.0));
  std::vector<int> hits(n, 0);
  NoGradScope<T> no_grad;
  constexpr std::size_t kWindowsPerBatch = 4;
  for (std::size_t start = 0; start < n; start += kWindowsPerBatch) {
    const std::size_t end = std::min(n, start + kWindowsPerBatch);
    std::vector<const Frame*> prev, mid, next;
    for (std::size_t k = start; k < end; ++k) {
      prev.push_back(&frames[k == 0 ? 0 : k - 1]);
      mid.push_back(&frames[k]);
      next.push_back(&frames[std::min(k + 1, n - 1)]);
    }
    const auto logits = model.forward(stack_frames<T>(prev), stack_frames<T>(mid), stack_frames<T>(next), Mode::Infer);
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t slot = k - start;
      const std::size_t first = k == 0 ? 0 : k - 1;
      const std::size_t last = std::min(k + 1, n - 1);
      const auto m_prev = to_map(logits.prev, slot, static_cast<int>(first));
      const auto m_next = to_map(logits.next, slot, static_cast<int>(last));
      for (std::size_t i = 0; i < h * w; ++i) {
        acc[first][i] += m_prev.probs[i];
        acc[last][i] += m_next.probs[i];
      }
      ++hits[first];
      ++hits[last];
    }
  }
  std::vector<LocalizationMap> maps(n);
  for (std::size_t f = 0; f < n; ++f) {
    maps[f].height = h;
    maps[f].width = w;
    maps[f].frame_index = static_cast<int>(f);
    maps[f].probs.resize(h * w);
    for (std::size_t i = 0; i < h * w; ++i) {
      maps[f].probs[i] = static_cast<float>(acc[f][i] / hits[f]);
    }
  }
  return maps;
}

#define SCFNET_MODEL_INSTANTIATE(T)                                                                  \
  template struct DecoderParams<T>;                                                                  \
  template class ScfNet<T>;                                                                          \
  template Tensor<T> decoder_forward(const FeaturePyramid<T>&, const DecoderParams<T>&, std::size_t, \
                                     std::size_t);                                                   \
  template LocalizationMap to_map(const Tensor<T>&, std::size_t, int);                               \
  template std::vector<LocalizationMap> video_infer(const std::vector<Frame>&, const ScfNet<T>&);

SCFNET_MODEL_INSTANTIATE(float)
SCFNET_MODEL_INSTANTIATE(double)

}  // namespace scfnet
