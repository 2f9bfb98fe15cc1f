#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "scfnet/attention.hpp"
#include "scfnet/backbone.hpp"
#include "scfnet/image.hpp"
#include "scfnet/params.hpp"

namespace scfnet {

enum class FusionMode { CoAttention, Add };
enum class GacMode { On, Add };
enum class Sharing { Shared, Independent };

struct FusionSwitches {
  FusionMode pcm = FusionMode::CoAttention;
  FusionMode ccm = FusionMode::CoAttention;
  GacMode gac = GacMode::On;
  bool operator==(const FusionSwitches&) const = default;
};

// The four ablation variants, named as in the published ablation table.
enum class Variant { Full, NoPcm, NoCcm, NoGac };
inline constexpr std::array<Variant, 4> kAllVariants{Variant::NoPcm, Variant::NoCcm, Variant::NoGac,
                                                     Variant::Full};
std::string variant_name(Variant v);
FusionSwitches variant_switches(Variant v);

struct ModelConfig {
  BackboneConfig backbone;
  int decoder_dim = 32;
  FusionSwitches fusion;
  Sharing sharing = Sharing::Shared;
  int height = 64;
  int width = 64;
  int gate_ratio = 8;
  int gate_kernel = 7;
  int pcm_reduction = 2;

  static ModelConfig desk() { return {}; }
  static ModelConfig full_scale();
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct DecoderParams {
  std::array<Tensor<T>, 4> proj_w, proj_b;  // Linear(C_i, C)
  Tensor<T> fuse_w, fuse_b;                 // Linear(4C, C)
  Tensor<T> pred_w, pred_b;                 // Linear(C, 1)

  static DecoderParams create(ParamStore<T>& store, const std::string& prefix,
                              const std::array<int, 4>& in_channels, std::size_t dim);
};

/// All-MLP decoder: per-level Linear(C_i, C), bilinear upsampling to the
/// stride-4 grid, concat, Linear(4C, C), Linear(C, 1), bilinear upsampling to
/// out_h x out_w. Returns logits [B x 1 x out_h x out_w].
template <typename T>
Tensor<T> decoder_forward(const FeaturePyramid<T>& pyr, const DecoderParams<T>& p, std::size_t out_h,
                          std::size_t out_w);

template <typename T>
struct EncoderOutput {
  std::array<FeaturePyramid<T>, 3> pyramids;  // branches t-1, t, t+1
};

template <typename T>
struct HeadLogits {
  Tensor<T> prev, next;  // [B x 1 x H x W] for frames t-1 and t+1
};

/// Three-stream co-attention fusion network with decoder heads on the outer
/// branches.
template <typename T>
class ScfNet {
 public:
  ScfNet(const ModelConfig& cfg, std::uint64_t seed);
  ScfNet(const ScfNet&) = delete;
  ScfNet& operator=(const ScfNet&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }
  std::size_t parameter_count() const { return store_.parameter_count(); }

  /// Frames are [B x 3 x H x W]. Stage 1 runs per branch; stages 2-4 run per
  /// branch and are then fused: PCM(left, mid), PCM(right, mid), CCM over the
  /// two middle outputs. Pyramid levels are the post-fusion maps passed through
  /// GAC. The middle pyramid is only built when `with_middle` is set.
  EncoderOutput<T> encode(const Tensor<T>& prev, const Tensor<T>& mid, const Tensor<T>& next, Mode mode,
                          bool with_middle = true) const;

  HeadLogits<T> forward(const Tensor<T>& prev, const Tensor<T>& mid, const Tensor<T>& next, Mode mode) const;

  // Infer-mode probabilities for frames t-1 and t+1 of one triple.
  std::pair<LocalizationMap, LocalizationMap> predict(const Frame& prev, const Frame& mid,
                                                      const Frame& next) const;

  const DecoderParams<T>& decoder(std::size_t head) const;

 private:
  const BackboneParams<T>& backbone(std::size_t branch) const;
  const PcmParams<T>& pcm(std::size_t stage, std::size_t side) const;
  const GacParams<T>& pyramid_gac(std::size_t level, std::size_t branch) const;
  Tensor<T> integrate(const Tensor<T>& x, std::size_t level, std::size_t branch) const;

  ModelConfig cfg_;
  ParamStore<T> store_;
  std::vector<BackboneParams<T>> backbones_;
  std::array<std::vector<PcmParams<T>>, 4> pcms_;  // stages 2-4 use indices 1-3
  std::array<std::vector<CcmParams<T>>, 4> ccms_;
  std::array<std::vector<GacParams<T>>, 4> gacs_;
  std::vector<DecoderParams<T>> decoders_;
};

// Probabilities from logits [1 x 1 x H x W].
template <typename T>
LocalizationMap to_map(const Tensor<T>& logits, std::size_t batch_index, int frame_index);

/// Number of sliding-window predictions each frame of an n-frame video
/// receives. The sequence is padded by one replicated frame on each side and
/// a 3-frame window slides with stride 1; a frame is predicted whenever it
/// sits in the first or last window slot.
std::vector<int> coverage_audit(std::size_t frames);

/// Whole-video inference: the mean of every window prediction for each frame.
template <typename T>
std::vector<LocalizationMap> video_infer(const std::vector<Frame>& frames, const ScfNet<T>& model);

}  // namespace scfnet
