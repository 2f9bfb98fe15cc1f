#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <ostream>
#include <vector>

#include "scfnet/checkpoint.hpp"
#include "scfnet/config.hpp"
#include "scfnet/model.hpp"
#include "scfnet/synth.hpp"

namespace scfnet {

// Frames resized bilinearly, masks by nearest neighbour.
VideoData resize_video(const VideoData& v, std::size_t height, std::size_t width);

/// Every consecutive (t-1, t, t+1) window of every video, in video order.
class TripleSet {
 public:
  struct Ref {
    std::size_t video, centre;
  };

  // Videos shorter than 3 frames are skipped; a note goes to `warn` if set.
  TripleSet(std::vector<VideoData> videos, std::size_t height, std::size_t width, std::ostream* warn = nullptr);

  std::size_t size() const { return refs_.size(); }
  const Ref& ref(std::size_t i) const { return refs_.at(i); }
  FrameTriple triple(std::size_t i) const;
  const std::vector<VideoData>& videos() const { return videos_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

 private:
  std::vector<VideoData> videos_;
  std::vector<Ref> refs_;
  std::size_t height_, width_;
};

TripleSet load_triples(const std::filesystem::path& dataset_root, std::size_t height, std::size_t width,
                       std::ostream* warn = nullptr);

// Permutation of 0..n-1 that depends only on (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

// Consecutive chunks of `order`; the last one may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, std::uint64_t seed,
                                                    std::uint64_t epoch);

/// Quality level per sample, 0 meaning pristine. Exactly
/// round(fraction * n) samples, picked by a seeded permutation, are degraded;
/// each draws its level from `levels`. The plan is fixed for the whole run.
std::vector<int> augmentation_plan(std::size_t n, double fraction, const std::vector<int>& levels,
                                   std::uint64_t seed);

// Applies the same degradation to all three frames; masks are untouched.
FrameTriple degrade_triple(const FrameTriple& t, int quality);

// Mean binary cross-entropy in logits form; targets must be 0 or 1.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& target);

struct SgdHyper {
  double lr = 1e-4, momentum = 0.9, weight_decay = 1e-5;
};

// One zero-initialized momentum buffer per parameter, named after it.
template <typename T>
struct SgdState {
  std::vector<NamedTensor<T>> velocity;

  static SgdState zeros_like(const std::vector<NamedTensor<T>>& params);
};

/// v <- momentum * v + g + weight_decay * w;  w <- w - lr * v.
/// Parameters without a gradient use g = 0.
template <typename T>
void sgd_step(const std::vector<NamedTensor<T>>& params, SgdState<T>& state, const SgdHyper& h);

// lr0 * factor^floor(epoch / every); every = 0 means constant.
double lr_at_epoch(int epoch, double lr0, int every = 2, double factor = 0.5);

struct EpochLog {
  std::uint32_t epoch = 0;
  std::uint64_t step = 0;
  double lr = 0, loss = 0, val_iou = 0, val_f1 = 0;
};

// `epoch,step,lr,loss,val_iou,val_f1`
std::string format_log_row(const EpochLog& row);
inline constexpr const char* kTrainLogHeader = "epoch,step,lr,loss,val_iou,val_f1";

struct TrainOptions {
  // Written after every epoch and when training stops; empty disables it.
  std::filesystem::path checkpoint;
  // Defaults to `<checkpoint>.csv` when a checkpoint path is set.
  std::filesystem::path log_csv;
  // Continue from this snapshot; configs must match the run's.
  const Checkpoint* resume = nullptr;
  // Scored at the end of every epoch; the training videos when null.
  const std::vector<VideoData>* validation = nullptr;
  std::ostream* progress = nullptr;
};

template <typename T>
struct TrainResult {
  std::unique_ptr<ScfNet<T>> model;
  SgdState<T> optimizer;
  std::vector<EpochLog> log;
  std::uint32_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;   // completed optimizer steps
  std::vector<double> step_losses;

  Checkpoint checkpoint(const TrainConfig& train) const;
};

/// Runs the training loop. Each step takes the next batch of the epoch's
/// seeded order, degrades the planned samples, averages the BCE of both heads
/// against the outer masks, backpropagates and applies sgd_step with the
/// epoch's learning rate. A non-finite loss or gradient aborts with a
/// TrainingError giving step, lr and gradient norm.
template <typename T>
TrainResult<T> train(const TrainConfig& tc, const ModelConfig& mc, const TripleSet& data,
                     const TrainOptions& opts = {});

template <typename T>
TrainResult<T> train(const TrainConfig& tc, const ModelConfig& mc, const std::filesystem::path& dataset_root,
                     const TrainOptions& opts = {});

template <typename T>
std::unique_ptr<ScfNet<T>> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace scfnet
