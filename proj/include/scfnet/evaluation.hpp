#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "scfnet/checkpoint.hpp"
#include "scfnet/metrics.hpp"
#include "scfnet/model.hpp"
#include "scfnet/synth.hpp"

namespace scfnet {

// Runs video_infer on every video after degrading its frames at `quality`
// (0 = pristine). Videos are resized to the model input first.
template <typename T>
std::vector<VideoPrediction> predict_videos(const ScfNet<T>& model, const std::vector<VideoData>& videos,
                                            int quality = 0);

template <typename T>
MetricsReport evaluate_model(const ScfNet<T>& model, const std::vector<VideoData>& videos, int quality = 0);

inline const std::vector<int> kDefaultSweep{0, 15, 23, 30};

// One row per quality: mean IoU/F1 over videos at the fixed threshold.
template <typename T>
std::vector<QualityRow> robustness_sweep(const ScfNet<T>& model, const std::vector<VideoData>& videos,
                                         const std::vector<int>& qualities = kDefaultSweep);

// Same, for a model restored in the checkpoint's precision.
std::vector<QualityRow> robustness_sweep(const Checkpoint& ckpt, const std::vector<VideoData>& videos,
                                         const std::vector<int>& qualities = kDefaultSweep);

// Evaluation at the fixed threshold for a model restored from a checkpoint.
MetricsReport evaluate_checkpoint(const Checkpoint& ckpt, const std::vector<VideoData>& videos, int quality = 0);

struct AblationRow {
  std::string variant;
  std::size_t parameters = 0;
  double iou = 0, f1 = 0;
};

// Rows in the order given. Missing checkpoints are reported together in one
// IoError naming every affected variant.
std::vector<AblationRow> ablation_table(const std::vector<std::pair<Variant, std::filesystem::path>>& checkpoints,
                                        const std::vector<VideoData>& videos);

// `variant,params,iou,f1`
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

}  // namespace scfnet
