#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scfnet/image.hpp"

namespace scfnet {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  bool operator==(const ConfusionCounts&) const = default;
};

// tp / (tp + fp + fn) and 2tp / (2tp + fp + fn). When prediction and ground
// truth are both empty (tp + fp + fn == 0) both scores are 1.
double iou(const ConfusionCounts& c);
double f1(const ConfusionCounts& c);

struct PairScore {
  ConfusionCounts counts;
  double iou = 0, f1 = 0;
};

// Confusion counts of (probs >= threshold) against the mask.
ConfusionCounts count_pair(const LocalizationMap& map, const Mask& gt, double threshold);
PairScore score_pair(const LocalizationMap& map, const Mask& gt, double threshold);

inline constexpr double kFixedThreshold = 0.5;

// 0.05, 0.10, ..., 0.95
std::vector<double> threshold_grid();

// A video's frames are pooled: counts are summed over frames before scoring.
PairScore score_video(const std::vector<LocalizationMap>& maps, const std::vector<Mask>& gts, double threshold);

struct ThresholdChoice {
  double threshold = 0, iou = 0, f1 = 0;
};

// Grid threshold with the highest video F1; ties go to the lowest threshold.
ThresholdChoice best_threshold(const std::vector<LocalizationMap>& maps, const std::vector<Mask>& gts,
                               const std::vector<double>& grid = threshold_grid());

struct VideoPrediction {
  std::string id;
  std::vector<LocalizationMap> maps;
  std::vector<Mask> gts;
};

struct VideoRow {
  std::string video;
  double threshold = 0, iou = 0, f1 = 0;
};

struct QualityRow {
  int quality = 0;
  double mean_iou = 0, mean_f1 = 0;
};

struct MetricsReport {
  std::vector<VideoRow> fixed;  // at kFixedThreshold
  std::vector<VideoRow> best;   // at each video's best grid threshold
  double fixed_mean_iou = 0, fixed_mean_f1 = 0;
  double best_mean_iou = 0, best_mean_f1 = 0;
  std::vector<QualityRow> quality;
};

// Per-video rows in input order; means are over videos.
MetricsReport evaluate_predictions(const std::vector<VideoPrediction>& videos);

// `video,thr,iou,f1`
void write_video_csv(const std::filesystem::path& path, const std::vector<VideoRow>& rows);
// `quality,mean_iou,mean_f1`
void write_quality_csv(const std::filesystem::path& path, const std::vector<QualityRow>& rows);

std::string format_metric(double v);

}  // namespace scfnet
