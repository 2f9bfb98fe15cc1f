#include "scfnet/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "scfnet/errors.hpp"

namespace scfnet {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

double iou(const ConfusionCounts& c) {
  const std::uint64_t d = c.tp + c.fp + c.fn;
  return d == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(d);
}

double f1(const ConfusionCounts& c) {
  const std::uint64_t d = 2 * c.tp + c.fp + c.fn;
  return d == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(d);
}

ConfusionCounts count_pair(const LocalizationMap& map, const Mask& gt, double threshold) {
  if (map.height != gt.height || map.width != gt.width || map.probs.size() != gt.bits.size()) {
    throw ArgumentError("score_pair: map " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                        " vs mask " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw ArgumentError("score_pair threshold must lie in (0, 1)");
  ConfusionCounts c;
  for (std::size_t i = 0; i < gt.bits.size(); ++i) {
    const bool pred = static_cast<double>(map.probs[i]) >= threshold;
    const bool truth = gt.bits[i] != 0;
    if (pred && truth) ++c.tp;
    else if (pred) ++c.fp;
    else if (truth) ++c.fn;
    else ++c.tn;
  }
  return c;
}

PairScore score_pair(const LocalizationMap& map, const Mask& gt, double threshold) {
  const auto c = count_pair(map, gt, threshold);
  return {c, iou(c), f1(c)};
}

std::vector<double> threshold_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 19; ++k) g.push_back(k / 20.0);
  return g;
}

PairScore score_video(const std::vector<LocalizationMap>& maps, const std::vector<Mask>& gts, double threshold) {
  if (maps.size() != gts.size()) {
    throw ArgumentError("video has " + std::to_string(maps.size()) + " maps but " + std::to_string(gts.size()) +
                        " masks");
  }
  ConfusionCounts total;
  for (std::size_t i = 0; i < maps.size(); ++i) total += count_pair(maps[i], gts[i], threshold);
  return {total, iou(total), f1(total)};
}

ThresholdChoice best_threshold(const std::vector<LocalizationMap>& maps, const std::vector<Mask>& gts,
                               const std::vector<double>& grid) {
  if (grid.empty()) throw ArgumentError("best_threshold needs a nonempty grid");
  ThresholdChoice best{0, 0, -1};
  for (double thr : grid) {
    const auto s = score_video(maps, gts, thr);
    if (s.f1 > best.f1) best = {thr, s.iou, s.f1};
  }
  return best;
}

MetricsReport evaluate_predictions(const std::vector<VideoPrediction>& videos) {
  MetricsReport r;
  for (const auto& v : videos) {
    const auto fixed = score_video(v.maps, v.gts, kFixedThreshold);
    const auto best = best_threshold(v.maps, v.gts);
    r.fixed.push_back({v.id, kFixedThreshold, fixed.iou, fixed.f1});
    r.best.push_back({v.id, best.threshold, best.iou, best.f1});
  }
  if (!videos.empty()) {
    for (std::size_t i = 0; i < videos.size(); ++i) {
      r.fixed_mean_iou += r.fixed[i].iou;
      r.fixed_mean_f1 += r.fixed[i].f1;
      r.best_mean_iou += r.best[i].iou;
      r.best_mean_f1 += r.best[i].f1;
    }
    const double n = static_cast<double>(videos.size());
    r.fixed_mean_iou /= n;
    r.fixed_mean_f1 /= n;
    r.best_mean_iou /= n;
    r.best_mean_f1 /= n;
  }
  return r;
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_video_csv(const std::filesystem::path& path, const std::vector<VideoRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "video,thr,iou,f1\n";
  for (const auto& r : rows)
    out << r.video << ',' << format_metric(r.threshold) << ',' << format_metric(r.iou) << ',' << format_metric(r.f1)
        << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void write_quality_csv(const std::filesystem::path& path, const std::vector<QualityRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "quality,mean_iou,mean_f1\n";
  for (const auto& r : rows) out << r.quality << ',' << format_metric(r.mean_iou) << ',' << format_metric(r.mean_f1) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace scfnet
