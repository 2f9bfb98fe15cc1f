#include "scfnet/evaluation.hpp"

#include <fstream>

#include "scfnet/degrade.hpp"
#include "scfnet/errors.hpp"
#include "scfnet/pipeline.hpp"

namespace scfnet {

template <typename T>
std::vector<VideoPrediction> predict_videos(const ScfNet<T>& model, const std::vector<VideoData>& videos,
                                            int quality) {
  const auto h = static_cast<std::size_t>(model.config().height);
  const auto w = static_cast<std::size_t>(model.config().width);
  std::vector<VideoPrediction> out;
  for (const auto& v : videos) {
    if (v.frames.size() != v.masks.size()) {
      throw ArgumentError("video " + v.id + " has " + std::to_string(v.frames.size()) + " frames but " +
                          std::to_string(v.masks.size()) + " masks");
    }
    auto sized = resize_video(v, h, w);
    for (auto& f : sized.frames) f = degrade_quality(f, quality);
    out.push_back({v.id, video_infer(sized.frames, model), std::move(sized.masks)});
  }
  return out;
}

template <typename T>
MetricsReport evaluate_model(const ScfNet<T>& model, const std::vector<VideoData>& videos, int quality) {
  return evaluate_predictions(predict_videos(model, videos, quality));
}

template <typename T>
std::vector<QualityRow> robustness_sweep(const ScfNet<T>& model, const std::vector<VideoData>& videos,
                                         const std::vector<int>& qualities) {
  for (int q : qualities) degrade_quality(Frame(1, 1), q);  // reject bad levels before any work
  std::vector<QualityRow> rows;
  for (int q : qualities) {
    const auto r = evaluate_model(model, videos, q);
    rows.push_back({q, r.fixed_mean_iou, r.fixed_mean_f1});
  }
  return rows;
}

std::vector<QualityRow> robustness_sweep(const Checkpoint& ckpt, const std::vector<VideoData>& videos,
                                         const std::vector<int>& qualities) {
  if (ckpt.precision == Precision::F64) return robustness_sweep(*model_from_checkpoint<double>(ckpt), videos, qualities);
  return robustness_sweep(*model_from_checkpoint<float>(ckpt), videos, qualities);
}

MetricsReport evaluate_checkpoint(const Checkpoint& ckpt, const std::vector<VideoData>& videos, int quality) {
  if (ckpt.precision == Precision::F64) return evaluate_model(*model_from_checkpoint<double>(ckpt), videos, quality);
  return evaluate_model(*model_from_checkpoint<float>(ckpt), videos, quality);
}

std::vector<AblationRow> ablation_table(const std::vector<std::pair<Variant, std::filesystem::path>>& checkpoints,
                                        const std::vector<VideoData>& videos) {
  std::string missing;
  for (const auto& [variant, path] : checkpoints) {
    if (!std::filesystem::exists(path)) missing += (missing.empty() ? "" : ", ") + variant_name(variant) + " (" + path.string() + ")";
  }
  if (!missing.empty()) throw IoError("missing checkpoint for variant " + missing);
  std::vector<AblationRow> rows;
  for (const auto& [variant, path] : checkpoints) {
    const auto ckpt = load_checkpoint(path);
    if (!(ckpt.model.fusion == variant_switches(variant))) {
      throw ConfigError("checkpoint " + path.string() + " does not hold variant " + variant_name(variant));
    }
    std::size_t params = 0;
    for (const auto& p : ckpt.params) params += p.values.size();
    const auto report = evaluate_checkpoint(ckpt, videos);
    rows.push_back({variant_name(variant), params, report.fixed_mean_iou, report.fixed_mean_f1});
  }
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "variant,params,iou,f1\n";
  for (const auto& r : rows)
    out << '"' << r.variant << "\"," << r.parameters << ',' << format_metric(r.iou) << ',' << format_metric(r.f1) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

#define SCFNET_EVAL_INSTANTIATE(T)                                                                          \
  template std::vector<VideoPrediction> predict_videos(const ScfNet<T>&, const std::vector<VideoData>&, int); \
  template MetricsReport evaluate_model(const ScfNet<T>&, const std::vector<VideoData>&, int);              \
  template std::vector<QualityRow> robustness_sweep(const ScfNet<T>&, const std::vector<VideoData>&,        \
                                                    const std::vector<int>&);

SCFNET_EVAL_INSTANTIATE(float)
SCFNET_EVAL_INSTANTIATE(double)

}  // namespace scfnet
