#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "scfnet/checkpoint.hpp"
#include "scfnet/config.hpp"
#include "scfnet/degrade.hpp"
#include "scfnet/errors.hpp"
#include "scfnet/evaluation.hpp"
#include "scfnet/gradsuite.hpp"
#include "scfnet/metrics.hpp"
#include "scfnet/pipeline.hpp"
#include "scfnet/synth.hpp"

namespace py = pybind11;
using namespace scfnet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Frame to_frame(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(0) != 3) throw py::value_error("frame must have shape (3, H, W)");
  Frame f(a.shape(1), a.shape(2));
  std::memcpy(f.rgb.data(), a.data(), f.rgb.size() * sizeof(float));
  return f;
}

FloatArray from_frame(const Frame& f) {
  FloatArray a({std::size_t(3), f.height, f.width});
  std::memcpy(a.mutable_data(), f.rgb.data(), f.rgb.size() * sizeof(float));
  return a;
}

LocalizationMap to_map(const FloatArray& a) {
  if (a.ndim() != 2) throw py::value_error("probability map must have shape (H, W)");
  LocalizationMap m;
  m.height = a.shape(0);
  m.width = a.shape(1);
  m.probs.assign(a.data(), a.data() + a.size());
  return m;
}

Mask to_mask(const ByteArray& a) {
  if (a.ndim() != 2) throw py::value_error("mask must have shape (H, W)");
  Mask m(a.shape(0), a.shape(1));
  std::memcpy(m.bits.data(), a.data(), m.bits.size());
  return m;
}

py::dict score_dict(const ConfusionCounts& c, double iou, double f1) {
  py::dict d;
  d["tp"] = c.tp;
  d["fp"] = c.fp;
  d["fn"] = c.fn;
  d["tn"] = c.tn;
  d["iou"] = iou;
  d["f1"] = f1;
  return d;
}

py::dict report_dict(const MetricsReport& r) {
  auto rows = [](const std::vector<VideoRow>& v) {
    py::list out;
    for (const auto& row : v) out.append(py::make_tuple(row.video, row.threshold, row.iou, row.f1));
    return out;
  };
  py::dict d;
  d["fixed"] = rows(r.fixed);
  d["best"] = rows(r.best);
  d["fixed_mean_iou"] = r.fixed_mean_iou;
  d["fixed_mean_f1"] = r.fixed_mean_f1;
  d["best_mean_iou"] = r.best_mean_iou;
  d["best_mean_f1"] = r.best_mean_f1;
  return d;
}

// Desk presets overridden by config text; the training resize follows the
// model input unless the text sets it.
std::pair<ModelConfig, TrainConfig> resolve_configs(const std::string& model_text, const std::string& train_text) {
  ModelConfig mc = ModelConfig::desk();
  TrainConfig tc = TrainConfig::desk();
  auto mk = ConfigText::parse(model_text, "<model config>");
  auto tk = ConfigText::parse(train_text, "<train config>");
  mk.apply_to(mc);
  mk.expect_consumed();
  tc.resize_height = mc.height;
  tc.resize_width = mc.width;
  tk.apply_to(tc);
  tk.expect_consumed();
  mc.validate();
  tc.validate_or_throw();
  return {mc, tc};
}

template <typename T>
py::dict train_impl(const TrainConfig& tc, const ModelConfig& mc, const std::filesystem::path& data,
                    const TrainOptions& opts) {
  std::uint64_t step = 0;
  std::uint32_t epoch = 0;
  std::vector<double> losses;
  {
    py::gil_scoped_release release;
    auto r = train<T>(tc, mc, data, opts);
    step = r.step;
    epoch = r.epoch;
    losses = r.step_losses;
  }
  py::dict d;
  d["step"] = step;
  d["epoch"] = epoch;
  d["losses"] = losses;
  return d;
}

template <typename T>
std::vector<LocalizationMap> infer_impl(const Checkpoint& ck, const std::vector<Frame>& frames) {
  auto model = model_from_checkpoint<T>(ck);
  std::vector<Frame> sized;
  for (const auto& f : frames) sized.push_back(resize_bilinear(f, ck.model.height, ck.model.width));
  return video_infer(sized, *model);
}

}  // namespace

PYBIND11_MODULE(_scfnet, m) {
  m.doc() = "Video splicing localization core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  m.def(
      "synth_dataset",
      [](const std::filesystem::path& out, int videos, int frames, int height, int width, std::uint64_t seed) {
        std::vector<std::string> ids;
        for (const auto& e : write_dataset(synth_dataset(seed, videos, frames, height, width), out).videos)
          ids.push_back(e.id);
        return ids;
      },
      py::arg("out"), py::arg("videos"), py::arg("frames"), py::arg("height") = 64, py::arg("width") = 64,
      py::arg("seed") = 0, "Write a procedural spliced-video dataset and return the video ids.");

  m.def(
      "read_video",
      [](const std::filesystem::path& dir) {
        const auto v = read_video(dir);
        py::list frames, masks;
        for (const auto& f : v.frames) frames.append(from_frame(f));
        for (const auto& k : v.masks) {
          ByteArray a({k.height, k.width});
          std::memcpy(a.mutable_data(), k.bits.data(), k.bits.size());
          masks.append(a);
        }
        return py::make_tuple(frames, masks);
      },
      py::arg("dir"), "(frames, masks) of one video: frames (3, H, W) float32, masks (H, W) uint8.");

  m.def(
      "degrade", [](const FloatArray& frame, int quality) { return from_frame(degrade_quality(to_frame(frame), quality)); },
      py::arg("frame"), py::arg("quality"), "Block-DCT quantization of a (3, H, W) frame; 0 is lossless.");
  m.def(
      "psnr", [](const FloatArray& a, const FloatArray& b) { return psnr(to_frame(a), to_frame(b)); }, py::arg("a"),
      py::arg("b"));

  m.def(
      "score",
      [](const FloatArray& probs, const ByteArray& gt, double threshold) {
        const auto s = score_pair(to_map(probs), to_mask(gt), threshold);
        return score_dict(s.counts, s.iou, s.f1);
      },
      py::arg("probs"), py::arg("gt"), py::arg("threshold") = kFixedThreshold,
      "Pixel counts, IoU and F1 of probs >= threshold against a binary mask.");
  m.def(
      "best_threshold",
      [](const std::vector<FloatArray>& probs, const std::vector<ByteArray>& gts) {
        std::vector<LocalizationMap> maps;
        std::vector<Mask> masks;
        for (const auto& p : probs) maps.push_back(to_map(p));
        for (const auto& g : gts) masks.push_back(to_mask(g));
        const auto c = best_threshold(maps, masks);
        return py::make_tuple(c.threshold, c.iou, c.f1);
      },
      py::arg("probs"), py::arg("gts"), "(threshold, iou, f1) maximizing pooled F1 over the grid.");
  m.def("threshold_grid", [] { return threshold_grid(); });
  m.def("lr_at_epoch", &lr_at_epoch, py::arg("epoch"), py::arg("lr0"), py::arg("every") = 2,
        py::arg("factor") = 0.5);

  m.def("desk_model_config", [] { return to_config_text(ModelConfig::desk()); });
  m.def("desk_train_config", [] { return to_config_text(TrainConfig::desk()); });

  m.def(
      "train",
      [](const std::filesystem::path& data, const std::filesystem::path& checkpoint, const std::string& model_config,
         const std::string& train_config, int precision, const std::string& validation) {
        const auto [mc, tc] = resolve_configs(model_config, train_config);
        std::vector<VideoData> val;
        TrainOptions opts;
        opts.checkpoint = checkpoint;
        if (!validation.empty()) {
          val = read_dataset(validation);
          opts.validation = &val;
        }
        if (precision == 64) return train_impl<double>(tc, mc, data, opts);
        if (precision == 32) return train_impl<float>(tc, mc, data, opts);
        throw py::value_error("precision must be 32 or 64");
      },
      py::arg("data"), py::arg("checkpoint"), py::arg("model_config") = "", py::arg("train_config") = "",
      py::arg("precision") = 32, py::arg("validation") = "",
      "Train from the desk presets overridden by key-value config text; writes the checkpoint and its CSV log.");

  m.def(
      "infer",
      [](const std::filesystem::path& checkpoint, const std::vector<FloatArray>& frames) {
        const auto ck = load_checkpoint(checkpoint);
        std::vector<Frame> in;
        for (const auto& f : frames) in.push_back(to_frame(f));
        std::vector<LocalizationMap> maps;
        {
          py::gil_scoped_release release;
          maps = ck.precision == Precision::F64 ? infer_impl<double>(ck, in) : infer_impl<float>(ck, in);
        }
        py::list out;
        for (const auto& mp : maps) {
          FloatArray a({mp.height, mp.width});
          std::memcpy(a.mutable_data(), mp.probs.data(), mp.probs.size() * sizeof(float));
          out.append(a);
        }
        return out;
      },
      py::arg("checkpoint"), py::arg("frames"), "Per-frame tamper probabilities at the model resolution.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& data, int quality) {
        return report_dict(evaluate_checkpoint(load_checkpoint(checkpoint), read_dataset(data), quality));
      },
      py::arg("checkpoint"), py::arg("data"), py::arg("quality") = 0);
  m.def(
      "sweep",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& data, const std::vector<int>& qualities) {
        py::list out;
        for (const auto& r : robustness_sweep(load_checkpoint(checkpoint), read_dataset(data), qualities))
          out.append(py::make_tuple(r.quality, r.mean_iou, r.mean_f1));
        return out;
      },
      py::arg("checkpoint"), py::arg("data"), py::arg("qualities") = kDefaultSweep,
      "(quality, mean_iou, mean_f1) rows at threshold 0.5.");

  m.def(
      "gradient_suite",
      [](std::uint64_t seed) {
        py::list out;
        for (const auto& e : run_gradient_suite(seed)) out.append(py::make_tuple(e.name, e.max_rel_error, e.coords));
        return out;
      },
      py::arg("seed") = 0, "(name, max relative error, coordinates) for every checked module.");
}
