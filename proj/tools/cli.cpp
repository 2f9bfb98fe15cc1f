#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "scfnet/checkpoint.hpp"
#include "scfnet/config.hpp"
#include "scfnet/degrade.hpp"
#include "scfnet/errors.hpp"
#include "scfnet/evaluation.hpp"
#include "scfnet/gradsuite.hpp"
#include "scfnet/pipeline.hpp"
#include "scfnet/png_io.hpp"
#include "scfnet/synth.hpp"

namespace scfnet::cli {

namespace fs = std::filesystem;

namespace {

// Raised for problems with the invocation itself (missing inputs, bad values).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when inputs are well-formed but fail a check.
struct ValidationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  int precision = 32;
  std::string config;
};

void print_section(std::ostream& out, const std::string& title, const std::string& body) {
  out << "# " << title << '\n' << body;
}

std::pair<int, int> parse_size(const std::string& flag, const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    const int h = std::stoi(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    const int w = std::stoi(text.substr(x + 1), &used);
    if (used != text.size() - x - 1 || h <= 0 || w <= 0) throw std::invalid_argument(text);
    return {h, w};
  } catch (const std::logic_error&) {
    throw UsageError(flag + ": expected HxW, got '" + text + "'");
  }
}

std::vector<int> parse_levels(const std::string& flag, const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError(flag + ": expected comma-separated integers, got '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError(flag + ": empty list");
  return out;
}

void require_dir(const std::string& flag, const fs::path& p) {
  if (!fs::is_directory(p)) throw UsageError(flag + ": directory '" + p.string() + "' does not exist");
}

void require_file(const std::string& flag, const fs::path& p) {
  if (!fs::is_regular_file(p)) throw UsageError(flag + ": file '" + p.string() + "' does not exist");
}

Variant parse_variant(const std::string& text) {
  if (text == "full") return Variant::Full;
  if (text == "no-pcm") return Variant::NoPcm;
  if (text == "no-ccm") return Variant::NoCcm;
  if (text == "no-gac") return Variant::NoGac;
  throw UsageError("--variant: expected full, no-pcm, no-ccm or no-gac, got '" + text + "'");
}

// ---- synth

struct SynthArgs {
  std::string out;
  int videos = 0, frames = 0;
  std::string size = "64x64";
};

int run_synth(const Globals& g, const SynthArgs& a, std::ostream& out) {
  const auto [h, w] = parse_size("--size", a.size);
  if (a.videos < 1) throw UsageError("--videos: must be at least 1");
  if (a.frames < 3) throw UsageError("--frames: must be at least 3");
  out << "# synth\nseed = " << g.seed << "\nvideos = " << a.videos << "\nframes = " << a.frames
      << "\nsize = " << h << 'x' << w << "\nout = " << a.out << '\n';
  const auto videos = synth_dataset(g.seed, a.videos, a.frames, h, w);
  const auto manifest = write_dataset(videos, a.out);
  out << "wrote " << manifest.videos.size() << " videos to " << a.out << '\n';
  return kExitOk;
}

// ---- train

struct TrainArgs {
  std::string data, model_config, train_config, out, val, resume, variant;
};

int run_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
  require_dir("--data", a.data);
  ModelConfig mc = ModelConfig::desk();
  TrainConfig tc = TrainConfig::desk();
  // Model keys go first so the training resize can default to the model input.
  std::vector<ConfigText> texts;
  if (!g.config.empty()) texts.push_back(ConfigText::read(g.config));
  if (!a.model_config.empty()) texts.push_back(ConfigText::read(a.model_config));
  if (!a.train_config.empty()) texts.push_back(ConfigText::read(a.train_config));
  for (auto& kv : texts) kv.apply_to(mc);
  tc.resize_height = mc.height;
  tc.resize_width = mc.width;
  for (auto& kv : texts) {
    kv.apply_to(tc);
    kv.expect_consumed();
  }
  if (!a.variant.empty()) mc.fusion = variant_switches(parse_variant(a.variant));
  if (g.seed_given) tc.seed = g.seed;
  mc.validate();
  tc.validate_or_throw();
  print_section(out, "model config", to_config_text(mc));
  print_section(out, "train config", to_config_text(tc));
  out << "precision = " << g.precision << '\n';

  std::optional<std::vector<VideoData>> val;
  if (!a.val.empty()) {
    require_dir("--val", a.val);
    val = read_dataset(a.val);
  }
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    require_file("--resume", a.resume);
    resume = load_checkpoint(a.resume);
  }
  TrainOptions opts;
  opts.checkpoint = a.out;
  opts.validation = val ? &*val : nullptr;
  opts.resume = resume ? &*resume : nullptr;
  opts.progress = &out;
  auto report = [&](const auto& r) {
    out << "trained " << r.step << " steps, " << r.epoch << " epochs; checkpoint " << a.out << '\n';
  };
  if (g.precision == 64) report(train<double>(tc, mc, fs::path(a.data), opts));
  else report(train<float>(tc, mc, fs::path(a.data), opts));
  return kExitOk;
}

// ---- infer

struct InferArgs {
  std::string ckpt, video, out;
  bool raw = false;
};

template <typename T>
std::vector<LocalizationMap> infer_frames(const Checkpoint& ck, const std::vector<Frame>& frames) {
  const auto model = model_from_checkpoint<T>(ck);
  std::vector<Frame> sized;
  for (const auto& f : frames) sized.push_back(resize_bilinear(f, ck.model.height, ck.model.width));
  return video_infer(sized, *model);
}

int run_infer(const Globals&, const InferArgs& a, std::ostream& out) {
  require_file("--ckpt", a.ckpt);
  require_dir("--video", a.video);
  const auto ck = load_checkpoint(a.ckpt);
  print_section(out, "model config", to_config_text(ck.model));
  out << "precision = " << (ck.precision == Precision::F64 ? 64 : 32) << "\nvideo = " << a.video
      << "\nout = " << a.out << '\n';
  const auto frames = read_frames(a.video);
  if (frames.empty()) throw ValidationFailure("--video: no PNG frames in " + a.video);
  const auto maps = ck.precision == Precision::F64 ? infer_frames<double>(ck, frames) : infer_frames<float>(ck, frames);
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto full = resize_map(maps[i], frames[i].height, frames[i].width);
    char name[32];
    std::snprintf(name, sizeof name, "%05zu", i);
    write_probability_png(fs::path(a.out) / (std::string(name) + ".png"), full);
    if (a.raw) {
      std::ofstream raw(fs::path(a.out) / (std::string(name) + ".f32"), std::ios::binary);
      raw.write(reinterpret_cast<const char*>(full.probs.data()),
                static_cast<std::streamsize>(full.probs.size() * sizeof(float)));
      if (!raw) throw IoError("cannot write raw map for frame " + std::to_string(i));
    }
  }
  out << "wrote " << maps.size() << " probability maps to " << a.out << '\n';
  return kExitOk;
}

// ---- eval

struct EvalArgs {
  std::string pred, gt, out;
  bool best = false;
};

std::vector<Mask> gt_masks(const fs::path& dir) {
  const auto sub = fs::is_directory(dir / "masks") ? dir / "masks" : dir;
  std::vector<Mask> masks;
  for (const auto& f : list_pngs(sub)) masks.push_back(read_mask_png(f));
  return masks;
}

VideoPrediction load_prediction(const std::string& id, const fs::path& pred_dir, const fs::path& gt_dir) {
  VideoPrediction v;
  v.id = id;
  v.gts = gt_masks(gt_dir);
  for (const auto& f : list_pngs(pred_dir)) v.maps.push_back(read_probability_png(f));
  if (v.maps.size() != v.gts.size()) {
    throw ValidationFailure("video " + id + ": " + std::to_string(v.maps.size()) + " predicted maps but " +
                            std::to_string(v.gts.size()) + " ground-truth masks");
  }
  for (std::size_t i = 0; i < v.maps.size(); ++i) {
    if (v.maps[i].height != v.gts[i].height || v.maps[i].width != v.gts[i].width) {
      throw ValidationFailure("video " + id + " frame " + std::to_string(i) + ": prediction and mask sizes differ");
    }
  }
  return v;
}

int run_eval(const Globals&, const EvalArgs& a, std::ostream& out) {
  require_dir("--pred", a.pred);
  require_dir("--gt", a.gt);
  out << "# eval\npred = " << a.pred << "\ngt = " << a.gt << "\nthreshold = "
      << (a.best ? "best of grid" : format_metric(kFixedThreshold)) << '\n';
  std::vector<VideoPrediction> videos;
  if (fs::exists(fs::path(a.gt) / "manifest.txt")) {
    for (const auto& e : read_manifest(a.gt).videos) {
      const auto pred_dir = fs::path(a.pred) / e.id;
      if (!fs::is_directory(pred_dir)) throw ValidationFailure("--pred: no predictions for video " + e.id);
      videos.push_back(load_prediction(e.id, pred_dir, fs::path(a.gt) / e.id));
    }
  } else {
    videos.push_back(load_prediction(fs::path(a.gt).filename().string(), a.pred, a.gt));
  }
  const auto report = evaluate_predictions(videos);
  const auto& rows = a.best ? report.best : report.fixed;
  std::ostringstream csv;
  csv << "video,thr,iou,f1\n";
  for (const auto& r : rows)
    csv << r.video << ',' << format_metric(r.threshold) << ',' << format_metric(r.iou) << ',' << format_metric(r.f1) << '\n';
  out << csv.str();
  out << "mean_iou = " << format_metric(a.best ? report.best_mean_iou : report.fixed_mean_iou)
      << "\nmean_f1 = " << format_metric(a.best ? report.best_mean_f1 : report.fixed_mean_f1) << '\n';
  if (!a.out.empty()) write_video_csv(a.out, rows);
  return kExitOk;
}

// ---- sweep

struct SweepArgs {
  std::string ckpt, data, qualities = "0,15,23,30", out;
};

int run_sweep(const Globals&, const SweepArgs& a, std::ostream& out) {
  require_file("--ckpt", a.ckpt);
  require_dir("--data", a.data);
  const auto levels = parse_levels("--qualities", a.qualities);
  for (int q : levels)
    if (q < 0 || q > kMaxQuality) throw UsageError("--qualities: level " + std::to_string(q) + " outside 0..51");
  const auto ck = load_checkpoint(a.ckpt);
  print_section(out, "model config", to_config_text(ck.model));
  out << "data = " << a.data << "\nqualities = " << a.qualities << '\n';
  const auto rows = robustness_sweep(ck, read_dataset(a.data), levels);
  out << "quality,mean_iou,mean_f1\n";
  for (const auto& r : rows) out << r.quality << ',' << format_metric(r.mean_iou) << ',' << format_metric(r.mean_f1) << '\n';
  if (!a.out.empty()) write_quality_csv(a.out, rows);
  return kExitOk;
}

// ---- gradcheck

int run_gradcheck(const Globals& g, std::ostream& out) {
  out << "# gradcheck\nseed = " << g.seed << "\neps = " << kGradSuiteEps << "\ntolerance = " << kGradSuiteTolerance
      << '\n';
  bool ok = true;
  for (const auto& e : run_gradient_suite(g.seed)) {
    const bool pass = e.max_rel_error < kGradSuiteTolerance;
    ok = ok && pass;
    char line[160];
    std::snprintf(line, sizeof line, "%-24s max_rel_error %.3e  coords %5zu  %s\n", e.name.c_str(), e.max_rel_error,
                  e.coords, pass ? "ok" : "FAIL");
    out << line;
  }
  out << (ok ? "all gradients within tolerance\n" : "gradient check FAILED\n");
  return ok ? kExitOk : kExitValidation;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Video splicing localization: synthesis, training, inference and evaluation", "scfnet"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->each([&](const std::string&) { g.seed_given = true; });
  app.add_option("--precision", g.precision, "Floating point width of the run")->check(CLI::IsMember({32, 64}));
  app.add_option("--config", g.config, "Key-value config file (model and training keys)");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write a procedural spliced-video dataset");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--videos", sa.videos, "Number of videos")->required();
  synth->add_option("--frames", sa.frames, "Frames per video")->required();
  synth->add_option("--size", sa.size, "Frame size HxW")->capture_default_str();

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a model and write a checkpoint");
  trn->add_option("--data", ta.data, "Dataset root")->required();
  trn->add_option("--model-config", ta.model_config, "Model config file");
  trn->add_option("--train-config", ta.train_config, "Training config file");
  trn->add_option("--out", ta.out, "Checkpoint path; the log goes to <out>.csv")->required();
  trn->add_option("--val", ta.val, "Validation dataset root (default: training set)");
  trn->add_option("--resume", ta.resume, "Continue from this checkpoint");
  trn->add_option("--variant", ta.variant, "full, no-pcm, no-ccm or no-gac");

  InferArgs ia;
  auto* inf = app.add_subcommand("infer", "Write per-frame probability maps for one video");
  inf->add_option("--ckpt", ia.ckpt, "Checkpoint")->required();
  inf->add_option("--video", ia.video, "Video directory (frames/ or PNG frames)")->required();
  inf->add_option("--out", ia.out, "Output directory")->required();
  inf->add_flag("--raw", ia.raw, "Also write exact float32 maps as .f32");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score probability maps against ground-truth masks");
  ev->add_option("--pred", ea.pred, "Prediction directory")->required();
  ev->add_option("--gt", ea.gt, "Ground truth: dataset root or one video directory")->required();
  ev->add_flag("--best-threshold", ea.best, "Pick each video's best grid threshold");
  ev->add_option("--out", ea.out, "Write the per-video CSV here");

  SweepArgs sw;
  auto* swp = app.add_subcommand("sweep", "Robustness against quality degradation");
  swp->add_option("--ckpt", sw.ckpt, "Checkpoint")->required();
  swp->add_option("--data", sw.data, "Evaluation dataset root")->required();
  swp->add_option("--qualities", sw.qualities, "Comma-separated quality levels")->capture_default_str();
  swp->add_option("--out", sw.out, "Write the quality CSV here");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable module");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (!g.config.empty()) require_file("--config", g.config);
    if (*synth) return run_synth(g, sa, out);
    if (*trn) return run_train(g, ta, out);
    if (*inf) return run_infer(g, ia, out);
    if (*ev) return run_eval(g, ea, out);
    if (*swp) return run_sweep(g, sw, out);
    if (*gc) return run_gradcheck(g, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitUsage;
}

}  // namespace scfnet::cli
