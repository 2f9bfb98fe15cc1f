#include "scfnet/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "scfnet/degrade.hpp"
#include "scfnet/errors.hpp"
#include "scfnet/evaluation.hpp"
#include "scfnet/ops.hpp"

namespace scfnet {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ull;
constexpr std::uint64_t kAugmentStream = 0x415547ull;

// Fisher-Yates with raw engine output, so the order does not depend on the
// standard library's distribution implementations.
void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

TrainConfig resume_key(TrainConfig c) {
  c.max_steps = 0;
  c.epochs = 0;
  c.validate = true;
  return c;
}

}  // namespace

VideoData resize_video(const VideoData& v, std::size_t height, std::size_t width) {
  VideoData out;
  out.id = v.id;
  for (const auto& f : v.frames) out.frames.push_back(resize_bilinear(f, height, width));
  for (const auto& m : v.masks) out.masks.push_back(resize_nearest(m, height, width));
  return out;
}

TripleSet::TripleSet(std::vector<VideoData> videos, std::size_t height, std::size_t width, std::ostream* warn)
    : height_(height), width_(width) {
  for (auto& v : videos) {
    if (v.frames.size() != v.masks.size()) {
      throw ArgumentError("video " + v.id + " has " + std::to_string(v.frames.size()) + " frames but " +
                          std::to_string(v.masks.size()) + " masks");
    }
    if (v.frames.size() < 3) {
      if (warn) *warn << "warning: skipping video " << v.id << " with " << v.frames.size() << " frames\n";
      continue;
    }
    const std::size_t idx = videos_.size();
    videos_.push_back(resize_video(v, height, width));
    for (std::size_t t = 1; t + 1 < videos_.back().frames.size(); ++t) refs_.push_back({idx, t});
  }
}

FrameTriple TripleSet::triple(std::size_t i) const {
  const auto& r = refs_.at(i);
  const auto& v = videos_[r.video];
  FrameTriple t;
  for (std::size_t k = 0; k < 3; ++k) {
    t.frames[k] = v.frames[r.centre - 1 + k];
    t.masks[k] = v.masks[r.centre - 1 + k];
  }
  return t;
}

TripleSet load_triples(const std::filesystem::path& dataset_root, std::size_t height, std::size_t width,
                       std::ostream* warn) {
  return TripleSet(read_dataset(dataset_root), height, width, warn);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(derive_seed(seed, kShuffleStream), epoch));
  shuffle(order, rng);
  return order;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, std::uint64_t seed,
                                                    std::uint64_t epoch) {
  if (batch == 0) throw ArgumentError("batch size must be positive");
  const auto order = epoch_order(n, seed, epoch);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
  }
  return out;
}

std::vector<int> augmentation_plan(std::size_t n, double fraction, const std::vector<int>& levels,
                                   std::uint64_t seed) {
  if (!(fraction >= 0 && fraction <= 1)) throw ArgumentError("augment fraction must lie in [0, 1]");
  if (levels.empty()) throw ArgumentError("augmentation needs at least one quality level");
  std::vector<int> plan(n, 0);
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, kAugmentStream));
  shuffle(order, rng);
  for (std::size_t i = 0; i < count; ++i) plan[order[i]] = levels[rng() % levels.size()];
  return plan;
}

FrameTriple degrade_triple(const FrameTriple& t, int quality) {
  FrameTriple out = t;
  for (auto& f : out.frames) f = degrade_quality(f, quality);
  return out;
}

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  for (T y : target.data()) {
    if (y != T(0) && y != T(1)) throw ArgumentError("bce_loss targets must be binary");
  }
  return ops::bce_with_logits(logits, target);
}

template <typename T>
SgdState<T> SgdState<T>::zeros_like(const std::vector<NamedTensor<T>>& params) {
  SgdState s;
  for (const auto& p : params) s.velocity.push_back({p.name, Tensor<T>::zeros(p.tensor.shape())});
  return s;
}

template <typename T>
void sgd_step(const std::vector<NamedTensor<T>>& params, SgdState<T>& state, const SgdHyper& h) {
  if (state.velocity.size() != params.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(state.velocity.size()) + " momentum buffers");
  }
  const T lr = static_cast<T>(h.lr), mu = static_cast<T>(h.momentum), wd = static_cast<T>(h.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> w = params[i].tensor;
    Tensor<T> v = state.velocity[i].tensor;
    if (w.shape() != v.shape()) throw ShapeError("sgd_step: momentum shape mismatch for " + params[i].name);
    auto wd_ = w.mutable_data();
    auto vd = v.mutable_data();
    const bool has_grad = w.has_grad();
    const auto g = has_grad ? w.mutable_grad() : std::span<T>();
    for (std::size_t k = 0; k < wd_.size(); ++k) {
      const T gk = has_grad ? g[k] : T(0);
      vd[k] = mu * vd[k] + gk + wd * wd_[k];
      wd_[k] = wd_[k] - lr * vd[k];
    }
  }
}

double lr_at_epoch(int epoch, double lr0, int every, double factor) {
  if (epoch < 0) throw ArgumentError("epoch must be non-negative");
  if (every <= 0) return lr0;
  return lr0 * std::pow(factor, epoch / every);
}

std::string format_log_row(const EpochLog& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%u,%llu,%.9g,%.9g,%.6f,%.6f", r.epoch, static_cast<unsigned long long>(r.step),
                r.lr, r.loss, r.val_iou, r.val_f1);
  return buf;
}

template <typename T>
Checkpoint TrainResult<T>::checkpoint(const TrainConfig& train) const {
  Checkpoint c;
  c.precision = precision_of<T>();
  c.model = model->config();
  c.train = train;
  c.epoch = epoch;
  c.step = step;
  c.params = store_tensors(model->store().parameters());
  c.buffers = store_tensors(model->store().buffers());
  c.momentum = store_tensors(optimizer.velocity);
  return c;
}

template <typename T>
std::unique_ptr<ScfNet<T>> model_from_checkpoint(const Checkpoint& ckpt) {
  auto model = std::make_unique<ScfNet<T>>(ckpt.model, ckpt.train.seed);
  restore_tensors(ckpt.params, model->store().parameters(), "parameters");
  restore_tensors(ckpt.buffers, model->store().buffers(), "buffers");
  return model;
}

template <typename T>
TrainResult<T> train(const TrainConfig& tc, const ModelConfig& mc, const TripleSet& data, const TrainOptions& opts) {
  tc.validate_or_throw();
  mc.validate();
  if (tc.resize_height != mc.height || tc.resize_width != mc.width) {
    throw ConfigError("train resize " + std::to_string(tc.resize_height) + "x" + std::to_string(tc.resize_width) +
                      " differs from model input " + std::to_string(mc.height) + "x" + std::to_string(mc.width));
  }
  if (data.height() != static_cast<std::size_t>(mc.height) || data.width() != static_cast<std::size_t>(mc.width)) {
    throw ArgumentError("triples are not resized to the model input");
  }
  const std::size_t n = data.size();
  if (n == 0) throw ArgumentError("training set has no frame triples");

  TrainResult<T> r;
  r.model = std::make_unique<ScfNet<T>>(mc, tc.seed);
  auto& store = r.model->store();
  r.optimizer = SgdState<T>::zeros_like(store.parameters());
  if (opts.resume) {
    const auto& ck = *opts.resume;
    if (ck.precision != precision_of<T>()) throw ConfigError("resume checkpoint precision differs from this run");
    if (!(ck.model == mc)) throw ConfigError("resume checkpoint model config differs from this run");
    if (!(resume_key(ck.train) == resume_key(tc))) {
      throw ConfigError("resume checkpoint training config differs from this run");
    }
    restore_tensors(ck.params, store.parameters(), "parameters");
    restore_tensors(ck.buffers, store.buffers(), "buffers");
    restore_tensors(ck.momentum, r.optimizer.velocity, "momentum");
    r.epoch = ck.epoch;
    r.step = ck.step;
  }

  auto log_path = opts.log_csv;
  if (log_path.empty() && !opts.checkpoint.empty()) log_path = opts.checkpoint.string() + ".csv";
  std::ofstream log;
  if (!log_path.empty()) {
    const bool append = opts.resume && std::filesystem::exists(log_path);
    log.open(log_path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot write training log " + log_path.string());
    if (!append) log << kTrainLogHeader << '\n';
  }

  const auto plan = augmentation_plan(n, tc.augment_fraction, tc.quality_levels, tc.seed);
  const auto batch = static_cast<std::size_t>(tc.batch);
  const std::size_t per_epoch = (n + batch - 1) / batch;
  const auto* val = opts.validation ? opts.validation : &data.videos();
  std::size_t skip = static_cast<std::size_t>(r.step % per_epoch);
  const SgdHyper base{tc.lr0, tc.momentum, tc.weight_decay};

  for (auto epoch = static_cast<std::uint32_t>(r.step / per_epoch); epoch < static_cast<std::uint32_t>(tc.epochs);
       ++epoch) {
    if (tc.max_steps && r.step >= tc.max_steps) break;
    const double lr = lr_at_epoch(static_cast<int>(epoch), tc.lr0, tc.lr_decay_every, tc.lr_decay_factor);
    SgdHyper hyper = base;
    hyper.lr = lr;
    const auto batches = epoch_batches(n, batch, tc.seed, epoch);
    double loss_sum = 0;
    std::size_t steps = 0, b = skip;
    for (; b < per_epoch; ++b) {
      if (tc.max_steps && r.step >= tc.max_steps) break;
      std::vector<FrameTriple> triples;
      for (auto idx : batches[b]) {
        triples.push_back(plan[idx] ? degrade_triple(data.triple(idx), plan[idx]) : data.triple(idx));
      }
      std::vector<const Frame*> fp, fm, fn;
      std::vector<const Mask*> mp, mn;
      for (const auto& t : triples) {
        fp.push_back(&t.frames[0]);
        fm.push_back(&t.frames[1]);
        fn.push_back(&t.frames[2]);
        mp.push_back(&t.masks[0]);
        mn.push_back(&t.masks[2]);
      }
      store.zero_grad();
      Tape<T> tape;
      Tensor<T> loss;
      {
        TapeScope<T> scope(tape);
        const auto logits = r.model->forward(stack_frames<T>(fp), stack_frames<T>(fm), stack_frames<T>(fn), Mode::Train);
        loss = ops::scale(ops::add(bce_loss(logits.prev, stack_masks<T>(mp)), bce_loss(logits.next, stack_masks<T>(mn))),
                          T(0.5));
      }
      const double lv = static_cast<double>(loss.item());
      double gnorm = std::numeric_limits<double>::quiet_NaN();
      if (std::isfinite(lv)) {
        backward(loss, tape);
        gnorm = 0;
        for (const auto& p : store.parameters()) {
          if (!p.tensor.has_grad()) continue;
          for (T g : Tensor<T>(p.tensor).mutable_grad()) gnorm += static_cast<double>(g) * static_cast<double>(g);
        }
        gnorm = std::sqrt(gnorm);
      }
      if (!std::isfinite(lv) || !std::isfinite(gnorm)) {
        char msg[160];
        std::snprintf(msg, sizeof msg, "non-finite training loss at step %llu (lr %.6g, loss %g, grad-norm %g)",
                      static_cast<unsigned long long>(r.step), lr, lv, gnorm);
        throw TrainingError(msg);
      }
      {
        NoGradScope<T> no_grad;
        sgd_step(store.parameters(), r.optimizer, hyper);
      }
      ++r.step;
      ++steps;
      loss_sum += lv;
      r.step_losses.push_back(lv);
    }
    skip = 0;
    const bool finished = b == per_epoch;
    if (steps == 0) break;
    if (finished) r.epoch = epoch + 1;

    EpochLog row{epoch, r.step, lr, loss_sum / static_cast<double>(steps), std::nan(""), std::nan("")};
    if (tc.validate) {
      const auto report = evaluate_model(*r.model, *val);
      row.val_iou = report.fixed_mean_iou;
      row.val_f1 = report.fixed_mean_f1;
    }
    r.log.push_back(row);
    if (log) {
      log << format_log_row(row) << '\n';
      log.flush();
    }
    if (opts.progress) *opts.progress << kTrainLogHeader << ": " << format_log_row(row) << '\n';
    if (!opts.checkpoint.empty()) save_checkpoint(r.checkpoint(tc), opts.checkpoint);
    if (!finished) break;
  }
  return r;
}

template <typename T>
TrainResult<T> train(const TrainConfig& tc, const ModelConfig& mc, const std::filesystem::path& dataset_root,
                     const TrainOptions& opts) {
  const auto data = load_triples(dataset_root, static_cast<std::size_t>(tc.resize_height),
                                 static_cast<std::size_t>(tc.resize_width), opts.progress);
  return train<T>(tc, mc, data, opts);
}

#define SCFNET_PIPELINE_INSTANTIATE(T)                                                                      \
  template Tensor<T> bce_loss(const Tensor<T>&, const Tensor<T>&);                                          \
  template struct SgdState<T>;                                                                              \
  template void sgd_step(const std::vector<NamedTensor<T>>&, SgdState<T>&, const SgdHyper&);                \
  template struct TrainResult<T>;                                                                           \
  template std::unique_ptr<ScfNet<T>> model_from_checkpoint(const Checkpoint&);                             \
  template TrainResult<T> train(const TrainConfig&, const ModelConfig&, const TripleSet&, const TrainOptions&); \
  template TrainResult<T> train(const TrainConfig&, const ModelConfig&, const std::filesystem::path&,       \
                                const TrainOptions&);

SCFNET_PIPELINE_INSTANTIATE(float)
SCFNET_PIPELINE_INSTANTIATE(double)

}  // namespace scfnet
