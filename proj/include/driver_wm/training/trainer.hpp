#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "driver_wm/data/clip.hpp"
#include "driver_wm/error.hpp"
#include "driver_wm/evaluation/evaluate.hpp"
#include "driver_wm/kv_text.hpp"
#include "driver_wm/model/world_model.hpp"
#include "driver_wm/numerics/gradcheck.hpp"
#include "driver_wm/parallel.hpp"
#include "driver_wm/training/checkpoint.hpp"
#include "driver_wm/training/optimizer.hpp"

namespace dwm {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  AdamWConfig adam{};
  bool cosine = true;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
  std::size_t lanes = 1;

  void validate() const {
    adam.validate();
    if (batch_size == 0) fail(ErrorCode::kInvalidConfig, "batch size must be at least 1");
    if (!(clip_norm >= 0.0)) fail(ErrorCode::kInvalidConfig, "clip norm must be nonnegative");
  }

  void to_kv(KeyValueText& kv) const {
    kv.set("train.epochs", static_cast<std::uint64_t>(epochs));
    kv.set("train.batch_size", static_cast<std::uint64_t>(batch_size));
    kv.set("train.lr", adam.lr);
    kv.set("train.beta1", adam.beta1);
    kv.set("train.beta2", adam.beta2);
    kv.set("train.eps", adam.eps);
    kv.set("train.weight_decay", adam.weight_decay);
    kv.set("train.schedule", std::string(cosine ? "cosine" : "constant"));
    kv.set("train.clip_norm", clip_norm);
  }

  static TrainConfig from_kv(const KeyValueText& kv, TrainConfig c) {
    if (kv.has("train.epochs")) c.epochs = kv.get_u64("train.epochs");
    if (kv.has("train.batch_size")) c.batch_size = kv.get_u64("train.batch_size");
    if (kv.has("train.lr")) c.adam.lr = kv.get_double("train.lr");
    if (kv.has("train.beta1")) c.adam.beta1 = kv.get_double("train.beta1");
    if (kv.has("train.beta2")) c.adam.beta2 = kv.get_double("train.beta2");
    if (kv.has("train.eps")) c.adam.eps = kv.get_double("train.eps");
    if (kv.has("train.weight_decay")) c.adam.weight_decay = kv.get_double("train.weight_decay");
    if (kv.has("train.schedule")) {
      const std::string s = kv.get("train.schedule");
      if (s != "cosine" && s != "constant") fail(ErrorCode::kInvalidConfig, "train.schedule must be cosine or constant");
      c.cosine = s == "cosine";
    }
    if (kv.has("train.clip_norm")) c.clip_norm = kv.get_double("train.clip_norm");
    c.validate();
    return c;
  }
};

/// Named view of a clip objective for gradient checks and finiteness errors.
inline ScalarObjective scalar_objective(const LossTerms& terms, const LossWeights& w) {
  ScalarObjective obj;
  obj.total = total_loss(terms, w).total_var;
  const std::pair<const char*, const ad::Var*> named[] = {{"latent", &terms.latent}, {"skeleton", &terms.skeleton},
                                                          {"aux", &terms.aux},       {"bone", &terms.bone},
                                                          {"smooth", &terms.smooth}, {"seat", &terms.seat},
                                                          {"kl", &terms.kl}};
  for (auto [name, v] : named) {
    if (v->defined()) obj.terms.emplace_back(name, *v);
  }
  return obj;
}

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;         // rate used by the epoch's last step
  LossBreakdown loss;      // batch means averaged over the epoch's steps
  double grad_norm = 0.0;  // mean pre-clip global norm
  double val_metric = 0.0;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<EpochLog> log;
  double init_train_loss = 0.0;
  double init_val_metric = 0.0;
  bool diverged = false;
  std::string diverged_reason;
};

/// Mean objective over clips in inference mode (no sampling).
inline double mean_objective(const WorldModel& model, const std::vector<Clip>& clips, std::size_t lanes = 1) {
  std::vector<double> v(clips.size());
  parallel_for(clips.size(), lanes, [&](std::size_t i) {
    v[i] = model.objective(ParamView(model.params(), false), clips[i]).total;
  });
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(clips.size());
}

/// Validation MPJPE in px; models without a pose head fall back to the mean
/// objective.
inline double validation_metric(const WorldModel& model, const std::vector<Clip>& val, std::size_t lanes) {
  if (model.config().traits().pose_head) return horizon_mean_mpjpe(model, val, lanes);
  return mean_objective(model, val, lanes);
}

/// Gradient of the mean objective over `batch`. Per-clip gradients are
/// reduced in batch order, so the result does not depend on `lanes`.
inline std::pair<LossBreakdown, ParameterSet> batch_gradient(const WorldModel& model, const std::vector<const Clip*>& batch,
                                                             std::uint64_t sample_seed, std::size_t lanes) {
  const bool sample = model.config().traits().gaussian && model.config().weights.beta > 0.0;
  std::vector<LossBreakdown> losses(batch.size());
  std::vector<ParameterSet> grads(batch.size());
  parallel_for(batch.size(), lanes, [&](std::size_t i) {
    Rng rng(mix_seed(sample_seed, i));
    ParamView pv(model.params(), true);
    const LossTerms terms = model.loss_terms(pv, *batch[i], sample ? &rng : nullptr);
    const ScalarObjective obj = scalar_objective(terms, model.config().weights);
    check_finite(obj);
    losses[i] = total_loss(terms, model.config().weights);
    ad::backward(obj.total);
    grads[i] = pv.gradients(model.params());
  });
  const double inv = 1.0 / static_cast<double>(batch.size());
  ParameterSet total = model.params().zeros_like();
  LossBreakdown mean;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t e = 0; e < total.size(); ++e) {
      auto& dst = total.entries()[e].value.storage();
      const auto& src = grads[i].entries()[e].value.storage();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += inv * src[j];
    }
    const LossBreakdown& b = losses[i];
    mean.latent += inv * b.latent;
    mean.skeleton += inv * b.skeleton;
    mean.aux += inv * b.aux;
    mean.bone += inv * b.bone;
    mean.smooth += inv * b.smooth;
    mean.seat += inv * b.seat;
    mean.kl += inv * b.kl;
    mean.total += inv * b.total;
  }
  return {mean, std::move(total)};
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Seeded AdamW training with per-epoch validation. The best checkpoint has
/// the lowest validation metric; ties keep the earlier epoch (epoch 0 is the
/// initialization).
inline TrainResult train(const ModelConfig& model_cfg, const std::vector<Clip>& train_clips,
                         const std::vector<Clip>& val_clips, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (!model_cfg.traits().trainable) {
    fail(ErrorCode::kUnsupported, "variant " + variant_name(model_cfg.variant) + " has no parameters to train");
  }
  if (train_clips.empty() || val_clips.empty()) fail(ErrorCode::kEmptyInput, "training needs nonempty train and val splits");

  WorldModel model = WorldModel::create(model_cfg, cfg.seed);
  Checkpoint current;
  current.model = model_cfg;
  current.params = model.params();
  current.adam = AdamState::zeros_like(model.params());
  current.seed = cfg.seed;

  TrainResult result;
  result.init_train_loss = mean_objective(model, train_clips, cfg.lanes);
  result.init_val_metric = validation_metric(model, val_clips, cfg.lanes);
  current.val_mpjpe = result.init_val_metric;
  result.best = current;
  result.last = current;

  const std::size_t N = train_clips.size();
  const std::size_t steps_per_epoch = (N + cfg.batch_size - 1) / cfg.batch_size;
  const std::uint64_t total_steps = static_cast<std::uint64_t>(steps_per_epoch * cfg.epochs);
  AdamState adam = current.adam;
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng order_rng(mix_seed(cfg.seed, hash_key("epoch") + epoch));
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);

    EpochLog log;
    log.epoch = epoch;
    bool diverged = false;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<const Clip*> batch;
      for (std::size_t i = s * cfg.batch_size; i < std::min(N, (s + 1) * cfg.batch_size); ++i) {
        batch.push_back(&train_clips[order[i]]);
      }
      std::pair<LossBreakdown, ParameterSet> bg;
      try {
        bg = batch_gradient(model, batch, mix_seed(cfg.seed, hash_key("sample") + step), cfg.lanes);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNonFinite) throw;
        result.diverged = true;
        result.diverged_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
        diverged = true;
        break;
      }
      auto& [loss, grads] = bg;
      log.grad_norm += clip_global_norm(grads, cfg.clip_norm) / static_cast<double>(steps_per_epoch);
      const double lr = cfg.cosine ? cosine_lr(step, total_steps, cfg.adam.lr) : cfg.adam.lr;
      adamw_step(model.params(), grads, adam, lr, cfg.adam);
      log.lr = lr;
      const double inv = 1.0 / static_cast<double>(steps_per_epoch);
      log.loss.latent += inv * loss.latent;
      log.loss.skeleton += inv * loss.skeleton;
      log.loss.aux += inv * loss.aux;
      log.loss.bone += inv * loss.bone;
      log.loss.smooth += inv * loss.smooth;
      log.loss.seat += inv * loss.seat;
      log.loss.kl += inv * loss.kl;
      log.loss.total += inv * loss.total;
      ++step;
    }
    if (diverged) break;
    bool finite = true;
    for (const auto& e : model.params().entries()) finite = finite && e.value.all_finite();
    if (!finite) {
      result.diverged = true;
      result.diverged_reason = "epoch " + std::to_string(epoch) + ": non-finite parameters";
      break;
    }
    log.val_metric = validation_metric(model, val_clips, cfg.lanes);
    current.params = model.params();
    current.adam = adam;
    current.epoch = epoch;
    current.val_mpjpe = log.val_metric;
    result.last = current;
    if (log.val_metric < result.best.val_mpjpe) result.best = current;
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

}  // namespace dwm
