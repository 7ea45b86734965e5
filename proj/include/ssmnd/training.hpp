#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ssmnd/json_fields.hpp"
#include "ssmnd/model.hpp"
#include "ssmnd/tasks.hpp"

namespace ssmnd {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t n_train = 2000;
  std::size_t n_val = 500;
  double lr = 1e-3;
  double min_lr_ratio = 1e-3;    // final lr = lr * min_lr_ratio
  double warmup_epochs = 1.0;
  double warmup_start_lr = 1e-6;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double label_smoothing = 0.1;
  double grad_clip = 1.0;        // global norm; 0 disables
  double backbone_lr_mult = 1.0; // applies to parameters under "layers."
  // Accepted for compatibility with image recipes; the synthetic tasks use none of them.
  std::size_t randaug_n = 0;
  std::size_t randaug_m = 0;
  double mixup = 0.0;
  double ema_decay = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j, const std::string& path = "train");
TrainConfig load_train_config(const std::string& file);

/// Linear warmup from warmup_start_lr to lr, then cosine decay to
/// lr * min_lr_ratio at the last step.
class LrSchedule {
 public:
  LrSchedule(const TrainConfig& c, std::size_t steps_per_epoch);
  double at(std::size_t step) const;
  std::size_t total_steps() const noexcept { return total_; }

 private:
  double base_, start_, end_;
  std::size_t warmup_, total_;
};

/// Decoupled weight decay Adam over a ParamStore. Decay applies to tensors of
/// rank >= 2 except A_log; names starting with "layers." use the backbone
/// learning-rate multiplier.
class AdamW {
 public:
  AdamW(const ParamStore& store, const TrainConfig& c);
  void step(ParamStore& store, const std::vector<NdArray>& grads, double lr);
  std::size_t steps() const noexcept { return t_; }
  bool decays(std::size_t index) const { return decay_.at(index); }
  double lr_mult(std::size_t index) const { return mult_.at(index); }

 private:
  double beta1_, beta2_, eps_, wd_;
  std::size_t t_ = 0;
  std::vector<NdArray> m_, v_;
  std::vector<bool> decay_;
  std::vector<double> mult_;
};

/// Scales `grads` so their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
double clip_global_norm(std::vector<NdArray>& grads, double max_norm);

/// Worker count from an explicit value, else SSMND_THREADS, else the core count.
std::size_t resolve_threads(std::optional<std::size_t> requested);

struct EvalResult {
  double loss = 0.0;      // mean cross-entropy without smoothing
  double accuracy = 0.0;  // top-1
};

/// Fraction of rows whose arg-max (first on ties) equals the label.
double top1_accuracy(const std::vector<NdArray>& logits, const std::vector<std::size_t>& labels);
EvalResult evaluate(const Model& model, const Dataset& data, std::size_t threads = 1);

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;  // at the epoch's last step
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double grad_norm = 0.0;  // mean pre-clip norm over the epoch
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  bool diverged = false;
  std::string message;
  EvalResult initial;  // validation before the first step
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains `model` in place. Each sample's gradient is computed on its own tape
/// and batch sums are formed in sample order, so results do not depend on the
/// thread count. A non-finite loss stops training and sets `diverged`.
TrainResult train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  std::size_t threads = 1, const EpochCallback& on_epoch = {});

void write_metrics_csv(const std::string& path, const TrainResult& r);
Json metrics_json(const TrainResult& r);

}  // namespace ssmnd
