#include "ssmnd/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <thread>

#include "ssmnd/errors.hpp"
#include "ssmnd/ops.hpp"

namespace ssmnd {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs", "must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size", "must be positive");
  if (n_train == 0) throw ConfigError("train.n_train", "must be positive");
  if (n_val == 0) throw ConfigError("train.n_val", "must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr", "must be a non-negative number");
  if (!(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0)) throw ConfigError("train.min_lr_ratio", "must be in [0, 1]");
  if (!(warmup_epochs >= 0.0 && warmup_epochs <= static_cast<double>(epochs)))
    throw ConfigError("train.warmup_epochs", "must be in [0, epochs]");
  if (!(warmup_start_lr >= 0.0)) throw ConfigError("train.warmup_start_lr", "must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay", "must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1", "must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2", "must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps", "must be positive");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("train.label_smoothing", "must be in [0, 1)");
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip", "must be non-negative");
  if (!(backbone_lr_mult >= 0.0)) throw ConfigError("train.backbone_lr_mult", "must be non-negative");
  if (mixup != 0.0) throw ConfigError("train.mixup", "mixup is not applied to the synthetic tasks; leave it at 0");
  if (ema_decay != 0.0) throw ConfigError("train.ema_decay", "EMA is not supported; leave it at 0");
}

Json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"n_train", c.n_train},
          {"n_val", c.n_val},
          {"lr", c.lr},
          {"min_lr_ratio", c.min_lr_ratio},
          {"warmup_epochs", c.warmup_epochs},
          {"warmup_start_lr", c.warmup_start_lr},
          {"weight_decay", c.weight_decay},
          {"betas", {c.beta1, c.beta2}},
          {"adam_eps", c.adam_eps},
          {"label_smoothing", c.label_smoothing},
          {"grad_clip", c.grad_clip},
          {"backbone_lr_mult", c.backbone_lr_mult},
          {"randaug", {{"n", c.randaug_n}, {"m", c.randaug_m}}},
          {"mixup", c.mixup},
          {"ema_decay", c.ema_decay},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const Json& j, const std::string& path) {
  JsonFields f(j, path);
  TrainConfig c;
  c.epochs = f.get<std::size_t>("epochs", c.epochs);
  c.batch_size = f.get<std::size_t>("batch_size", c.batch_size);
  c.n_train = f.get<std::size_t>("n_train", c.n_train);
  c.n_val = f.get<std::size_t>("n_val", c.n_val);
  c.lr = f.get<double>("lr", c.lr);
  c.min_lr_ratio = f.get<double>("min_lr_ratio", c.min_lr_ratio);
  c.warmup_epochs = f.get<double>("warmup_epochs", c.warmup_epochs);
  c.warmup_start_lr = f.get<double>("warmup_start_lr", c.warmup_start_lr);
  c.weight_decay = f.get<double>("weight_decay", c.weight_decay);
  if (f.has("betas")) {
    const Json& b = f.raw("betas");
    if (!b.is_array() || b.size() != 2) throw ConfigError(f.field("betas"), "expected [beta1, beta2]");
    c.beta1 = JsonFields::convert<double>(b[0], f.field("betas") + "[0]");
    c.beta2 = JsonFields::convert<double>(b[1], f.field("betas") + "[1]");
  }
  c.adam_eps = f.get<double>("adam_eps", c.adam_eps);
  c.label_smoothing = f.get<double>("label_smoothing", c.label_smoothing);
  c.grad_clip = f.get<double>("grad_clip", c.grad_clip);
  c.backbone_lr_mult = f.get<double>("backbone_lr_mult", c.backbone_lr_mult);
  if (f.has("randaug")) {
    JsonFields r(f.raw("randaug"), f.field("randaug"));
    c.randaug_n = r.get<std::size_t>("n", 0);
    c.randaug_m = r.get<std::size_t>("m", 0);
    r.finish();
  }
  c.mixup = f.get<double>("mixup", 0.0);
  c.ema_decay = f.get<double>("ema_decay", 0.0);
  c.seed = f.get<std::uint64_t>("seed", 0);
  f.finish();
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(file, "cannot open");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(file, e.what());
  }
  return train_config_from_json(j);
}

LrSchedule::LrSchedule(const TrainConfig& c, std::size_t steps_per_epoch)
    : base_(c.lr), start_(std::min(c.warmup_start_lr, c.lr)), end_(c.lr * c.min_lr_ratio) {
  total_ = std::max<std::size_t>(1, c.epochs * steps_per_epoch);
  warmup_ = std::min(total_ - 1, static_cast<std::size_t>(std::llround(c.warmup_epochs * steps_per_epoch)));
}

double LrSchedule::at(std::size_t step) const {
  if (step < warmup_) return start_ + (base_ - start_) * static_cast<double>(step) / static_cast<double>(warmup_);
  const std::size_t span = total_ - 1 - warmup_;
  if (span == 0) return end_;
  const double progress = std::min(1.0, static_cast<double>(step - warmup_) / static_cast<double>(span));
  return end_ + 0.5 * (base_ - end_) * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(const ParamStore& store, const TrainConfig& c)
    : beta1_(c.beta1), beta2_(c.beta2), eps_(c.adam_eps), wd_(c.weight_decay) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const NdArray& p = store.values()[i];
    const std::string& name = store.names()[i];
    m_.emplace_back(p.shape(), 0.0);
    v_.emplace_back(p.shape(), 0.0);
    const bool is_a = name.size() >= 5 && name.compare(name.size() - 5, 5, "A_log") == 0;
    decay_.push_back(p.rank() >= 2 && !is_a);
    mult_.push_back(name.rfind("layers.", 0) == 0 ? c.backbone_lr_mult : 1.0);
  }
}

void AdamW::step(ParamStore& store, const std::vector<NdArray>& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < store.size(); ++k) {
    NdArray& p = store.values()[k];
    const NdArray& g = grads[k];
    NdArray& m = m_[k];
    NdArray& v = v_[k];
    const double step = lr * mult_[k];
    const double wd = decay_[k] ? wd_ : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mh = m[i] / c1, vh = v[i] / c2;
      p[i] -= step * (mh / (std::sqrt(vh) + eps_) + wd * p[i]);
    }
  }
}

double clip_global_norm(std::vector<NdArray>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (auto& v : g.data()) v *= s;
  }
  return norm;
}

std::size_t resolve_threads(std::optional<std::size_t> requested) {
  if (requested && *requested > 0) return *requested;
  if (const char* env = std::getenv("SSMND_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, const Fn& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::size_t argmax(const NdArray& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct SampleOut {
  std::vector<NdArray> grads;
  double loss = 0.0;
  bool correct = false;
};

}  // namespace

double top1_accuracy(const std::vector<NdArray>& logits, const std::vector<std::size_t>& labels) {
  if (logits.size() != labels.size()) throw ShapeError("logits and labels differ in count");
  if (logits.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) hits += argmax(logits[i]) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(logits.size());
}

EvalResult evaluate(const Model& model, const Dataset& data, std::size_t threads) {
  std::vector<NdArray> logits(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) { logits[i] = model.predict(data.inputs[i]); });
  EvalResult r;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tape t;
    r.loss += ops::softmax_cross_entropy(t.constant(logits[i]), data.labels[i]).value().item();
  }
  r.loss /= static_cast<double>(data.size());
  r.accuracy = top1_accuracy(logits, data.labels);
  return r;
}

TrainResult train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  std::size_t threads, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.input_shape != model.config().input_shape || val_set.input_shape != model.config().input_shape)
    throw ShapeError("dataset inputs " + shape_string(train_set.input_shape) + " do not match the model input " +
                     shape_string(model.config().input_shape));
  if (train_set.n_classes != model.config().n_classes || model.config().head != HeadType::Classification)
    throw ConfigError("model.head.n_classes", "must equal the task's " + std::to_string(train_set.n_classes) + " classes");

  ParamStore& store = model.params();
  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const LrSchedule schedule(cfg, steps_per_epoch);
  AdamW opt(store, cfg);
  threads = std::max<std::size_t>(1, threads);

  TrainResult result;
  result.initial = evaluate(model, val_set, threads);
  std::vector<std::size_t> order(n);
  std::size_t step = 0;

  try {
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      Rng shuffle_rng(mix(cfg.seed, 1000003 + epoch));
      shuffle_rng.shuffle(order);

      EpochMetrics em;
      em.epoch = epoch + 1;
      std::size_t hits = 0;
      double loss_sum = 0.0, norm_sum = 0.0;
      for (std::size_t start = 0; start < n; start += cfg.batch_size) {
        const std::size_t count = std::min(cfg.batch_size, n - start);
        std::vector<NdArray> sum;
        for (const auto& p : store.values()) sum.emplace_back(p.shape(), 0.0);
        std::vector<SampleOut> wave(threads);
        for (std::size_t w0 = 0; w0 < count; w0 += threads) {
          const std::size_t wn = std::min(threads, count - w0);
          parallel_for(wn, threads, [&](std::size_t k) {
            const std::size_t pos = start + w0 + k;
            const std::size_t idx = order[pos];
            Rng sample_rng(mix(cfg.seed, mix(epoch, pos)));
            Tape tape;
            Binding bind(tape, store);
            ForwardOptions fo;
            fo.training = true;
            fo.rng = &sample_rng;
            const ForwardResult fr = model.forward(bind, train_set.inputs[idx], fo);
            const Var loss = ops::softmax_cross_entropy(fr.output, train_set.labels[idx], cfg.label_smoothing);
            SampleOut& out = wave[k];
            out.loss = loss.value().item();
            out.correct = argmax(fr.output.value()) == train_set.labels[idx];
            out.grads = bind.gradients(tape.backward(loss));
          });
          for (std::size_t k = 0; k < wn; ++k) {
            loss_sum += wave[k].loss;
            hits += wave[k].correct;
            for (std::size_t p = 0; p < sum.size(); ++p)
              for (std::size_t i = 0; i < sum[p].size(); ++i) sum[p][i] += wave[k].grads[p][i];
          }
        }
        const double inv = 1.0 / static_cast<double>(count);
        for (auto& g : sum)
          for (auto& v : g.data()) v *= inv;
        const double norm = clip_global_norm(sum, cfg.grad_clip);
        if (!std::isfinite(loss_sum) || !std::isfinite(norm)) {
          result.diverged = true;
          result.message = "non-finite loss or gradient at epoch " + std::to_string(epoch + 1) + ", step " +
                           std::to_string(step + 1);
          return result;
        }
        norm_sum += norm;
        em.lr = schedule.at(step);
        opt.step(store, sum, em.lr);
        ++step;
      }
      em.train_loss = loss_sum / static_cast<double>(n);
      em.train_accuracy = static_cast<double>(hits) / static_cast<double>(n);
      em.grad_norm = norm_sum / static_cast<double>(steps_per_epoch);
      const EvalResult v = evaluate(model, val_set, threads);
      em.val_loss = v.loss;
      em.val_accuracy = v.accuracy;
      result.history.push_back(em);
      if (on_epoch) on_epoch(em);
      if (!std::isfinite(v.loss)) {
        result.diverged = true;
        result.message = "non-finite validation loss at epoch " + std::to_string(epoch + 1);
        return result;
      }
    }
  } catch (const InvalidDelta& e) {
    // Exploded parameters drive the step size to 0 or infinity inside the scan.
    result.diverged = true;
    result.message = std::string("numerical breakdown at step ") + std::to_string(step + 1) + ": " + e.what();
  }
  return result;
}

void write_metrics_csv(const std::string& path, const TrainResult& r) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "epoch,lr,train_loss,train_accuracy,val_loss,val_accuracy,grad_norm\n" << std::setprecision(17);
  for (const auto& e : r.history)
    out << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.train_accuracy << ',' << e.val_loss << ','
        << e.val_accuracy << ',' << e.grad_norm << '\n';
}

Json metrics_json(const TrainResult& r) {
  Json hist = Json::array();
  for (const auto& e : r.history)
    hist.push_back({{"epoch", e.epoch},
                    {"lr", e.lr},
                    {"train_loss", e.train_loss},
                    {"train_accuracy", e.train_accuracy},
                    {"val_loss", e.val_loss},
                    {"val_accuracy", e.val_accuracy},
                    {"grad_norm", e.grad_norm}});
  Json j = {{"diverged", r.diverged},
            {"initial", {{"val_loss", r.initial.loss}, {"val_accuracy", r.initial.accuracy}}},
            {"history", hist}};
  if (!r.message.empty()) j["message"] = r.message;
  if (!r.history.empty())
    j["final"] = {{"val_loss", r.history.back().val_loss}, {"val_accuracy", r.history.back().val_accuracy}};
  return j;
}

}  // namespace ssmnd
