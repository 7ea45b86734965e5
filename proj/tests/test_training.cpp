#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "ssmnd/errors.hpp"
#include "ssmnd/training.hpp"
#include "support.hpp"

using namespace ssmnd;
namespace fs = std::filesystem;

namespace {

ModelConfig toy_model(std::size_t h = 4, std::size_t w = 4) {
  ModelConfig c;
  c.input_shape = {h, w, 1};
  c.d_model = 8;
  c.n_layers = 2;
  c.d_state = 4;
  c.conv_width = 3;
  c.readout = Readout::FixedPosition;
  c.seed = 5;
  return c;
}

TrainConfig toy_train() {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 8;
  t.n_train = 24;
  t.n_val = 16;
  t.lr = 3e-3;
  t.warmup_epochs = 1;
  t.seed = 9;
  return t;
}

TaskSpec trap(std::size_t h = 4, std::size_t w = 4) { return {TaskKind::CausalTrap2D, {h, w}, 3}; }

bool equal(const NdArray& a, const NdArray& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

bool same_data(const Dataset& a, const Dataset& b) {
  if (a.labels != b.labels || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!equal(a.inputs[i], b.inputs[i])) return false;
  return true;
}

bool same_weights(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!equal(a.values()[i], b.values()[i])) return false;
  return true;
}

// Plug-in entropy in bits with the Miller-Madow correction (occupied bins - 1) / 2N nats.
double entropy_mm(const std::map<std::uint64_t, std::size_t>& counts, std::size_t n) {
  double h = 0.0;
  for (const auto& [k, c] : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(n);
    h -= p * std::log(p);
  }
  h += static_cast<double>(counts.size() - 1) / (2.0 * static_cast<double>(n));
  return h / std::log(2.0);
}

double mutual_information(const std::vector<std::uint64_t>& x, const std::vector<std::size_t>& y) {
  std::map<std::uint64_t, std::size_t> cx, cy, cxy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ++cx[x[i]];
    ++cy[y[i]];
    ++cxy[x[i] * 16 + y[i]];
  }
  return entropy_mm(cx, x.size()) + entropy_mm(cy, x.size()) - entropy_mm(cxy, x.size());
}

}  // namespace

TEST_CASE("task generation is deterministic and seed dependent") {
  for (auto kind : {TaskKind::CausalTrap2D, TaskKind::CrossParity2D, TaskKind::TemporalPointer3D}) {
    TaskSpec s{kind, {}, 7};
    const Dataset a = generate(s, 50), b = generate(s, 50);
    CHECK(same_data(a, b));
    CHECK_FALSE(same_data(a, generate(s, 50, 1)));
    s.seed = 8;
    CHECK_FALSE(same_data(a, generate(s, 50)));
    CHECK(a.input_shape == s.input_shape());
    for (const auto& x : a.inputs) CHECK(x.shape() == s.input_shape());
  }
}

TEST_CASE("class balance within 2%") {
  for (auto kind : {TaskKind::CausalTrap2D, TaskKind::CrossParity2D, TaskKind::TemporalPointer3D}) {
    const TaskSpec s{kind, {}, 1};
    for (std::size_t n : {999, 1000, 4001}) {
      const Dataset d = generate(s, n);
      std::vector<std::size_t> count(d.n_classes, 0);
      for (auto l : d.labels) ++count.at(l);
      for (auto c : count) CHECK(std::abs(static_cast<double>(c) / n - 1.0 / d.n_classes) <= 0.02);
    }
  }
}

TEST_CASE("labels follow each task's definition") {
  SUBCASE("causal trap: binary grid, label = bottom-right cell") {
    const Dataset d = generate(trap(5, 7), 200);
    for (std::size_t i = 0; i < d.size(); ++i) {
      for (double v : d.inputs[i].data()) CHECK((v == 0.0 || v == 1.0));
      CHECK(d.inputs[i].at({4, 6, 0}) == static_cast<double>(d.labels[i]));
    }
  }
  SUBCASE("cross parity: parity of bits in the marker's row and column") {
    const TaskSpec s{TaskKind::CrossParity2D, {6, 9}, 2};
    const Dataset d = generate(s, 300);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const NdArray& x = d.inputs[i];
      std::size_t markers = 0, mr = 0, mc = 0;
      for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 9; ++c)
          if (x.at({r, c, 1}) == 1.0) ++markers, mr = r, mc = c;
      REQUIRE(markers == 1);
      std::size_t parity = 0;
      for (std::size_t r = 0; r < 6; ++r)
        if (r != mr) parity ^= static_cast<std::size_t>(x.at({r, mc, 0}));
      for (std::size_t c = 0; c < 9; ++c)
        if (c != mc) parity ^= static_cast<std::size_t>(x.at({mr, c, 0}));
      CHECK(parity == d.labels[i]);
    }
  }
  SUBCASE("temporal pointer: quadrant lit in the marked frame") {
    const TaskSpec s{TaskKind::TemporalPointer3D, {5, 4, 6}, 4};
    const Dataset d = generate(s, 200);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const NdArray& x = d.inputs[i];
      std::size_t marked = 99, marks = 0;
      for (std::size_t f = 0; f < 5; ++f)
        for (std::size_t r = 0; r < 4; ++r)
          for (std::size_t c = 0; c < 6; ++c)
            if (x.at({f, r, c, 1}) == 1.0) ++marks, marked = f;
      REQUIRE(marks == 1);
      std::size_t lit = 0, quadrant = 0;
      for (std::size_t q = 0; q < 4; ++q) {
        double sum = 0.0;
        for (std::size_t r = (q / 2) * 2; r < (q / 2) * 2 + 2; ++r)
          for (std::size_t c = (q % 2) * 3; c < (q % 2) * 3 + 3; ++c) sum += x.at({marked, r, c, 0});
        if (sum == 6.0) ++lit, quadrant = q;
        else CHECK(sum == 0.0);
      }
      CHECK(lit == 1);
      CHECK(quadrant == d.labels[i]);
    }
  }
}

TEST_CASE("cross parity cannot be solved from any single row") {
  const TaskSpec s{TaskKind::CrossParity2D, {8, 8}, 11};
  const Dataset d = generate(s, 10000);
  for (std::size_t r = 0; r < 8; ++r) {
    std::vector<std::uint64_t> row(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      std::uint64_t bits = 0;
      for (std::size_t c = 0; c < 8; ++c) bits = bits * 2 + static_cast<std::uint64_t>(d.inputs[i].at({r, c, 0}));
      row[i] = bits;
    }
    CAPTURE(r);
    CHECK(mutual_information(row, d.labels) < 0.05);
  }
  // The same estimator sees the full bit of information in the cross parity itself.
  std::vector<std::uint64_t> parity(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) parity[i] = d.labels[i];
  CHECK(mutual_information(parity, d.labels) > 0.99);
}

TEST_CASE("task errors") {
  CHECK_THROWS_AS(parse_task("imagenet"), TaskError);
  CHECK(parse_task("temporal-pointer-3d") == TaskKind::TemporalPointer3D);
  CHECK_THROWS_AS(generate(trap(), 0), TaskError);
  CHECK_THROWS_AS(generate({TaskKind::CausalTrap2D, {4, 4, 4}, 0}, 4), TaskError);
  CHECK_THROWS_AS(generate({TaskKind::TemporalPointer3D, {4, 1, 6}, 0}, 4), TaskError);
  CHECK_THROWS_AS(task_from_json(Json{{"name", "nope"}}), ConfigError);
  const TaskSpec s{TaskKind::CrossParity2D, {5, 7}, 3};
  const TaskSpec back = task_from_json(to_json(s));
  CHECK(back.kind == s.kind);
  CHECK(back.grid == s.grid);
  CHECK(back.seed == s.seed);
  try {
    task_from_json(Json{{"name", "cross-parity-2d"}, {"grid", {8}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.path() == "task.grid");
  }
}

TEST_CASE("cosine schedule endpoints") {
  TrainConfig c;
  c.epochs = 10;
  c.lr = 1e-3;
  c.warmup_epochs = 2;
  c.warmup_start_lr = 1e-6;
  const LrSchedule s(c, 7);
  REQUIRE(s.total_steps() == 70);
  CHECK(s.at(0) == 1e-6);
  CHECK(s.at(69) <= 1e-2 * c.lr);
  CHECK(s.at(69) == doctest::Approx(c.lr * c.min_lr_ratio).epsilon(1e-12));
  CHECK(s.at(14) == doctest::Approx(c.lr).epsilon(1e-12));
  for (std::size_t k = 1; k < 14; ++k) CHECK(s.at(k) > s.at(k - 1));
  for (std::size_t k = 15; k < 70; ++k) CHECK(s.at(k) < s.at(k - 1));
  // Halfway through the decay the cosine sits at the midpoint.
  const TrainConfig c2 = [] {
    TrainConfig t;
    t.epochs = 4;
    t.warmup_epochs = 0;
    t.min_lr_ratio = 0.0;
    return t;
  }();
  const LrSchedule s2(c2, 25);
  CHECK(s2.at(0) == doctest::Approx(c2.lr));
  CHECK(s2.at(99) == doctest::Approx(0.0));
  CHECK(s2.at(99 / 2) == doctest::Approx(0.5 * c2.lr * (1 + std::cos(M_PI * 49.0 / 99.0))));
}

TEST_CASE("AdamW decay mask, lr multiplier and first step") {
  ParamStore store;
  store.add("patch.weight", NdArray({2, 3}, 0.5));
  store.add("layers.0.in_proj", NdArray({2, 2}, -1.0));
  store.add("layers.0.A_log", NdArray({2, 2}, 0.25));
  store.add("layers.0.D", NdArray({2}, 2.0));
  store.add("head.bias", NdArray({3}, 1.0));
  TrainConfig c;
  c.weight_decay = 0.1;
  c.backbone_lr_mult = 0.1;
  AdamW opt(store, c);
  CHECK(opt.decays(0));
  CHECK(opt.decays(1));
  CHECK_FALSE(opt.decays(2));
  CHECK_FALSE(opt.decays(3));
  CHECK_FALSE(opt.decays(4));
  CHECK(opt.lr_mult(0) == 1.0);
  CHECK(opt.lr_mult(1) == 0.1);
  CHECK(opt.lr_mult(3) == 0.1);
  CHECK(opt.lr_mult(4) == 1.0);

  const ParamStore before = store;
  std::vector<NdArray> grads;
  for (const auto& p : store.values()) grads.emplace_back(p.shape(), 0.0);
  grads[0][0] = 2.0;
  grads[1][1] = -3.0;
  grads[2][0] = 0.5;
  grads[4][2] = -1e-3;
  const double lr = 0.01;
  opt.step(store, grads, lr);
  // After one step the bias-corrected moments are g and g^2.
  for (std::size_t k = 0; k < store.size(); ++k) {
    for (std::size_t i = 0; i < store.values()[k].size(); ++i) {
      const double p0 = before.values()[k][i], g = grads[k][i];
      const double wd = opt.decays(k) ? c.weight_decay : 0.0;
      const double expect = p0 - lr * opt.lr_mult(k) * (g / (std::abs(g) + c.adam_eps) + wd * p0);
      CHECK(store.values()[k][i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  CHECK(opt.steps() == 1);
}

TEST_CASE("global norm clipping") {
  std::vector<NdArray> g{NdArray({2}, 3.0), NdArray({1}, 4.0)};
  g[0][1] = 0.0;
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g[0][0] == 3.0);
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0][0] == doctest::Approx(0.6));
  CHECK(g[1][0] == doctest::Approx(0.8));
  std::vector<NdArray> h{NdArray({2}, 100.0)};
  CHECK(clip_global_norm(h, 0.0) == doctest::Approx(std::sqrt(2.0) * 100));
  CHECK(h[0][0] == 100.0);
}

TEST_CASE("top-1 accuracy") {
  Rng rng(17);
  std::vector<NdArray> logits;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 4000; ++i) {
    logits.push_back(rng.normal_array({2}));
    labels.push_back(i % 2);
  }
  CHECK(std::abs(top1_accuracy(logits, labels) - 0.5) <= 0.03);

  std::vector<NdArray> perfect;
  for (auto l : labels) {
    NdArray v({2}, 0.0);
    v[l] = 1.0;
    perfect.push_back(v);
  }
  CHECK(top1_accuracy(perfect, labels) == 1.0);

  const double base = top1_accuracy(logits, labels);
  std::vector<std::size_t> perm(labels.size());
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<NdArray> l2;
  std::vector<std::size_t> y2;
  for (auto p : perm) l2.push_back(logits[p]), y2.push_back(labels[p]);
  CHECK(top1_accuracy(l2, y2) == base);

  // Ties resolve to the first class.
  CHECK(top1_accuracy({NdArray({3}, 1.0)}, {0}) == 1.0);
  CHECK_THROWS_AS(top1_accuracy(logits, {0}), ShapeError);
}

TEST_CASE("evaluate is independent of order and thread count") {
  const Model m(toy_model());
  const Dataset d = generate(trap(), 40);
  const EvalResult a = evaluate(m, d, 1), b = evaluate(m, d, 3);
  CHECK(a.loss == b.loss);
  CHECK(a.accuracy == b.accuracy);
  Dataset r = d;
  std::reverse(r.inputs.begin(), r.inputs.end());
  std::reverse(r.labels.begin(), r.labels.end());
  CHECK(evaluate(m, r).accuracy == a.accuracy);
  CHECK(evaluate(m, r).loss == doctest::Approx(a.loss).epsilon(1e-12));
}

TEST_CASE("zero learning rate leaves the untrained baseline") {
  TrainConfig t = toy_train();
  t.lr = 0.0;
  t.warmup_start_lr = 0.0;
  Model m(toy_model());
  const ParamStore before = m.params();
  const Dataset tr = generate(trap(), t.n_train, 0), va = generate(trap(), t.n_val, 1);
  const TrainResult r = train(m, tr, va, t);
  REQUIRE_FALSE(r.diverged);
  REQUIRE(r.history.size() == 2);
  CHECK(same_weights(before, m.params()));
  for (const auto& e : r.history) {
    CHECK(e.val_accuracy == r.initial.accuracy);
    CHECK(e.val_loss == r.initial.loss);
    CHECK(e.lr == 0.0);
  }
}

TEST_CASE("training is bit-reproducible and thread-count independent") {
  const TrainConfig t = toy_train();
  const Dataset tr = generate(trap(), t.n_train, 0), va = generate(trap(), t.n_val, 1);
  ModelConfig mc = toy_model();
  mc.drop_path = 0.2;  // exercises the per-sample random streams
  Model a(mc), b(mc), c(mc);
  const TrainResult ra = train(a, tr, va, t, 1);
  const TrainResult rb = train(b, tr, va, t, 1);
  const TrainResult rc = train(c, tr, va, t, 3);
  CHECK(same_weights(a.params(), b.params()));
  CHECK(same_weights(a.params(), c.params()));
  CHECK_FALSE(same_weights(a.params(), Model(mc).params()));
  for (std::size_t e = 0; e < ra.history.size(); ++e) {
    CHECK(ra.history[e].train_loss == rc.history[e].train_loss);
    CHECK(ra.history[e].grad_norm == rc.history[e].grad_norm);
  }
  TrainConfig t2 = t;
  t2.seed = 10;
  Model d(mc);
  train(d, tr, va, t2, 1);
  CHECK_FALSE(same_weights(a.params(), d.params()));
}

TEST_CASE("training lowers the loss on a directly visible label") {
  // Label copied into token 0, where the fixed-position readout sees it.
  Dataset tr = generate(trap(), 64, 0), va = generate(trap(), 32, 1);
  for (auto* d : {&tr, &va})
    for (auto& x : d->inputs) std::swap(x[0], x[x.size() - 1]);
  TrainConfig t = toy_train();
  t.epochs = 6;
  t.lr = 1e-2;
  Model m(toy_model());
  const TrainResult r = train(m, tr, va, t);
  REQUIRE_FALSE(r.diverged);
  CHECK(r.history.back().val_loss < 0.5 * r.initial.loss);
  CHECK(r.history.back().val_accuracy == 1.0);
}

TEST_CASE("divergence is reported, not thrown") {
  TrainConfig t = toy_train();
  t.lr = 1e200;
  t.warmup_epochs = 0;
  Model m(toy_model());
  const Dataset tr = generate(trap(), t.n_train, 0), va = generate(trap(), t.n_val, 1);
  TrainResult r;
  CHECK_NOTHROW(r = train(m, tr, va, t));
  CHECK(r.diverged);
  CHECK_FALSE(r.message.empty());
  CHECK(metrics_json(r)["diverged"] == true);
}

TEST_CASE("train rejects mismatched tasks") {
  Model m(toy_model());
  const Dataset wrong = generate(trap(5, 5), 4);
  CHECK_THROWS_AS(train(m, wrong, wrong, toy_train()), ShapeError);
  const Dataset cp = generate({TaskKind::TemporalPointer3D, {}, 0}, 4);
  ModelConfig mc = toy_model();
  mc.rank = 3;
  mc.input_shape = cp.input_shape;
  mc.patch = {1, 2, 2};
  Model m3(mc);
  CHECK_THROWS_AS(train(m3, cp, cp, toy_train()), ConfigError);
}

TEST_CASE("train config JSON") {
  for (double lr : {1e-3, 6e-4, 1e-4}) {
    TrainConfig c;
    c.lr = lr;
    c.seed = 42;
    c.backbone_lr_mult = 0.1;
    c.randaug_n = 2;
    c.randaug_m = 9;
    const TrainConfig back = train_config_from_json(to_json(c));
    CHECK(back.lr == lr);
    CHECK(to_json(back) == to_json(c));
  }
  auto path_of = [](Json j) {
    try {
      train_config_from_json(j);
    } catch (const ConfigError& e) {
      return e.path();
    }
    return std::string("none");
  };
  CHECK(path_of({{"lr", -1.0}}) == "train.lr");
  CHECK(path_of({{"epochs", 2}, {"warmup_epochs", 3}}) == "train.warmup_epochs");
  CHECK(path_of({{"mixup", 0.8}}) == "train.mixup");
  CHECK(path_of({{"ema_decay", 0.9999}}) == "train.ema_decay");
  CHECK(path_of({{"betas", {0.9}}}) == "train.betas");
  CHECK(path_of({{"betas", {0.9, "x"}}}) == "train.betas[1]");
  CHECK(path_of({{"lr_typo", 1}}) == "train.lr_typo");
  CHECK(path_of({{"randaug", {{"n", 2}, {"q", 1}}}}) == "train.randaug.q");
  CHECK(path_of(Json::object()) == "none");
}

TEST_CASE("metrics files") {
  TrainResult r;
  r.initial = {0.7, 0.5};
  r.history.push_back({1, 1e-3, 0.69, 0.52, 0.68, 0.55, 1.5});
  r.history.push_back({2, 1e-6, 0.5, 0.8, 0.45, 0.9, 0.7});
  const fs::path dir = fs::temp_directory_path() / "ssmnd_metrics_test";
  fs::create_directories(dir);
  write_metrics_csv((dir / "m.csv").string(), r);
  std::ifstream in(dir / "m.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "epoch,lr,train_loss,train_accuracy,val_loss,val_accuracy,grad_norm");
  CHECK(lines[2].rfind("2,", 0) == 0);
  const Json j = metrics_json(r);
  CHECK(j["history"].size() == 2);
  CHECK(j["final"]["val_accuracy"].get<double>() == 0.9);
  CHECK(j["initial"]["val_accuracy"].get<double>() == 0.5);
  fs::remove_all(dir);
}

TEST_CASE("thread resolution") {
  CHECK(resolve_threads(3) == 3);
  setenv("SSMND_THREADS", "5", 1);
  CHECK(resolve_threads(std::nullopt) == 5);
  CHECK(resolve_threads(2) == 2);
  setenv("SSMND_THREADS", "bogus", 1);
  CHECK(resolve_threads(std::nullopt) >= 1);
  unsetenv("SSMND_THREADS");
}
