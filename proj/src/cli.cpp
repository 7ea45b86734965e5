#include "ssmnd/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>

#include "ssmnd/analysis.hpp"
#include "ssmnd/blocks.hpp"
#include "ssmnd/checkpoint.hpp"
#include "ssmnd/errors.hpp"
#include "ssmnd/inflation.hpp"
#include "ssmnd/orderings.hpp"
#include "ssmnd/training.hpp"

namespace ssmnd {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Json read_json_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(file, "cannot open");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(file, e.what());
  }
}

void write_json_file(const fs::path& file, const Json& j) {
  std::ofstream out(file);
  if (!out) throw CheckpointError("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

// A path to a JSON config, or a preset name.
ModelConfig resolve_model(const std::string& spec) {
  if (fs::is_regular_file(spec)) return model_config_from_json(read_json_file(spec));
  if (spec.find('/') != std::string::npos || spec.ends_with(".json"))
    throw ConfigError("--model", "no such file '" + spec + "'");
  return preset_model_config(spec);
}

TaskSpec resolve_task(const std::string& spec) {
  if (fs::is_regular_file(spec)) return task_from_json(read_json_file(spec));
  TaskSpec t;
  t.kind = parse_task(spec);
  return t;
}

DType resolve_dtype(const std::string& s) {
  try {
    return parse_dtype(s);
  } catch (const Error& e) {
    throw ConfigError("--dtype", e.what());
  }
}

std::size_t threads_from(const std::optional<std::size_t>& t) { return resolve_threads(t); }

std::size_t perfect_root(std::size_t n) {
  auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (r * r != n) throw UsageError("--range bounds must be perfect squares, got " + std::to_string(n));
  return r;
}

void print_epoch(std::ostream& out, const EpochMetrics& e) {
  out << "epoch " << e.epoch << "  lr " << std::scientific << std::setprecision(3) << e.lr << std::fixed
      << std::setprecision(4) << "  train_loss " << e.train_loss << "  train_acc " << e.train_accuracy
      << "  val_loss " << e.val_loss << "  val_acc " << e.val_accuracy << "  grad_norm " << e.grad_norm << "\n"
      << std::defaultfloat << std::flush;
}

struct Options {
  std::string model, task, train_file, out, ckpt, plan, dtype = "float64", arch = "both", range = "196:12544";
  std::vector<std::string> outputs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads, probe, groups;
  std::size_t n = 500, stream = 1, rank = 2, d = 768, vit_layers = 12, mamba_layers = 24;
  bool continuous = false, breakdown = false;
};

int cmd_train(const Options& o, std::ostream& out) {
  ModelConfig mc = resolve_model(o.model);
  TaskSpec task = resolve_task(o.task);
  TrainConfig tc = o.train_file.empty() ? TrainConfig{} : train_config_from_json(read_json_file(o.train_file));
  if (o.seed) {
    mc.seed = *o.seed;
    tc.seed = *o.seed;
    if (!fs::is_regular_file(o.task)) task.seed = *o.seed;
  }
  mc.validate();
  tc.validate();
  if (mc.input_shape != task.input_shape())
    throw ConfigError("model.input_shape", "is " + shape_string(mc.input_shape) + " but " + to_string(task.kind) +
                                               " produces " + shape_string(task.input_shape()));
  if (mc.n_classes != task.n_classes())
    throw ConfigError("model.head.n_classes", "is " + std::to_string(mc.n_classes) + " but " +
                                                  to_string(task.kind) + " has " +
                                                  std::to_string(task.n_classes()) + " classes");

  const fs::path dir(o.out);
  fs::create_directories(dir);
  write_json_file(dir / "model.json", to_json(mc));
  write_json_file(dir / "task.json", to_json(task));
  write_json_file(dir / "train.json", to_json(tc));

  const Dataset train_set = generate(task, tc.n_train, 0);
  const Dataset val_set = generate(task, tc.n_val, 1);
  Model model(mc);
  const std::size_t threads = threads_from(o.threads);
  out << "training " << mc.name << " (" << param_count(mc) << " parameters) on " << to_string(task.kind) << ", "
      << tc.n_train << " samples, " << tc.epochs << " epochs\n";
  const TrainResult r = train(model, train_set, val_set, tc, threads, [&](const EpochMetrics& e) { print_epoch(out, e); });
  write_metrics_csv((dir / "metrics.csv").string(), r);
  write_json_file(dir / "metrics.json", metrics_json(r));
  if (r.diverged) {
    out << "diverged: " << r.message << "\nno checkpoint written\n";
    return 0;
  }
  save_model((dir / "checkpoint").string(), model, resolve_dtype(o.dtype));
  out << "final val_acc " << r.history.back().val_accuracy << "; run written to " << dir.string() << "\n";
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Model model = load_model(o.ckpt);
  TaskSpec task = resolve_task(o.task);
  if (o.seed && !fs::is_regular_file(o.task)) task.seed = *o.seed;
  if (model.config().input_shape != task.input_shape())
    throw ConfigError("--task", to_string(task.kind) + " produces " + shape_string(task.input_shape()) +
                                    " but the checkpoint expects " + shape_string(model.config().input_shape));
  const Dataset data = generate(task, o.n, o.stream);
  const EvalResult r = evaluate(model, data, threads_from(o.threads));
  out << Json{{"task", to_string(task.kind)}, {"n", o.n}, {"loss", r.loss}, {"accuracy", r.accuracy}}.dump() << "\n";
  return 0;
}

int cmd_init(const Options& o, std::ostream& out) {
  ModelConfig mc = resolve_model(o.model);
  if (o.seed) mc.seed = *o.seed;
  const Model model(mc);
  save_model(o.out, model, resolve_dtype(o.dtype));
  out << "wrote " << o.out << " (" << model.params().scalar_count() << " parameters)\n";
  return 0;
}

int cmd_erf(const Options& o, std::ostream& out) {
  if (o.ckpt.empty() == o.model.empty()) throw UsageError("erf needs exactly one of --ckpt and --model");
  std::optional<Model> model;
  if (!o.ckpt.empty()) {
    model.emplace(load_model(o.ckpt));
  } else {
    ModelConfig mc = resolve_model(o.model);
    if (o.seed) mc.seed = *o.seed;
    model.emplace(mc);
  }
  Rng rng(o.seed.value_or(0));
  const NdArray input = rng.normal_array(model->config().input_shape);
  const ErfMap map = o.groups ? compute_erf(*model, input, o.probe, *o.groups) : compute_erf(*model, input, o.probe);
  for (const auto& path : o.outputs) {
    if (path.ends_with(".pgm")) write_erf_pgm(path, map);
    else if (path.ends_with(".csv")) write_erf_csv(path, map);
    else throw UsageError("--out must end in .csv or .pgm: " + path);
  }
  std::size_t support = 0;
  for (double v : map.raw.data()) support += v != 0.0;
  out << "probe " << map.probe << " on grid " << shape_string(map.grid) << ": " << support << " of " << map.raw.size()
      << " tokens influence it\n";
  return 0;
}

int cmd_bench(const Options& o, std::ostream& out) {
  const auto colon = o.range.find(':');
  if (colon == std::string::npos) throw UsageError("--range expects LMIN:LMAX");
  std::size_t lo = 0, hi = 0;
  try {
    lo = std::stoul(o.range.substr(0, colon));
    hi = std::stoul(o.range.substr(colon + 1));
  } catch (const std::exception&) {
    throw UsageError("--range expects two integers LMIN:LMAX");
  }
  const std::size_t k0 = perfect_root(lo), k1 = perfect_root(hi);
  if (k0 == 0 || k0 > k1) throw UsageError("--range needs 0 < LMIN <= LMAX");
  if (o.arch != "both") parse_arch(o.arch);
  const auto curve = bench_curve(square_lengths(k0, k1), o.d, o.vit_layers, o.mamba_layers);
  const bool vit = o.arch != "mamba", mamba = o.arch != "vit";
  if (!o.out.empty()) {
    if (vit && mamba) {
      write_curve_csv(o.out, curve);
    } else {
      std::ofstream f(o.out);
      if (!f) throw UsageError("cannot write " + o.out);
      f << "length," << (vit ? "vit" : "mamba") << "_flops\n" << std::setprecision(17);
      for (const auto& p : curve) f << p.length << "," << (vit ? p.vit : p.mamba) << "\n";
    }
  }
  out << "D=" << o.d << ", " << o.vit_layers << " ViT blocks vs " << o.mamba_layers << " Mamba layers, "
      << curve.size() << " lengths from " << lo << " to " << hi << "\n";
  out << std::setprecision(4);
  for (const auto& p : {curve.front(), curve.back()}) {
    out << "  L=" << p.length;
    if (vit) out << "  vit " << p.vit;
    if (mamba) out << "  mamba " << p.mamba;
    out << "\n";
  }
  const double l = static_cast<double>(hi);
  if (vit) out << "  vit flops(2L)/flops(L) at L=" << hi << ": " << flops(Arch::ViT, 2 * l, o.d, 1) / flops(Arch::ViT, l, o.d, 1) << "\n";
  if (mamba) out << "  mamba flops(2L)/flops(L): " << flops(Arch::Mamba, 2 * l, o.d, 1) / flops(Arch::Mamba, l, o.d, 1) << "\n";
  if (vit && mamba) {
    if (const auto x = crossover(curve)) out << "  mamba cheaper from L=" << *x << "\n";
    else out << "  mamba never cheaper in this range\n";
  }
  return 0;
}

int cmd_inflate(const Options& o, std::ostream& out) {
  if (o.ckpt.empty() == o.model.empty()) throw UsageError("inflate needs exactly one of --ckpt and --model");
  InflationPlan plan = o.plan.empty() ? InflationPlan{} : plan_from_json(read_json_file(o.plan));
  if (o.seed) plan.seed = *o.seed;
  std::optional<Model> m2d;
  if (!o.ckpt.empty()) {
    m2d.emplace(load_model(o.ckpt));
  } else {
    ModelConfig mc = resolve_model(o.model);
    if (o.seed) mc.seed = *o.seed;
    m2d.emplace(mc);
  }
  const InflationResult r = inflate_model(*m2d, plan);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  write_json_file(dir / "plan.json", to_json(plan));
  save_model((dir / "checkpoint").string(), r.model, resolve_dtype(o.dtype));
  const auto& cfg = r.model.config();
  out << "inflated " << m2d->config().n_layers << " -> " << cfg.n_layers << " layers: "
      << to_grammar(cfg.arrangement_spec()) << "\n";
  out << "input " << shape_string(cfg.input_shape) << ", patch " << shape_string(cfg.patch) << ", "
      << r.new_layers.size() << " new temporal layers\n";
  return 0;
}

int cmd_orderings(const Options& o, std::ostream& out) {
  if (o.rank == 0) throw UsageError("--rank must be positive");
  const auto list = o.continuous ? axis_continuous_orderings(o.rank) : enumerate_orderings(o.rank);
  const std::string letters = axis_letters(o.rank);
  for (const auto& ord : list)
    out << std::left << std::setw(8) << ordering_name(ord) << std::setw(10) << explicit_name(ord)
        << "continuous axis " << letters[ord.continuous_axis()] << "\n";
  out << list.size() << " orderings for rank " << o.rank << "\n";
  return 0;
}

int cmd_paramcount(const Options& o, std::ostream& out) {
  const ModelConfig mc = resolve_model(o.model);
  mc.validate();
  const std::size_t total = param_count(mc);
  out << mc.name << ": " << total << " parameters (" << std::setprecision(4) << total / 1e6 << "M)\n";
  if (mc.n_layers >= 2) {
    ModelConfig one = mc;
    one.n_layers = 1;
    const double per_layer = static_cast<double>(total - param_count(one)) / static_cast<double>(mc.n_layers - 1);
    const auto vit = vit_block_param_count(mc.d_model);
    out << "per layer " << per_layer << "; one ViT block at D=" << mc.d_model << ": " << vit
        << "; two layers / ViT block = " << 2.0 * per_layer / static_cast<double>(vit) << "\n";
  }
  if (o.breakdown) {
    const Model m(mc);
    for (std::size_t i = 0; i < m.params().size(); ++i)
      out << "  " << m.params().names()[i] << " " << shape_string(m.params().values()[i].shape()) << " "
          << m.params().values()[i].size() << "\n";
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"N-dimensional selective state space models: training, analysis and inflation"};
  app.require_subcommand(1);
  Options o;
  auto threads = [&](CLI::App* c) {
    c->add_option("--threads", o.threads, "worker threads (default: SSMND_THREADS, else all cores)")
        ->check(CLI::PositiveNumber);
  };
  auto seed = [&](CLI::App* c, const std::string& what) { c->add_option("--seed", o.seed, what); };

  auto* train = app.add_subcommand("train", "train a model on a synthetic task");
  train->add_option("--model", o.model, "model config JSON or preset name")->required();
  train->add_option("--task", o.task, "task name or task JSON")->required();
  train->add_option("--train", o.train_file, "training config JSON (defaults otherwise)");
  train->add_option("--out", o.out, "run directory")->required();
  train->add_option("--dtype", o.dtype, "checkpoint dtype: float32 or float64")->capture_default_str();
  seed(train, "overrides the model, training and (named) task seeds");
  threads(train);

  auto* eval = app.add_subcommand("eval", "top-1 accuracy of a checkpoint on a task");
  eval->add_option("--ckpt", o.ckpt, "checkpoint directory")->required();
  eval->add_option("--task", o.task, "task name or task JSON")->required();
  eval->add_option("--n", o.n, "number of samples")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--stream", o.stream, "data stream (0 = training, 1 = validation)")->capture_default_str();
  seed(eval, "task seed for a named task");
  threads(eval);

  auto* init = app.add_subcommand("init", "write a freshly initialized checkpoint");
  init->add_option("--model", o.model, "model config JSON or preset name")->required();
  init->add_option("--out", o.out, "checkpoint directory")->required();
  init->add_option("--dtype", o.dtype, "float32 or float64")->capture_default_str();
  seed(init, "initialization seed");

  auto* erf = app.add_subcommand("erf", "effective receptive field of one output token");
  erf->add_option("--ckpt", o.ckpt, "checkpoint directory");
  erf->add_option("--model", o.model, "model config JSON or preset (fresh initialization)");
  erf->add_option("--probe", o.probe, "flattened token index (default: grid centre)");
  erf->add_option("--groups", o.groups, "run only the first N arrangement groups");
  erf->add_option("--out", o.outputs, "output files, .csv and/or .pgm");
  seed(erf, "seed of the random input (and of a fresh model)");

  auto* bench = app.add_subcommand("bench", "FLOP curves of ViT blocks against Mamba layers");
  bench->add_option("--arch", o.arch, "vit, mamba or both")
      ->check(CLI::IsMember({"vit", "mamba", "both"}))
      ->capture_default_str();
  bench->add_option("--range", o.range, "sequence lengths LMIN:LMAX, both perfect squares")->capture_default_str();
  bench->add_option("--d", o.d, "model width")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--vit-layers", o.vit_layers, "ViT blocks")->capture_default_str();
  bench->add_option("--mamba-layers", o.mamba_layers, "Mamba layers")->capture_default_str();
  bench->add_option("--out", o.out, "CSV output");

  auto* inflate = app.add_subcommand("inflate", "inflate a 2-D model into a 3-D one");
  inflate->add_option("--ckpt", o.ckpt, "2-D checkpoint directory");
  inflate->add_option("--model", o.model, "2-D model config JSON or preset (fresh initialization)");
  inflate->add_option("--plan", o.plan, "inflation plan JSON (defaults otherwise)");
  inflate->add_option("--out", o.out, "output directory")->required();
  inflate->add_option("--dtype", o.dtype, "float32 or float64")->capture_default_str();
  seed(inflate, "seed for the new temporal layers");

  auto* orderings = app.add_subcommand("orderings", "list the scan orderings of a grid rank");
  orderings->add_option("--rank", o.rank, "grid rank")->capture_default_str();
  orderings->add_flag("--continuous", o.continuous, "only the axis-continuous orderings");

  auto* paramcount = app.add_subcommand("paramcount", "parameter count of a model config");
  paramcount->add_option("--model", o.model, "model config JSON or preset name")->required();
  paramcount->add_flag("--breakdown", o.breakdown, "list every tensor");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return cmd_train(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (init->parsed()) return cmd_init(o, out);
    if (erf->parsed()) return cmd_erf(o, out);
    if (bench->parsed()) return cmd_bench(o, out);
    if (inflate->parsed()) return cmd_inflate(o, out);
    if (orderings->parsed()) return cmd_orderings(o, out);
    if (paramcount->parsed()) return cmd_paramcount(o, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace ssmnd
