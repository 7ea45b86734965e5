#include "ssmnd/model.hpp"

#include <cmath>
#include <fstream>

#include "ssmnd/errors.hpp"
#include "ssmnd/ops.hpp"

namespace ssmnd {

Shape ModelConfig::token_grid() const {
  Shape grid;
  for (std::size_t i = 0; i < rank; ++i) grid.push_back(input_shape.at(i) / patch.at(i));
  return grid;
}

std::size_t ModelConfig::token_dim() const { return shape_size(patch) * channels(); }

MambaDims ModelConfig::dims() const { return MambaDims{d_model, expand, d_state, conv_width, dt_rank}; }

ArrangementSpec ModelConfig::arrangement_spec() const {
  return build_arrangement(arrangement, rank, n_layers, layer_kind, factorization);
}

ForwardContext ModelConfig::context() const {
  ForwardContext ctx;
  ctx.mode = scan_mode;
  ctx.euler_b = euler_b;
  ctx.use_d_skip = d_skip;
  ctx.factorization = factorization;
  return ctx;
}

void ModelConfig::validate() const {
  if (rank < 1 || rank > 3) throw ConfigError("model.rank", "must be 1, 2 or 3");
  if (input_shape.size() != rank + 1)
    throw ConfigError("model.input_shape", "needs " + std::to_string(rank + 1) + " extents (spatial..., channels)");
  if (patch.size() != rank) throw ConfigError("model.patch", "needs one extent per spatial axis");
  for (std::size_t i = 0; i < rank; ++i) {
    if (patch[i] == 0 || input_shape[i] % patch[i] != 0)
      throw ConfigError("model.patch[" + std::to_string(i) + "]",
                        "must divide input extent " + std::to_string(input_shape[i]));
  }
  for (std::size_t i = 0; i < input_shape.size(); ++i)
    if (input_shape[i] == 0) throw ConfigError("model.input_shape[" + std::to_string(i) + "]", "must be positive");
  if (d_model == 0) throw ConfigError("model.d_model", "must be positive");
  if (n_layers == 0) throw ConfigError("model.n_layers", "must be positive");
  if (expand == 0 || d_state == 0 || conv_width == 0) throw ConfigError("model", "expand, d_state and conv_width must be positive");
  try {
    const ArrangementSpec spec = arrangement_spec();
    for (const auto& slot : spec.layers()) mamba_layer_param_count(dims(), slot.kind, rank);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("model.arrangement", e.what());
  }
  if (head == HeadType::Classification && n_classes == 0) throw ConfigError("model.head.n_classes", "must be positive");
  if (head == HeadType::Regression && out_channels == 0) throw ConfigError("model.head.channels", "must be positive");
  if (readout == Readout::FixedPosition && readout_index >= token_count())
    throw ConfigError("model.readout.index", "must be below the token count " + std::to_string(token_count()));
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout", "must be in [0, 1)");
  if (!(drop_path >= 0.0 && drop_path < 1.0)) throw ConfigError("model.drop_path", "must be in [0, 1)");
}

Json to_json(const ModelConfig& c) {
  Json j;
  j["name"] = c.name;
  j["rank"] = c.rank;
  j["input_shape"] = c.input_shape;
  j["patch"] = c.patch;
  j["d_model"] = c.d_model;
  j["n_layers"] = c.n_layers;
  j["arrangement"] = c.arrangement;
  j["layer_kind"] = to_string(c.layer_kind);
  j["factorization"] = to_string(c.factorization);
  j["expand"] = c.expand;
  j["d_state"] = c.d_state;
  j["conv_width"] = c.conv_width;
  j["dt_rank"] = c.dt_rank;
  if (c.head == HeadType::Classification) j["head"] = {{"type", "classification"}, {"n_classes", c.n_classes}};
  else j["head"] = {{"type", "regression"}, {"channels", c.out_channels}};
  if (c.readout == Readout::MeanPool) j["readout"] = {{"type", "mean-pool"}};
  else j["readout"] = {{"type", "fixed-position"}, {"index", c.readout_index}};
  j["dropout"] = c.dropout;
  j["drop_path"] = c.drop_path;
  j["scan_mode"] = c.scan_mode == ssm::ScanMode::Sequential ? "sequential" : "parallel";
  j["euler_b"] = c.euler_b;
  j["d_skip"] = c.d_skip;
  j["zero_out_proj"] = c.zero_out_proj;
  j["zero_head"] = c.zero_head;
  j["seed"] = c.seed;
  return j;
}

ModelConfig model_config_from_json(const Json& j, const std::string& path) {
  JsonFields f(j, path);
  ModelConfig c;
  c.name = f.get<std::string>("name", c.name);
  c.rank = f.get<std::size_t>("rank");
  c.input_shape = f.extents("input_shape");
  c.patch = f.extents("patch");
  c.d_model = f.positive("d_model");
  c.n_layers = f.positive("n_layers");
  c.arrangement = f.get<std::string>("arrangement", c.arrangement);
  try {
    c.layer_kind = parse_layer_kind(f.get<std::string>("layer_kind", "1d"));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(f.field("layer_kind"), e.what());
  }
  try {
    c.factorization = parse_factorization(f.get<std::string>("factorization", "3D"));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(f.field("factorization"), e.what());
  }
  c.expand = f.positive("expand", c.expand);
  c.d_state = f.positive("d_state", c.d_state);
  c.conv_width = f.positive("conv_width", c.conv_width);
  c.dt_rank = f.get<std::size_t>("dt_rank", c.dt_rank);

  if (f.has("head")) {
    JsonFields h(f.raw("head"), f.field("head"));
    const auto type = h.get<std::string>("type");
    if (type == "classification") {
      c.head = HeadType::Classification;
      c.n_classes = h.positive("n_classes");
    } else if (type == "regression") {
      c.head = HeadType::Regression;
      c.out_channels = h.positive("channels");
    } else {
      throw ConfigError(h.field("type"), "expected 'classification' or 'regression'");
    }
    h.finish();
  }
  if (f.has("readout")) {
    JsonFields r(f.raw("readout"), f.field("readout"));
    const auto type = r.get<std::string>("type");
    if (type == "mean-pool") {
      c.readout = Readout::MeanPool;
    } else if (type == "fixed-position") {
      c.readout = Readout::FixedPosition;
      c.readout_index = r.get<std::size_t>("index", 0);
    } else {
      throw ConfigError(r.field("type"), "expected 'mean-pool' or 'fixed-position'");
    }
    r.finish();
  }
  c.dropout = f.get<double>("dropout", 0.0);
  c.drop_path = f.get<double>("drop_path", 0.0);
  const auto mode = f.get<std::string>("scan_mode", "sequential");
  if (mode == "sequential") c.scan_mode = ssm::ScanMode::Sequential;
  else if (mode == "parallel") c.scan_mode = ssm::ScanMode::Parallel;
  else throw ConfigError(f.field("scan_mode"), "expected 'sequential' or 'parallel'");
  c.euler_b = f.get<bool>("euler_b", false);
  c.d_skip = f.get<bool>("d_skip", true);
  c.zero_out_proj = f.get<bool>("zero_out_proj", false);
  c.zero_head = f.get<bool>("zero_head", false);
  c.seed = f.get<std::uint64_t>("seed", 0);
  f.finish();
  c.validate();
  return c;
}

ModelConfig load_model_config(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(file, "cannot open");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(file, e.what());
  }
  return model_config_from_json(j);
}

ModelConfig preset_model_config(const std::string& name) {
  ModelConfig c;
  c.name = name;
  if (name == "2d-tiny") {
    c.rank = 2;
    c.input_shape = {8, 8, 1};
    c.patch = {1, 1};
    c.d_model = 64;
    c.n_layers = 8;
  } else if (name == "3d-tiny") {
    c.rank = 3;
    c.input_shape = {4, 8, 8, 1};
    c.patch = {1, 1, 1};
    c.d_model = 64;
    c.n_layers = 12;
  } else if (name == "mamba2d-s") {
    c.rank = 2;
    c.input_shape = {224, 224, 3};
    c.patch = {8, 8};
    c.d_model = 384;
    c.n_layers = 24;
    c.n_classes = 1000;
  } else {
    throw ConfigError("model.name", "unknown preset '" + name + "'");
  }
  return c;
}

NdArray patchify(const NdArray& input, const Shape& patch) {
  const Shape& in = input.shape();
  const std::size_t rank = patch.size();
  if (in.size() != rank + 1)
    throw PatchError("input " + shape_string(in) + " needs rank " + std::to_string(rank + 1));
  Shape grid;
  for (std::size_t i = 0; i < rank; ++i) {
    if (patch[i] == 0 || in[i] % patch[i] != 0)
      throw PatchError("extent " + std::to_string(in[i]) + " of axis " + std::to_string(i) +
                       " is not divisible by patch " + std::to_string(patch[i]));
    grid.push_back(in[i] / patch[i]);
  }
  const std::size_t ch = in.back();
  const std::size_t token_dim = shape_size(patch) * ch;
  Shape out_shape = grid;
  out_shape.push_back(token_dim);
  NdArray out(out_shape);
  // Walk every input element: axis i index = g_i * p_i + q_i.
  std::vector<std::size_t> idx(rank + 1, 0);
  const Shape patch_strides = row_major_strides(patch);
  const Shape grid_strides = row_major_strides(grid);
  for (std::size_t flat = 0; flat < input.size(); ++flat) {
    std::size_t token = 0, within = 0;
    for (std::size_t i = 0; i < rank; ++i) {
      token += (idx[i] / patch[i]) * grid_strides[i];
      within += (idx[i] % patch[i]) * patch_strides[i];
    }
    out[token * token_dim + within * ch + idx[rank]] = input[flat];
    for (std::size_t a = rank + 1; a-- > 0;) {
      if (++idx[a] < in[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

struct Model::Init {
  Rng rng;
};

Model::Model(ModelConfig cfg) : Model(cfg, Init{Rng(cfg.seed)}) {}

namespace {

NdArray uniform_or_zero(Rng& rng, Shape shape, std::size_t fan_in, bool zero) {
  if (zero) return NdArray(std::move(shape), 0.0);
  const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return rng.uniform_array(std::move(shape), -b, b);
}

Shape with_channels(Shape s, std::size_t c) {
  s.push_back(c);
  return s;
}

}  // namespace

Model::Model(ModelConfig cfg, Init&& init)
    : cfg_((cfg.validate(), std::move(cfg))),
      patch_w_(store_.add("patch_embed.weight", uniform_or_zero(init.rng, {cfg_.token_dim(), cfg_.d_model},
                                                                cfg_.token_dim(), false))),
      patch_b_(store_.add("patch_embed.bias", NdArray({cfg_.d_model}, 0.0))),
      pos_(store_.add("pos_embed", init.rng.normal_array(with_channels(cfg_.token_grid(), cfg_.d_model), 0.02))),
      backbone_(store_, "layers", cfg_.arrangement_spec(), cfg_.dims(), init.rng,
                LayerInit{cfg_.zero_out_proj, 1e-3, 1e-1, 1.0}) {
  norm_f_ = store_.add("norm_f.weight", NdArray({cfg_.d_model}, 1.0));
  const std::size_t out = cfg_.head == HeadType::Classification ? cfg_.n_classes : cfg_.out_channels;
  head_w_ = store_.add("head.weight", uniform_or_zero(init.rng, {cfg_.d_model, out}, cfg_.d_model, cfg_.zero_head));
  head_b_ = store_.add("head.bias", NdArray({out}, 0.0));
}

ForwardResult Model::forward(Binding& bind, const NdArray& input, const ForwardOptions& opt) const {
  if (input.shape() != cfg_.input_shape)
    throw ShapeError("model expects input " + shape_string(cfg_.input_shape) + ", got " + shape_string(input.shape()));
  Tape& tape = bind.tape();
  const Shape grid = cfg_.token_grid();
  const std::size_t len = shape_size(grid), d = cfg_.d_model;

  NdArray tok = patchify(input, cfg_.patch);
  ForwardResult r;
  r.tokens = opt.token_grad ? tape.leaf(std::move(tok)) : tape.constant(std::move(tok));
  Var x = ops::matmul(ops::reshape(r.tokens, {len, cfg_.token_dim()}), bind(patch_w_));
  x = ops::add(ops::reshape(ops::add(x, bind(patch_b_)), with_channels(grid, d)), bind(pos_));

  const bool stochastic = opt.training && opt.rng != nullptr;
  if (stochastic && cfg_.dropout > 0.0) {
    NdArray mask(x.shape());
    const double keep = 1.0 - cfg_.dropout;
    for (auto& m : mask.data()) m = opt.rng->uniform() < keep ? 1.0 / keep : 0.0;
    x = ops::mul(x, tape.constant(std::move(mask)));
  }

  StochasticDepth drop;
  if (stochastic) drop = {opt.rng, cfg_.drop_path};
  x = backbone_.forward(bind, x, cfg_.context(), drop, opt.max_groups);
  r.features = ops::rms_norm(x, bind(norm_f_));

  Var flat = ops::reshape(r.features, {len, d});
  if (cfg_.head == HeadType::Classification) {
    Var pooled = cfg_.readout == Readout::MeanPool
                     ? ops::reshape(ops::mean_axis(flat, 0), {1, d})
                     : ops::slice(flat, 0, cfg_.readout_index, cfg_.readout_index + 1);
    r.output = ops::add(ops::reshape(ops::matmul(pooled, bind(head_w_)), {cfg_.n_classes}), bind(head_b_));
  } else {
    Var y = ops::add(ops::matmul(flat, bind(head_w_)), bind(head_b_));
    r.output = ops::reshape(y, with_channels(grid, cfg_.out_channels));
  }
  return r;
}

NdArray Model::predict(const NdArray& input) const {
  Tape tape;
  Binding bind(tape, store_, false);
  return forward(bind, input).output.value();
}

std::size_t param_count(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  std::size_t total = cfg.token_dim() * d + d + cfg.token_count() * d;
  for (const auto& slot : cfg.arrangement_spec().layers()) total += mamba_layer_param_count(cfg.dims(), slot.kind, cfg.rank);
  const std::size_t out = cfg.head == HeadType::Classification ? cfg.n_classes : cfg.out_channels;
  return total + d + d * out + out;
}

std::size_t vit_block_param_count(std::size_t d) { return 12 * d * d + 13 * d; }

}  // namespace ssmnd
