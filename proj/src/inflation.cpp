#include "ssmnd/inflation.hpp"

#include <fstream>

#include "ssmnd/errors.hpp"

namespace ssmnd {

std::string to_string(PosPolicy p) { return p == PosPolicy::ScaledCopy ? "scaled-copy" : "center-place"; }

PosPolicy parse_pos_policy(const std::string& s) {
  if (s == "scaled-copy" || s == "ScaledCopy") return PosPolicy::ScaledCopy;
  if (s == "center-place" || s == "CenterPlace") return PosPolicy::CenterPlace;
  throw PolicyError("unknown positional-embedding policy '" + s + "'");
}

void InflationPlan::validate() const {
  if (t_patch == 0) throw ConfigError("plan.t_patch", "must be at least 1");
  if (!(delta_scale > 0.0)) throw ConfigError("plan.delta_scale", "must be positive");
  if (frame_count() % t_patch != 0) throw ConfigError("plan.frames", "must be a multiple of t_patch");
}

Json to_json(const InflationPlan& p) {
  Json j = {{"t_patch", p.t_patch},       {"pos_policy", to_string(p.pos_policy)},
            {"delta_scale", p.delta_scale}, {"t_insert_period", p.t_insert_period},
            {"frames", p.frame_count()},  {"seed", p.seed}};
  if (p.model) j["model"] = to_json(*p.model);
  return j;
}

InflationPlan plan_from_json(const Json& j, const std::string& path) {
  JsonFields f(j, path);
  InflationPlan p;
  p.t_patch = f.get<std::size_t>("t_patch", p.t_patch);
  try {
    p.pos_policy = parse_pos_policy(f.get<std::string>("pos_policy", "scaled-copy"));
  } catch (const PolicyError& e) {
    throw ConfigError(f.field("pos_policy"), e.what());
  }
  p.delta_scale = f.get<double>("delta_scale", p.delta_scale);
  p.t_insert_period = f.get<std::size_t>("t_insert_period", p.t_insert_period);
  p.frames = f.get<std::size_t>("frames", 0);
  p.seed = f.get<std::uint64_t>("seed", 0);
  if (f.has("model")) p.model = model_config_from_json(f.raw("model"), f.field("model"));
  f.finish();
  p.validate();
  return p;
}

InflationPlan load_plan(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(file, "cannot open");
  try {
    return plan_from_json(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw ConfigError(file, e.what());
  }
}

NdArray inflate_patch_embed(const NdArray& w2d, std::size_t t_patch) {
  if (w2d.rank() != 2) throw InflateError("patch embedding must be (token_dim, D), got " + shape_string(w2d.shape()));
  if (t_patch == 0) throw InflateError("t_patch must be at least 1");
  const std::size_t rows = w2d.shape()[0], d = w2d.shape()[1];
  NdArray out({t_patch * rows, d});
  const double tp = static_cast<double>(t_patch);
  for (std::size_t t = 0; t < t_patch; ++t)
    for (std::size_t i = 0; i < rows * d; ++i) out[t * rows * d + i] = w2d[i] / tp;
  return out;
}

NdArray inflate_pos_embed(const NdArray& e2d, std::size_t t, PosPolicy policy) {
  if (e2d.rank() != 3) throw InflateError("positional embedding must be (H, W, D), got " + shape_string(e2d.shape()));
  if (t == 0) throw InflateError("temporal extent must be at least 1");
  const std::size_t n = e2d.size();
  Shape shape{t};
  shape.insert(shape.end(), e2d.shape().begin(), e2d.shape().end());
  NdArray out(shape, 0.0);
  if (policy == PosPolicy::ScaledCopy) {
    const double td = static_cast<double>(t);
    for (std::size_t s = 0; s < t; ++s)
      for (std::size_t i = 0; i < n; ++i) out[s * n + i] = e2d[i] / td;
  } else {
    const std::size_t s = t / 2;
    for (std::size_t i = 0; i < n; ++i) out[s * n + i] = e2d[i];
  }
  return out;
}

namespace {

ScanOrdering spatial_to_3d(const ScanOrdering& o) {
  for (char axis : {'H', 'W'}) {
    for (Direction dir : {Direction::Forward, Direction::Reverse}) {
      if (o == named_ordering(axis, dir, 2)) return named_ordering(axis, dir, 3);
    }
  }
  throw InflateError("2-D ordering " + explicit_name(o) + " has no 3-D counterpart");
}

void check(bool ok, const std::string& what) {
  if (!ok) throw InflateError(what);
}

}  // namespace

ModelConfig inflated_config(const ModelConfig& c2, const InflationPlan& plan) {
  plan.validate();
  check(c2.rank == 2, "source model must be 2-D");
  const ArrangementSpec spec2 = c2.arrangement_spec();
  std::string grammar;
  std::size_t since_insert = 0, count = 0;
  auto append = [&](const std::string& tok) {
    grammar += (grammar.empty() ? "" : " ") + tok;
    ++count;
  };
  for (const auto& g : spec2.groups) {
    check(!g.parallel, "inflation supports chain arrangements only");
    const LayerSlot& slot = g.members[0];
    check(slot.kind == LayerKind::OneD || slot.kind == LayerKind::Bi,
          "layer kind " + to_string(slot.kind) + " changes shape between 2-D and 3-D");
    const std::string name = ordering_name(spatial_to_3d(slot.ordering));
    append(slot.kind == LayerKind::OneD ? name : to_string(slot.kind) + ":" + name);
    if (plan.t_insert_period && ++since_insert == plan.t_insert_period) {
      append("T+");
      append("T-");
      since_insert = 0;
    }
  }
  ModelConfig c3 = c2;
  c3.name = c2.name + "-inflated";
  c3.rank = 3;
  c3.input_shape = {plan.frame_count(), c2.input_shape[0], c2.input_shape[1], c2.input_shape[2]};
  c3.patch = {plan.t_patch, c2.patch[0], c2.patch[1]};
  c3.arrangement = grammar;
  c3.n_layers = count;
  c3.layer_kind = LayerKind::OneD;
  c3.factorization = FactorizationPolicy::Mono3D;
  c3.seed = plan.seed;
  c3.validate();
  return c3;
}

InflationResult inflate_model(const Model& m2d, const InflationPlan& plan) {
  plan.validate();
  const ModelConfig& c2 = m2d.config();
  const ModelConfig c3 = plan.model ? *plan.model : inflated_config(c2, plan);
  check(c2.rank == 2 && c3.rank == 3, "inflation maps a 2-D model to a 3-D model");
  check(c3.patch[0] == plan.t_patch, "3-D temporal patch differs from plan.t_patch");
  check(c3.patch[1] == c2.patch[0] && c3.patch[2] == c2.patch[1], "spatial patch sizes differ");
  check(c3.input_shape[1] == c2.input_shape[0] && c3.input_shape[2] == c2.input_shape[1] &&
            c3.input_shape[3] == c2.input_shape[2],
        "spatial input shape or channels differ");
  check(c3.d_model == c2.d_model && c3.expand == c2.expand && c3.d_state == c2.d_state &&
            c3.conv_width == c2.conv_width && c3.dims().rank_dt() == c2.dims().rank_dt(),
        "layer widths differ");
  check(c3.head == c2.head && c3.n_classes == c2.n_classes && c3.out_channels == c2.out_channels, "heads differ");

  InflationResult res{Model(c3), {}, {}};
  ParamStore& dst = res.model.params();
  const ParamStore& src = m2d.params();

  const auto layers2 = c2.arrangement_spec().layers();
  const auto layers3 = c3.arrangement_spec().layers();
  std::size_t next = 0;
  for (std::size_t j = 0; j < layers3.size(); ++j) {
    const LayerSlot& s3 = layers3[j];
    if (s3.ordering.continuous_axis() == 0) {
      res.new_layers.push_back(j);
      continue;
    }
    check(next < layers2.size(), "3-D model has more spatial layers than the 2-D model");
    const LayerSlot& s2 = layers2[next];
    check(s2.kind == s3.kind && spatial_to_3d(s2.ordering) == s3.ordering,
          "layer " + std::to_string(j) + " does not match 2-D layer " + std::to_string(next));
    res.spatial_layers.push_back(j);
    ++next;
  }
  check(next == layers2.size(), "3-D model has fewer spatial layers than the 2-D model");

  auto copy = [&](const std::string& from, const std::string& to) {
    const auto hs = src.find(from);
    const auto hd = dst.find(to);
    check(hs && hd, "missing parameter " + from);
    check(src.value(*hs).shape() == dst.value(*hd).shape(), "shape mismatch for " + from);
    dst.value(*hd) = src.value(*hs);
  };

  for (std::size_t i = 0; i < res.spatial_layers.size(); ++i) {
    const MambaLayer& l2 = m2d.backbone().layers()[i];
    const MambaLayer& l3 = res.model.backbone().layers()[res.spatial_layers[i]];
    for (auto h : l2.handles()) {
      const std::string& name = src.name(h);
      copy(name, l3.prefix() + name.substr(l2.prefix().size()));
    }
  }
  copy("patch_embed.bias", "patch_embed.bias");
  copy("norm_f.weight", "norm_f.weight");
  copy("head.weight", "head.weight");
  copy("head.bias", "head.bias");
  dst.value(res.model.patch_weight()) = inflate_patch_embed(src.value(m2d.patch_weight()), plan.t_patch);
  dst.value(res.model.pos_embed()) =
      inflate_pos_embed(src.value(m2d.pos_embed()), c3.token_grid()[0], plan.pos_policy);

  Rng rng(plan.seed ^ 0x5DEECE66DULL);
  LayerInit init;
  init.delta_scale = plan.delta_scale;
  for (auto j : res.new_layers) {
    const MambaLayer& l = res.model.backbone().layers()[j];
    dst.value(l.out_proj()) = NdArray(dst.value(l.out_proj()).shape(), 0.0);
    for (const auto& br : l.branches())
      for (auto& v : dst.value(br.dt_bias).data()) v = sample_dt_bias(rng, init);
  }
  return res;
}

}  // namespace ssmnd
