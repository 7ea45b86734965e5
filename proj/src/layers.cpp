#include "ssmnd/layers.hpp"

#include <algorithm>
#include <cmath>

#include "ssmnd/errors.hpp"
#include "ssmnd/ops.hpp"

namespace ssmnd {

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::OneD: return "1d";
    case LayerKind::Bi: return "bi";
    case LayerKind::ND: return "nd";
    case LayerKind::MultiHead: return "multihead";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
  if (s == "1d" || s == "1D") return LayerKind::OneD;
  if (s == "bi") return LayerKind::Bi;
  if (s == "nd" || s == "ND") return LayerKind::ND;
  if (s == "multihead" || s == "multi-head") return LayerKind::MultiHead;
  throw Error("unknown layer kind '" + s + "'");
}

namespace {

std::size_t branch_count(LayerKind kind, std::size_t grid_rank) {
  switch (kind) {
    case LayerKind::OneD: return 1;
    case LayerKind::Bi: return 2;
    default: return axis_continuous_orderings(grid_rank).size();
  }
}

std::size_t branch_width(const MambaDims& dims, LayerKind kind, std::size_t grid_rank) {
  if (kind != LayerKind::MultiHead) return dims.inner();
  const std::size_t heads = branch_count(kind, grid_rank);
  if (dims.inner() % heads != 0)
    throw HeadSplitError("inner width " + std::to_string(dims.inner()) + " not divisible by " +
                         std::to_string(heads) + " heads");
  return dims.inner() / heads;
}

}  // namespace

double sample_dt_bias(Rng& rng, const LayerInit& init) {
  const double dt = std::exp(rng.uniform(std::log(init.dt_min), std::log(init.dt_max)));
  return softplus_inverse(std::max(dt, 1e-4) * init.delta_scale);
}

MambaLayer::MambaLayer(ParamStore& store, const std::string& prefix, const MambaDims& dims, LayerKind kind,
                       ScanOrdering ordering, std::size_t grid_rank, Rng& rng, const LayerInit& init)
    : prefix_(prefix), dims_(dims), kind_(kind), ordering_(std::move(ordering)), grid_rank_(grid_rank) {
  if (ordering_.rank() != grid_rank)
    throw InvalidOrdering("layer ordering rank " + std::to_string(ordering_.rank()) + " on a rank-" +
                          std::to_string(grid_rank) + " grid");
  const std::size_t d = dims.d_model, ed = dims.inner(), n = dims.d_state, k = dims.conv_width;
  const std::size_t r = dims.rank_dt();
  const std::size_t width = branch_width(dims, kind, grid_rank);
  auto bound = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  auto name = [&](const std::string& field) { return prefix + "." + field; };

  norm_ = store.add(name("norm.weight"), NdArray({d}, 1.0));
  in_proj_ = store.add(name("in_proj.weight"), rng.uniform_array({d, 2 * ed}, -bound(d), bound(d)));
  conv_w_ = store.add(name("conv.weight"), rng.uniform_array({ed, k}, -bound(k), bound(k)));
  conv_b_ = store.add(name("conv.bias"), rng.uniform_array({ed}, -bound(k), bound(k)));

  const std::size_t count = branch_count(kind, grid_rank);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string p = "ssm" + std::to_string(i) + ".";
    SsmBranch br;
    br.width = width;
    br.x_proj = store.add(name(p + "x_proj.weight"), rng.uniform_array({width, r + 2 * n}, -bound(width), bound(width)));
    br.dt_weight = store.add(name(p + "dt_proj.weight"), rng.uniform_array({r, width}, -bound(r), bound(r)));
    NdArray dt_bias({width});
    for (auto& v : dt_bias.data()) v = sample_dt_bias(rng, init);
    br.dt_bias = store.add(name(p + "dt_proj.bias"), std::move(dt_bias));
    NdArray a_log({width, n});
    for (std::size_t c = 0; c < width; ++c)
      for (std::size_t s = 0; s < n; ++s) a_log[c * n + s] = std::log(static_cast<double>(s + 1));
    br.a_log = store.add(name(p + "A_log"), std::move(a_log));
    br.d_skip = store.add(name(p + "D"), NdArray({width}, 1.0));
    branches_.push_back(br);
  }

  out_proj_ = store.add(name("out_proj.weight"), init.zero_out_proj ? NdArray({ed, d}, 0.0)
                                                                     : rng.uniform_array({ed, d}, -bound(ed), bound(ed)));
}

std::vector<ScanOrdering> MambaLayer::scan_orderings() const {
  switch (kind_) {
    case LayerKind::OneD: return {ordering_};
    case LayerKind::Bi: return {ordering_, ordering_.flipped()};
    default: return axis_continuous_orderings(grid_rank_);
  }
}

Var MambaLayer::run_ssm(Binding& bind, const SsmBranch& br, Var u, const ScanOrdering& o, const Shape& spatial,
                        const ForwardContext& ctx) const {
  const std::size_t r = dims_.rank_dt(), n = dims_.d_state;
  Var xdbl = ops::matmul(u, bind(br.x_proj));
  Var dt_raw = ops::slice(xdbl, 1, 0, r);
  Var b = ops::slice(xdbl, 1, r, r + n);
  Var c = ops::slice(xdbl, 1, r + n, r + 2 * n);
  Var delta = ops::softplus(ops::add(ops::matmul(dt_raw, bind(br.dt_weight)), bind(br.dt_bias)));
  Var a = ops::neg(ops::exp(bind(br.a_log)));
  ssm::ScanOptions opt;
  opt.mode = ctx.mode;
  opt.euler_b = ctx.euler_b;
  opt.use_d_skip = ctx.use_d_skip;
  opt.boundaries = scan_layout(spatial, o, ctx.factorization).boundaries;
  return ssm::selective_scan(u, delta, a, b, c, bind(br.d_skip), opt);
}

Var MambaLayer::branch(Binding& bind, Var grid, const ForwardContext& ctx) const {
  const Shape& gshape = grid.shape();
  if (gshape.size() != grid_rank_ + 1 || gshape.back() != dims_.d_model)
    throw ShapeError("layer " + prefix_ + " expects (spatial[" + std::to_string(grid_rank_) + "], " +
                     std::to_string(dims_.d_model) + "), got " + shape_string(gshape));
  const Shape spatial(gshape.begin(), gshape.end() - 1);
  const std::size_t len = shape_size(spatial), ed = dims_.inner();
  const bool sequence_kind = kind_ == LayerKind::OneD || kind_ == LayerKind::Bi;

  Var seq = sequence_kind ? apply_grid(grid, ordering_) : ops::reshape(grid, {len, dims_.d_model});
  Var xz = ops::matmul(ops::rms_norm(seq, bind(norm_), ctx.norm_eps), bind(in_proj_));
  const ScanOrdering conv_order = sequence_kind ? ordering_ : layout_ordering(grid_rank_);
  const std::size_t segment = scan_layout(spatial, conv_order, ctx.factorization).length;
  Var u = ops::silu(ops::conv1d_causal(ops::slice(xz, 1, 0, ed), bind(conv_w_), bind(conv_b_), segment));
  Var z = ops::slice(xz, 1, ed, 2 * ed);

  Var s;
  if (kind_ == LayerKind::OneD) {
    s = run_ssm(bind, branches_[0], u, ordering_, spatial, ctx);
  } else if (kind_ == LayerKind::Bi) {
    Var fwd = run_ssm(bind, branches_[0], u, ordering_, spatial, ctx);
    Var bwd = run_ssm(bind, branches_[1], ops::flip(u, 0), ordering_.flipped(), spatial, ctx);
    s = ops::add(fwd, ops::flip(bwd, 0));
  } else {
    Shape ugrid_shape = spatial;
    ugrid_shape.push_back(ed);
    Var ugrid = ops::reshape(u, ugrid_shape);
    const auto orders = axis_continuous_orderings(grid_rank_);
    std::vector<Var> parts;
    for (std::size_t i = 0; i < orders.size(); ++i) {
      const SsmBranch& br = branches_[i];
      Var src = ugrid;
      Shape part_shape = ugrid_shape;
      if (kind_ == LayerKind::MultiHead) {
        src = ops::slice(ugrid, grid_rank_, i * br.width, (i + 1) * br.width);
        part_shape.back() = br.width;
      }
      Var out = run_ssm(bind, br, apply_grid(src, orders[i]), orders[i], spatial, ctx);
      parts.push_back(invert_grid(out, orders[i], part_shape));
    }
    Var merged;
    if (kind_ == LayerKind::MultiHead) {
      merged = ops::concat(parts, grid_rank_);
    } else {
      merged = parts[0];
      for (std::size_t i = 1; i < parts.size(); ++i) merged = ops::add(merged, parts[i]);
    }
    s = ops::reshape(merged, {len, ed});
  }

  Var out = ops::matmul(ops::mul(s, ops::silu(z)), bind(out_proj_));
  return sequence_kind ? invert_grid(out, ordering_, gshape) : ops::reshape(out, gshape);
}

Var MambaLayer::forward(Binding& bind, Var grid, const ForwardContext& ctx) const {
  return ops::add(grid, branch(bind, grid, ctx));
}

std::vector<ParamHandle> MambaLayer::handles() const {
  std::vector<ParamHandle> hs{norm_, in_proj_, conv_w_, conv_b_};
  for (const auto& br : branches_) {
    hs.push_back(br.x_proj);
    hs.push_back(br.dt_weight);
    hs.push_back(br.dt_bias);
    hs.push_back(br.a_log);
    hs.push_back(br.d_skip);
  }
  hs.push_back(out_proj_);
  return hs;
}

std::size_t MambaLayer::param_count(const ParamStore& store) const {
  std::size_t total = 0;
  for (auto h : handles()) total += store.value(h).size();
  return total;
}

std::size_t mamba_layer_param_count(const MambaDims& dims, LayerKind kind, std::size_t grid_rank) {
  const std::size_t d = dims.d_model, ed = dims.inner(), n = dims.d_state, r = dims.rank_dt();
  const std::size_t w = branch_width(dims, kind, grid_rank);
  const std::size_t per_branch = w * (r + 2 * n) + r * w + w + w * n + w;
  return d + d * 2 * ed + ed * dims.conv_width + ed + branch_count(kind, grid_rank) * per_branch + ed * d;
}

}  // namespace ssmnd
