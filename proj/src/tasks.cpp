#include "ssmnd/tasks.hpp"

#include "ssmnd/errors.hpp"
#include "ssmnd/rng.hpp"

namespace ssmnd {

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::CausalTrap2D: return "causal-trap-2d";
    case TaskKind::CrossParity2D: return "cross-parity-2d";
    case TaskKind::TemporalPointer3D: return "temporal-pointer-3d";
  }
  return "?";
}

TaskKind parse_task(const std::string& s) {
  for (auto k : {TaskKind::CausalTrap2D, TaskKind::CrossParity2D, TaskKind::TemporalPointer3D})
    if (s == to_string(k)) return k;
  throw TaskError("unknown task '" + s + "'");
}

Shape default_grid(TaskKind k) {
  switch (k) {
    case TaskKind::CausalTrap2D: return {6, 6};
    case TaskKind::CrossParity2D: return {8, 8};
    case TaskKind::TemporalPointer3D: return {4, 6, 6};
  }
  return {};
}

Shape TaskSpec::spatial() const {
  const Shape g = grid.empty() ? default_grid(kind) : grid;
  const std::size_t rank = kind == TaskKind::TemporalPointer3D ? 3 : 2;
  if (g.size() != rank) throw TaskError(to_string(kind) + " needs a rank-" + std::to_string(rank) + " grid");
  for (auto e : g)
    if (e == 0) throw TaskError("grid extents must be positive");
  if (kind == TaskKind::CausalTrap2D && g[0] * g[1] < 2) throw TaskError("causal-trap-2d needs at least two cells");
  if (kind == TaskKind::CrossParity2D && g[0] + g[1] < 3)
    throw TaskError("cross-parity-2d needs a cell besides the marker in its row or column");
  if (kind == TaskKind::TemporalPointer3D && (g[1] < 2 || g[2] < 2))
    throw TaskError("temporal-pointer-3d needs frames of at least 2x2");
  return g;
}

Shape TaskSpec::input_shape() const {
  Shape s = spatial();
  s.push_back(kind == TaskKind::CausalTrap2D ? 1 : 2);
  return s;
}

std::size_t TaskSpec::n_classes() const { return kind == TaskKind::TemporalPointer3D ? 4 : 2; }

namespace {

void causal_trap(Rng& rng, NdArray& x, std::size_t label) {
  for (auto& v : x.data()) v = rng.bit() ? 1.0 : 0.0;
  x[x.size() - 1] = static_cast<double>(label);
}

void cross_parity(Rng& rng, NdArray& x, std::size_t label, std::size_t h, std::size_t w) {
  auto at = [&](std::size_t r, std::size_t c, std::size_t ch) -> double& { return x[(r * w + c) * 2 + ch]; };
  const std::size_t mr = rng.below(h), mc = rng.below(w);
  std::vector<std::pair<std::size_t, std::size_t>> cross;
  std::size_t parity = 0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const bool b = rng.bit();
      at(r, c, 0) = b ? 1.0 : 0.0;
      at(r, c, 1) = (r == mr && c == mc) ? 1.0 : 0.0;
      if ((r == mr) != (c == mc)) {
        cross.emplace_back(r, c);
        parity ^= b ? 1 : 0;
      }
    }
  }
  if (parity != label) {
    const auto [r, c] = cross[rng.below(cross.size())];
    at(r, c, 0) = 1.0 - at(r, c, 0);
  }
}

void temporal_pointer(Rng& rng, NdArray& x, std::size_t label, const Shape& g) {
  const std::size_t t = g[0], h = g[1], w = g[2];
  const std::size_t marked = rng.below(t);
  for (std::size_t f = 0; f < t; ++f) {
    const std::size_t quadrant = f == marked ? label : rng.below(4);
    const std::size_t r0 = (quadrant / 2) * (h / 2), c0 = (quadrant % 2) * (w / 2);
    for (std::size_t r = r0; r < r0 + h / 2; ++r)
      for (std::size_t c = c0; c < c0 + w / 2; ++c) x[((f * h + r) * w + c) * 2] = 1.0;
  }
  x[((marked * h + h / 2) * w + w / 2) * 2 + 1] = 1.0;
}

}  // namespace

Dataset generate(const TaskSpec& spec, std::size_t n, std::uint64_t stream) {
  if (n == 0) throw TaskError("dataset size must be at least 1");
  Dataset d;
  d.input_shape = spec.input_shape();
  d.n_classes = spec.n_classes();
  const Shape g = spec.spatial();
  Rng rng(spec.seed * 0x9E3779B97F4A7C15ULL + stream * 0xD1B54A32D192ED03ULL + 1);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.labels[i] = i % d.n_classes;
  rng.shuffle(d.labels);
  d.inputs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    NdArray x(d.input_shape, 0.0);
    switch (spec.kind) {
      case TaskKind::CausalTrap2D: causal_trap(rng, x, d.labels[i]); break;
      case TaskKind::CrossParity2D: cross_parity(rng, x, d.labels[i], g[0], g[1]); break;
      case TaskKind::TemporalPointer3D: temporal_pointer(rng, x, d.labels[i], g); break;
    }
    d.inputs.push_back(std::move(x));
  }
  return d;
}

Json to_json(const TaskSpec& spec) {
  return {{"name", to_string(spec.kind)}, {"grid", spec.spatial()}, {"seed", spec.seed}};
}

TaskSpec task_from_json(const Json& j, const std::string& path) {
  JsonFields f(j, path);
  TaskSpec s;
  try {
    s.kind = parse_task(f.get<std::string>("name"));
  } catch (const TaskError& e) {
    throw ConfigError(f.field("name"), e.what());
  }
  if (f.has("grid")) s.grid = f.extents("grid");
  s.seed = f.get<std::uint64_t>("seed", 0);
  f.finish();
  try {
    s.spatial();
  } catch (const TaskError& e) {
    throw ConfigError(f.field("grid"), e.what());
  }
  return s;
}

}  // namespace ssmnd
