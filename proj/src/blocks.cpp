#include "ssmnd/blocks.hpp"

#include <algorithm>
#include <cctype>

#include "ssmnd/errors.hpp"
#include "ssmnd/ops.hpp"

namespace ssmnd {

std::size_t ArrangementSpec::layer_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.members.size();
  return n;
}

std::vector<LayerSlot> ArrangementSpec::layers() const {
  std::vector<LayerSlot> out;
  for (const auto& g : groups) out.insert(out.end(), g.members.begin(), g.members.end());
  return out;
}

namespace {

std::string slot_token(const LayerSlot& s) {
  std::string name = ordering_name(s.ordering);
  return s.kind == LayerKind::OneD ? name : to_string(s.kind) + ":" + name;
}

void push_group(ArrangementSpec& spec, std::vector<LayerSlot> members, bool bracketed) {
  ArrangementGroup g;
  g.parallel = bracketed && members.size() >= 2;
  g.members = std::move(members);
  spec.groups.push_back(std::move(g));
}

}  // namespace

std::string to_grammar(const ArrangementSpec& spec) {
  std::string out;
  for (const auto& g : spec.groups) {
    if (!out.empty()) out += ' ';
    if (g.parallel) out += '[';
    for (std::size_t i = 0; i < g.members.size(); ++i) {
      if (i) out += ' ';
      out += slot_token(g.members[i]);
    }
    if (g.parallel) out += ']';
  }
  return out;
}

ArrangementSpec parse_arrangement(const std::string& grammar, std::size_t rank, LayerKind kind) {
  ArrangementSpec spec;
  spec.rank = rank;
  bool open = false;
  std::vector<LayerSlot> pending;
  std::size_t i = 0;
  const std::size_t n = grammar.size();
  while (i < n) {
    const char ch = grammar[i];
    if (std::isspace(static_cast<unsigned char>(ch))) {
      ++i;
    } else if (ch == '[') {
      if (open) throw ArrangementError("nested '[' at position " + std::to_string(i) + " in '" + grammar + "'");
      open = true;
      ++i;
    } else if (ch == ']') {
      if (!open) throw ArrangementError("unmatched ']' at position " + std::to_string(i) + " in '" + grammar + "'");
      if (pending.size() < 2)
        throw ArrangementError("a parallel group needs at least two members in '" + grammar + "'");
      push_group(spec, std::move(pending), true);
      pending.clear();
      open = false;
      ++i;
    } else {
      LayerKind slot_kind = kind;
      if (std::islower(static_cast<unsigned char>(ch)) || std::isdigit(static_cast<unsigned char>(ch))) {
        const std::size_t colon = grammar.find(':', i);
        if (colon == std::string::npos) throw ArrangementError("bad token at position " + std::to_string(i) + " in '" + grammar + "'");
        try {
          slot_kind = parse_layer_kind(grammar.substr(i, colon - i));
        } catch (const Error& e) {
          throw ArrangementError(e.what());
        }
        i = colon + 1;
      }
      std::size_t end = i;
      if (end < n && grammar[end] == '(') {
        end = grammar.find(')', end);
        if (end == std::string::npos) throw ArrangementError("unclosed '(' in '" + grammar + "'");
      }
      ++end;
      if (end < n && (grammar[end] == '+' || grammar[end] == '-')) ++end;
      LayerSlot slot;
      slot.kind = slot_kind;
      try {
        slot.ordering = parse_ordering(grammar.substr(i, end - i), rank);
      } catch (const Error& e) {
        throw ArrangementError(e.what());
      }
      i = end;
      if (open) pending.push_back(std::move(slot));
      else push_group(spec, {std::move(slot)}, false);
    }
  }
  if (open) throw ArrangementError("unclosed '[' in '" + grammar + "'");
  if (spec.groups.empty()) throw ArrangementError("empty arrangement");
  return spec;
}

std::string preset_grammar(const std::string& name, std::size_t rank) {
  auto need = [&](bool ok) {
    if (!ok) throw ArrangementError("preset '" + name + "' is not defined for rank " + std::to_string(rank));
  };
  if (name == "alternating") {
    need(rank >= 1 && rank <= 3);
    if (rank == 1) return "L+ L-";
    return rank == 2 ? "H+ H- W+ W-" : "H+ H- W+ W- T+ T-";
  }
  if (name == "bi") {
    need(rank == 2 || rank == 3);
    return rank == 2 ? "[H+ H-][W+ W-]" : "[H+ H-][W+ W-][T+ T-]";
  }
  if (name == "quad") {
    need(rank == 2 || rank == 3);
    return rank == 2 ? "[H+ H- W+ W-]" : "[H+ H- W+ W-][T+ T-]";
  }
  if (name == "hex") {
    need(rank == 3);
    return "[H+ H- W+ W- T+ T-]";
  }
  if (name == "uni") return "L+";
  if (name == "bi-alternating") {
    need(rank == 2 || rank == 3);
    return rank == 2 ? "bi:H+ bi:W+" : "bi:H+ bi:W+ bi:T+";
  }
  if (name == "nd") return "nd:L+";
  if (name == "multihead") return "multihead:L+";
  return name;
}

ArrangementSpec build_arrangement(const std::string& preset_or_grammar, std::size_t rank, std::size_t n_layers,
                                  LayerKind kind, FactorizationPolicy factorization) {
  if (n_layers == 0) throw ArrangementError("n_layers must be positive");
  const ArrangementSpec cycle = parse_arrangement(preset_grammar(preset_or_grammar, rank), rank, kind);
  ArrangementSpec spec;
  spec.rank = rank;
  spec.factorization = factorization;
  std::size_t remaining = n_layers;
  while (remaining > 0) {
    for (const auto& g : cycle.groups) {
      if (remaining == 0) break;
      const std::size_t take = std::min(remaining, g.members.size());
      std::vector<LayerSlot> members(g.members.begin(), g.members.begin() + static_cast<std::ptrdiff_t>(take));
      push_group(spec, std::move(members), g.parallel);
      remaining -= take;
    }
  }
  for (const auto& slot : spec.layers()) {
    try {
      chunk_axes(factorization, slot.ordering);
    } catch (const FactorizationError& e) {
      throw ArrangementError(e.what());
    }
  }
  return spec;
}

std::size_t ArrangementDag::depth() const {
  std::vector<std::size_t> longest(nodes, 1);
  auto sorted = edges;
  std::sort(sorted.begin(), sorted.end());
  // Edges point from lower to higher indices, so sorting by source is a topological order.
  for (const auto& [from, to] : sorted) longest[to] = std::max(longest[to], longest[from] + 1);
  return nodes ? *std::max_element(longest.begin(), longest.end()) : 0;
}

ArrangementDag arrangement_dag(const ArrangementSpec& spec) {
  ArrangementDag dag;
  std::vector<std::size_t> prev;
  for (const auto& g : spec.groups) {
    std::vector<std::size_t> cur;
    for (std::size_t m = 0; m < g.members.size(); ++m) cur.push_back(dag.nodes++);
    for (auto from : prev)
      for (auto to : cur) dag.edges.emplace_back(from, to);
    prev = std::move(cur);
  }
  return dag;
}

std::size_t effective_depth(const ArrangementSpec& spec) { return arrangement_dag(spec).depth(); }

Backbone::Backbone(ParamStore& store, const std::string& prefix, ArrangementSpec spec, const MambaDims& dims,
                   Rng& rng, const LayerInit& init)
    : spec_(std::move(spec)) {
  std::size_t index = 0;
  for (const auto& slot : spec_.layers())
    layers_.emplace_back(store, prefix + "." + std::to_string(index++), dims, slot.kind, slot.ordering, spec_.rank,
                         rng, init);
}

Var Backbone::forward(Binding& bind, Var grid, const ForwardContext& ctx, const StochasticDepth& drop,
                      std::size_t max_groups) const {
  if (grid.shape().size() != spec_.rank + 1)
    throw ShapeError("backbone expects a rank-" + std::to_string(spec_.rank) + " grid with channels, got " +
                     shape_string(grid.shape()));
  Var x = grid;
  std::size_t layer = 0;
  const std::size_t n_groups = spec_.groups.size();
  for (std::size_t g = 0; g < std::min(n_groups, max_groups); ++g) {
    const auto& group = spec_.groups[g];
    double rate = 0.0;
    if (drop.rng && drop.rate > 0.0 && n_groups > 1)
      rate = drop.rate * static_cast<double>(g) / static_cast<double>(n_groups - 1);
    if (rate > 0.0 && drop.rng->uniform() < rate) {
      layer += group.members.size();
      continue;
    }
    Var update = layers_[layer++].branch(bind, x, ctx);
    for (std::size_t m = 1; m < group.members.size(); ++m) update = ops::add(update, layers_[layer++].branch(bind, x, ctx));
    if (rate > 0.0) update = ops::scale(update, 1.0 / (1.0 - rate));
    x = ops::add(x, update);
  }
  return x;
}

}  // namespace ssmnd
