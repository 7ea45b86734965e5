#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ssmnd/factorization.hpp"
#include "ssmnd/layers.hpp"
#include "ssmnd/orderings.hpp"

namespace ssmnd {

struct LayerSlot {
  LayerKind kind = LayerKind::OneD;
  ScanOrdering ordering;
  friend bool operator==(const LayerSlot&, const LayerSlot&) = default;
};

/// A chain group holds one layer; a parallel group applies its members to the
/// same input and adds the sum of their residual branches once.
struct ArrangementGroup {
  bool parallel = false;
  std::vector<LayerSlot> members;
  friend bool operator==(const ArrangementGroup&, const ArrangementGroup&) = default;
};

struct ArrangementSpec {
  std::size_t rank = 2;
  std::vector<ArrangementGroup> groups;
  FactorizationPolicy factorization = FactorizationPolicy::Mono3D;

  std::size_t layer_count() const;
  /// Members of all groups in execution order.
  std::vector<LayerSlot> layers() const;
  friend bool operator==(const ArrangementSpec&, const ArrangementSpec&) = default;
};

/// Grammar form: whitespace separated tokens, brackets for parallel groups,
/// optional `kind:` prefix per token, e.g. `[H+ H-][W+ W-]` or `bi:H+ bi:W+`.
std::string to_grammar(const ArrangementSpec& spec);
/// One pass over `grammar` without repetition; tokens without a prefix use `kind`.
ArrangementSpec parse_arrangement(const std::string& grammar, std::size_t rank, LayerKind kind = LayerKind::OneD);

/// Grammar of a named preset: "alternating", "bi", "quad", "hex", "uni",
/// "bi-alternating", "nd", "multihead". Unknown names are returned unchanged.
std::string preset_grammar(const std::string& name, std::size_t rank);

/// Expands a preset or grammar cycle to `n_layers` layers. The cycle repeats
/// and the last repetition is truncated; a truncated parallel group left with
/// one member becomes a chain group. Errors raise ArrangementError.
ArrangementSpec build_arrangement(const std::string& preset_or_grammar, std::size_t rank, std::size_t n_layers,
                                  LayerKind kind = LayerKind::OneD,
                                  FactorizationPolicy factorization = FactorizationPolicy::Mono3D);

/// Layer dataflow graph: node i is the i-th layer, edges follow group order.
struct ArrangementDag {
  std::size_t nodes = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  /// Number of layers on the longest path.
  std::size_t depth() const;
};

ArrangementDag arrangement_dag(const ArrangementSpec& spec);
std::size_t effective_depth(const ArrangementSpec& spec);

/// Drop-path settings for one training forward pass.
struct StochasticDepth {
  Rng* rng = nullptr;
  double rate = 0.0;  // rate of the deepest group; scales linearly from 0
};

/// Stack of Mamba layers wired per an ArrangementSpec.
class Backbone {
 public:
  /// Layers are registered as `prefix` + "." + index.
  Backbone(ParamStore& store, const std::string& prefix, ArrangementSpec spec, const MambaDims& dims, Rng& rng,
           const LayerInit& init = {});

  const ArrangementSpec& spec() const noexcept { return spec_; }
  const std::vector<MambaLayer>& layers() const noexcept { return layers_; }
  std::vector<MambaLayer>& layers() noexcept { return layers_; }

  /// grid: (spatial..., D); same shape out. Only the first `max_groups`
  /// groups run when given.
  Var forward(Binding& bind, Var grid, const ForwardContext& ctx, const StochasticDepth& drop = {},
              std::size_t max_groups = static_cast<std::size_t>(-1)) const;

 private:
  ArrangementSpec spec_;
  std::vector<MambaLayer> layers_;
};

}  // namespace ssmnd
