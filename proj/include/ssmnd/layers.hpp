#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ssmnd/factorization.hpp"
#include "ssmnd/orderings.hpp"
#include "ssmnd/params.hpp"
#include "ssmnd/rng.hpp"
#include "ssmnd/ssm_kernel.hpp"
#include "ssmnd/tape.hpp"

namespace ssmnd {

/// Layer variants.
///   OneD       whole layer runs on the grid flattened in one ordering
///   Bi         shared projections, two SSMs (forward and reversed sequence), summed
///   ND         one SSM per axis-continuous ordering (4 in 2-D, 6 in 3-D), summed
///   MultiHead  channels split into one head per axis-continuous ordering, concatenated
enum class LayerKind { OneD, Bi, ND, MultiHead };

std::string to_string(LayerKind k);
LayerKind parse_layer_kind(const std::string& s);

struct MambaDims {
  std::size_t d_model = 64;
  std::size_t expand = 2;
  std::size_t d_state = 16;
  std::size_t conv_width = 4;
  std::size_t dt_rank = 0;  // 0: ceil(d_model / 16)

  std::size_t inner() const noexcept { return expand * d_model; }
  std::size_t rank_dt() const noexcept { return dt_rank ? dt_rank : (d_model + 15) / 16; }
};

struct LayerInit {
  bool zero_out_proj = false;
  double dt_min = 1e-3;
  double dt_max = 1e-1;
  double delta_scale = 1.0;  // multiplies the sampled initial step size
};

/// Settings shared by every layer in one forward pass.
struct ForwardContext {
  ssm::ScanMode mode = ssm::ScanMode::Sequential;
  bool euler_b = false;
  bool use_d_skip = true;
  FactorizationPolicy factorization = FactorizationPolicy::Mono3D;
  double norm_eps = 1e-5;
};

/// Parameters of one selective-scan branch acting on `width` channels.
struct SsmBranch {
  ParamHandle x_proj;     // (width, R + 2N)
  ParamHandle dt_weight;  // (R, width)
  ParamHandle dt_bias;    // (width)
  ParamHandle a_log;      // (width, N); A = -exp(a_log)
  ParamHandle d_skip;     // (width)
  std::size_t width = 0;
};

/// Gated selective-state-space layer acting on a grid (spatial..., D).
/// branch() returns the residual update; forward() adds the input back.
class MambaLayer {
 public:
  /// Registers parameters named `prefix` + "." + field in `store`.
  /// `grid_rank` fixes the number of scans for ND and MultiHead layers.
  MambaLayer(ParamStore& store, const std::string& prefix, const MambaDims& dims, LayerKind kind,
             ScanOrdering ordering, std::size_t grid_rank, Rng& rng, const LayerInit& init = {});

  LayerKind kind() const noexcept { return kind_; }
  const MambaDims& dims() const noexcept { return dims_; }
  const std::string& prefix() const noexcept { return prefix_; }
  /// Primary ordering (meaningful for OneD and Bi).
  const ScanOrdering& ordering() const noexcept { return ordering_; }
  /// Ordering of every SSM scan, in branch order.
  std::vector<ScanOrdering> scan_orderings() const;
  const std::vector<SsmBranch>& branches() const noexcept { return branches_; }

  Var branch(Binding& bind, Var grid, const ForwardContext& ctx) const;
  Var forward(Binding& bind, Var grid, const ForwardContext& ctx) const;

  /// Scalars owned by this layer.
  std::size_t param_count(const ParamStore& store) const;
  std::vector<ParamHandle> handles() const;

  ParamHandle norm_weight() const noexcept { return norm_; }
  ParamHandle in_proj() const noexcept { return in_proj_; }
  ParamHandle out_proj() const noexcept { return out_proj_; }

 private:
  Var run_ssm(Binding& bind, const SsmBranch& br, Var u, const ScanOrdering& o, const Shape& spatial,
              const ForwardContext& ctx) const;

  std::string prefix_;
  MambaDims dims_;
  LayerKind kind_;
  ScanOrdering ordering_;
  std::size_t grid_rank_;
  ParamHandle norm_, in_proj_, conv_w_, conv_b_, out_proj_;
  std::vector<SsmBranch> branches_;
};

/// Scalar count of one layer without building it.
std::size_t mamba_layer_param_count(const MambaDims& dims, LayerKind kind, std::size_t grid_rank);

/// Draws an initial step-size bias: softplus^-1(scale * exp(U(log dt_min, log dt_max))).
double sample_dt_bias(Rng& rng, const LayerInit& init);

}  // namespace ssmnd
