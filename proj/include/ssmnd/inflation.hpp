#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssmnd/json_fields.hpp"
#include "ssmnd/model.hpp"
#include "ssmnd/ndarray.hpp"

namespace ssmnd {

/// ScaledCopy: every temporal slice is e2d / T.
/// CenterPlace: slice floor(T/2) is e2d, all others zero.
enum class PosPolicy { ScaledCopy, CenterPlace };

std::string to_string(PosPolicy p);
PosPolicy parse_pos_policy(const std::string& s);

struct InflationPlan {
  std::size_t t_patch = 2;
  PosPolicy pos_policy = PosPolicy::ScaledCopy;
  double delta_scale = 1.0;
  std::size_t t_insert_period = 4;  // spatial layers between inserted T+ T- pairs; 0 inserts none
  std::size_t frames = 0;           // input frames; 0 means t_patch
  std::uint64_t seed = 0;           // initialization of new layers
  std::optional<ModelConfig> model; // explicit 3-D config; derived when absent

  std::size_t frame_count() const noexcept { return frames ? frames : t_patch; }
  void validate() const;
};

Json to_json(const InflationPlan& plan);
InflationPlan plan_from_json(const Json& j, const std::string& path = "plan");
InflationPlan load_plan(const std::string& file);

/// w2d: (prod(patch2d) * C, D) -> (t_patch * prod(patch2d) * C, D) with every
/// temporal tap equal to w2d / t_patch.
NdArray inflate_patch_embed(const NdArray& w2d, std::size_t t_patch);

/// e2d: (H, W, D) -> (T, H, W, D).
NdArray inflate_pos_embed(const NdArray& e2d, std::size_t t, PosPolicy policy);

/// 3-D config for a 2-D one: same widths, temporal patch and frames from the
/// plan, and a T+ T- pair after every `t_insert_period` spatial layers.
ModelConfig inflated_config(const ModelConfig& cfg2d, const InflationPlan& plan);

struct InflationResult {
  Model model;
  std::vector<std::size_t> spatial_layers;  // 3-D index of each 2-D layer, in order
  std::vector<std::size_t> new_layers;      // freshly initialized temporal layers
};

/// Builds the 3-D model and copies shared weights bit-exactly. New layers get a
/// zero out-projection and a step-size bias scaled by plan.delta_scale.
InflationResult inflate_model(const Model& m2d, const InflationPlan& plan);

}  // namespace ssmnd
