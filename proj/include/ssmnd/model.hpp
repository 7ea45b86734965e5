#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "ssmnd/blocks.hpp"
#include "ssmnd/json_fields.hpp"
#include "ssmnd/layers.hpp"
#include "ssmnd/ndarray.hpp"
#include "ssmnd/params.hpp"
#include "ssmnd/rng.hpp"
#include "ssmnd/tape.hpp"

namespace ssmnd {

enum class HeadType { Classification, Regression };
enum class Readout { MeanPool, FixedPosition };

struct ModelConfig {
  std::string name = "model";
  std::size_t rank = 2;
  Shape input_shape{8, 8, 1};  // (spatial..., channels)
  Shape patch{1, 1};           // one extent per spatial axis
  std::size_t d_model = 64;
  std::size_t n_layers = 8;
  std::string arrangement = "alternating";  // preset name or grammar cycle
  LayerKind layer_kind = LayerKind::OneD;
  FactorizationPolicy factorization = FactorizationPolicy::Mono3D;
  std::size_t expand = 2;
  std::size_t d_state = 16;
  std::size_t conv_width = 4;
  std::size_t dt_rank = 0;
  HeadType head = HeadType::Classification;
  std::size_t n_classes = 2;
  std::size_t out_channels = 1;
  Readout readout = Readout::MeanPool;
  std::size_t readout_index = 0;  // flattened token index for FixedPosition
  double dropout = 0.0;
  double drop_path = 0.0;
  ssm::ScanMode scan_mode = ssm::ScanMode::Sequential;
  bool euler_b = false;
  bool d_skip = true;
  bool zero_out_proj = false;
  bool zero_head = false;
  std::uint64_t seed = 0;

  std::size_t channels() const { return input_shape.back(); }
  /// Token grid extents (spatial / patch).
  Shape token_grid() const;
  std::size_t token_count() const { return shape_size(token_grid()); }
  /// prod(patch) * channels.
  std::size_t token_dim() const;
  MambaDims dims() const;
  ArrangementSpec arrangement_spec() const;
  ForwardContext context() const;
  /// Throws ConfigError (or the module's own error) when inconsistent.
  void validate() const;
};

Json to_json(const ModelConfig& cfg);
/// `path` prefixes field names in ConfigError messages.
ModelConfig model_config_from_json(const Json& j, const std::string& path = "model");
ModelConfig load_model_config(const std::string& file);
/// Built-in configurations: "2d-tiny", "3d-tiny", "mamba2d-s".
ModelConfig preset_model_config(const std::string& name);

/// Splits `input` (spatial..., C) into non-overlapping patches. The token grid
/// keeps the spatial structure; each token is laid out as (patch..., C).
NdArray patchify(const NdArray& input, const Shape& patch);

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;  // dropout and drop-path randomness (training only)
  /// Run only the first `max_groups` arrangement groups.
  std::size_t max_groups = static_cast<std::size_t>(-1);
  /// Record the patch tokens as a differentiable leaf.
  bool token_grad = false;
};

struct ForwardResult {
  Var tokens;    // patchified input (grid..., token_dim)
  Var features;  // normalized backbone output (grid..., D)
  Var output;    // logits (n_classes) or per-token regression (grid..., out_channels)
};

class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParamStore& params() noexcept { return store_; }
  const ParamStore& params() const noexcept { return store_; }
  const Backbone& backbone() const noexcept { return backbone_; }

  ForwardResult forward(Binding& bind, const NdArray& input, const ForwardOptions& opt = {}) const;
  /// Inference forward without gradients.
  NdArray predict(const NdArray& input) const;

  ParamHandle patch_weight() const noexcept { return patch_w_; }
  ParamHandle patch_bias() const noexcept { return patch_b_; }
  ParamHandle pos_embed() const noexcept { return pos_; }
  ParamHandle head_weight() const noexcept { return head_w_; }
  ParamHandle head_bias() const noexcept { return head_b_; }

 private:
  struct Init;
  Model(ModelConfig cfg, Init&& init);

  ModelConfig cfg_;
  ParamStore store_;
  ParamHandle patch_w_, patch_b_, pos_;
  Backbone backbone_;
  ParamHandle norm_f_, head_w_, head_b_;
};

/// Exact trainable scalar count of the model a config describes.
std::size_t param_count(const ModelConfig& cfg);
/// Parameters of one transformer encoder block of width d (attention with
/// biases, 4x MLP, two LayerNorms): 12 d^2 + 13 d.
std::size_t vit_block_param_count(std::size_t d);

}  // namespace ssmnd
