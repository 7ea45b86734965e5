#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ssmnd/model.hpp"
#include "ssmnd/ndarray.hpp"

namespace ssmnd {

/// Input sensitivity of one output token over the token grid.
struct ErfMap {
  Shape grid;
  std::size_t probe = 0;  // flattened token index
  NdArray raw;            // sum over token features of |d out / d token|
  NdArray values;         // raw / max(raw), all zero when raw is all zero
};

/// Flattened index of the token at floor(extent / 2) on every axis.
std::size_t center_token(const Shape& grid);

/// Seeds a unit gradient on every feature channel of the backbone output at
/// `probe` (center by default) and backpropagates to the patch tokens. Only
/// the first `max_groups` arrangement groups run when given.
ErfMap compute_erf(const Model& model, const NdArray& input, std::optional<std::size_t> probe = std::nullopt,
                   std::size_t max_groups = static_cast<std::size_t>(-1));

/// One line per token: flattened index, grid coordinates, raw and normalized value.
void write_erf_csv(const std::string& path, const ErfMap& map);
/// 8-bit binary PGM of the normalized map. 1-D maps are one row; 3-D maps
/// place the temporal slices side by side.
void write_erf_pgm(const std::string& path, const ErfMap& map);

enum class Arch { ViT, Mamba };
std::string to_string(Arch a);
Arch parse_arch(const std::string& s);

/// Closed-form multiply-accumulate counts.
///   ViT block:   vit_dense * L * D^2 + vit_attention * L^2 * D
///   Mamba layer: L * (3E D^2 + E D (R + 2N) + R E D + K E D + scan_coeff * E D N)
/// with R = ceil(D / 16) unless dt_rank is set.
struct FlopModel {
  double vit_dense = 12.0;
  double vit_attention = 2.0;
  std::size_t expand = 2;
  std::size_t d_state = 16;
  std::size_t conv_width = 4;
  std::size_t dt_rank = 0;
  double scan_coeff = 3.0;

  double vit_block(double length, double d) const;
  double mamba_layer(double length, double d) const;
};

double flops(Arch arch, double length, double d, std::size_t layers, const FlopModel& fm = {});

struct CurvePoint {
  std::size_t length;
  double vit;
  double mamba;
};

/// Sequence lengths k^2 for k in [k_min, k_max].
std::vector<std::size_t> square_lengths(std::size_t k_min, std::size_t k_max);
std::vector<CurvePoint> bench_curve(const std::vector<std::size_t>& lengths, std::size_t d, std::size_t vit_layers,
                                    std::size_t mamba_layers, const FlopModel& fm = {});
/// Smallest length in the curve where the Mamba stack is cheaper, if any.
std::optional<std::size_t> crossover(const std::vector<CurvePoint>& curve);
void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve);

}  // namespace ssmnd
