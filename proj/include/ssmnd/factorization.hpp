#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ssmnd/ndarray.hpp"
#include "ssmnd/orderings.hpp"

namespace ssmnd {

/// How a 3-D scan is split into independent sub-sequences.
///   Mono3D            one sequence of T*H*W for every layer
///   TwoPlusThree      spatial layers: T sequences of H*W; temporal layers: one of T*H*W
///   TwoPlusOne        spatial layers: T sequences of H*W; temporal layers: H*W sequences of T
///   OnePlusOnePlusOne every layer scans single-axis sequences
/// A layer is temporal when its continuous axis is T (axis 0).
enum class FactorizationPolicy { Mono3D, TwoPlusOne, TwoPlusThree, OnePlusOnePlusOne };

std::string to_string(FactorizationPolicy p);
/// Accepts "3D"/"mono", "2D+1D", "2D+3D", "1D+1D+1D".
FactorizationPolicy parse_factorization(const std::string& s);

/// Split of one flattened scan into equal contiguous sub-sequences.
struct SequenceLayout {
  std::size_t count = 1;
  std::size_t length = 0;
  std::vector<std::size_t> boundaries;  // cut positions, multiples of length
};

/// Number of trailing permuted axes forming one sub-sequence.
std::size_t chunk_axes(FactorizationPolicy p, const ScanOrdering& o);

/// Layout of a scan in ordering `o` over a grid with `spatial_shape`.
/// Policies other than Mono3D require a rank-3 grid (FactorizationError).
SequenceLayout scan_layout(const Shape& spatial_shape, const ScanOrdering& o, FactorizationPolicy p);

struct SubSequence {
  NdArray values;       // (length, C)
  std::size_t offset;   // first position in the flattened scan
};

/// Materialized sub-sequences of `grid` (spatial..., C) in ordering `o`.
std::vector<SubSequence> factorize_grid(const NdArray& grid, FactorizationPolicy p, const ScanOrdering& o);

/// Largest number of independent sequences any layer role needs for one
/// sample (multiply by batch size for the O(B), O(BD), O(BD^2) scaling).
std::size_t max_sequence_count(const Shape& spatial_shape, FactorizationPolicy p);

}  // namespace ssmnd
