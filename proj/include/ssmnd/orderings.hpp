#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "ssmnd/ndarray.hpp"
#include "ssmnd/tape.hpp"

namespace ssmnd {

enum class Direction { Forward, Reverse };

/// Axis permutation plus traversal direction: the data is transposed so that
/// axis perm[i] becomes axis i, flattened row-major, and optionally reversed.
/// perm.back() is the axis traversed with unit step.
struct ScanOrdering {
  std::vector<std::size_t> perm;
  Direction direction = Direction::Forward;

  std::size_t rank() const noexcept { return perm.size(); }
  bool reversed() const noexcept { return direction == Direction::Reverse; }
  /// Same permutation, opposite direction.
  ScanOrdering flipped() const;
  /// Axis traversed continuously (the last entry of perm).
  std::size_t continuous_axis() const { return perm.back(); }

  friend bool operator==(const ScanOrdering&, const ScanOrdering&) = default;
};

/// Axis letters for canonical layouts: rank 1 "L", rank 2 "HW", rank 3 "THW".
/// Other ranks use digits.
std::string axis_letters(std::size_t rank);

/// Parses `H+ H- W+ W- T+ T- L+ L-` or explicit `(TWH)+` forms for `rank`.
/// A bare token without sign (e.g. `H`) is read as the forward direction.
ScanOrdering parse_ordering(std::string_view token, std::size_t rank);

/// Shorthand name when one exists (W preferred over its alias L), otherwise
/// the explicit `(perm)±` form.
std::string ordering_name(const ScanOrdering& o);
std::string explicit_name(const ScanOrdering& o);

/// Named shorthand orderings. 2-D: H=(WH), W=(HW). 3-D: H=(TWH), W=(THW),
/// T=(HWT). L is the memory layout order for any rank.
ScanOrdering named_ordering(char axis, Direction dir, std::size_t rank);
ScanOrdering layout_ordering(std::size_t rank, Direction dir = Direction::Forward);

/// All 2 * rank! orderings, permutations in lexicographic order, + before -.
std::vector<ScanOrdering> enumerate_orderings(std::size_t rank);

/// The orderings used by an N-directional layer: {X+, X-} for each named
/// axis of a rank-2 or rank-3 grid (W+, W-, H+, H- in 2-D).
std::vector<ScanOrdering> axis_continuous_orderings(std::size_t rank);

/// Flattens `a` (rank == o.rank()) to a rank-1 sequence.
NdArray apply(const NdArray& a, const ScanOrdering& o);
/// Inverse of apply for an array of shape `shape`.
NdArray invert(const NdArray& seq, const ScanOrdering& o, const Shape& shape);

/// Channel-carrying variants: a grid (d_1..d_N, C) maps to a sequence (L, C);
/// the direction reverses sequence positions only.
NdArray apply_grid(const NdArray& grid, const ScanOrdering& o);
NdArray invert_grid(const NdArray& seq, const ScanOrdering& o, const Shape& grid_shape);
Var apply_grid(Var grid, const ScanOrdering& o);
Var invert_grid(Var seq, const ScanOrdering& o, const Shape& grid_shape);

/// One point of the rank-3 alternating design space: which permutation
/// represents each of H, W and T, and the order in which the three axes are
/// visited. Each configuration expands to a six-layer cycle X+ X- Y+ Y- Z+ Z-.
struct AlternatingConfig {
  std::array<std::size_t, 3> axis_order;      // canonical axes (T=0, H=1, W=2), visiting order
  std::array<bool, 3> swap_leading;           // per canonical axis: swap the two non-continuous axes

  std::vector<ScanOrdering> cycle() const;
};

/// All 2^3 * 3! = 48 alternating configurations for 3-D data.
std::vector<AlternatingConfig> alternating_design_space();

}  // namespace ssmnd
