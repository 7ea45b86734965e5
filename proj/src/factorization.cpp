#include "ssmnd/factorization.hpp"

#include <algorithm>

#include "ssmnd/errors.hpp"

namespace ssmnd {

std::string to_string(FactorizationPolicy p) {
  switch (p) {
    case FactorizationPolicy::Mono3D: return "3D";
    case FactorizationPolicy::TwoPlusOne: return "2D+1D";
    case FactorizationPolicy::TwoPlusThree: return "2D+3D";
    case FactorizationPolicy::OnePlusOnePlusOne: return "1D+1D+1D";
  }
  return "?";
}

FactorizationPolicy parse_factorization(const std::string& s) {
  if (s == "3D" || s == "mono" || s == "none") return FactorizationPolicy::Mono3D;
  if (s == "2D+1D") return FactorizationPolicy::TwoPlusOne;
  if (s == "2D+3D") return FactorizationPolicy::TwoPlusThree;
  if (s == "1D+1D+1D") return FactorizationPolicy::OnePlusOnePlusOne;
  throw FactorizationError("unknown factorization policy '" + s + "'");
}

std::size_t chunk_axes(FactorizationPolicy p, const ScanOrdering& o) {
  const std::size_t rank = o.rank();
  if (p == FactorizationPolicy::Mono3D) return rank;
  if (rank != 3) throw FactorizationError("policy " + to_string(p) + " needs 3-D data, got rank " + std::to_string(rank));
  const bool temporal = o.continuous_axis() == 0;
  switch (p) {
    case FactorizationPolicy::TwoPlusThree: return temporal ? 3 : 2;
    case FactorizationPolicy::TwoPlusOne: return temporal ? 1 : 2;
    case FactorizationPolicy::OnePlusOnePlusOne: return 1;
    default: return rank;
  }
}

SequenceLayout scan_layout(const Shape& spatial_shape, const ScanOrdering& o, FactorizationPolicy p) {
  if (spatial_shape.size() != o.rank())
    throw InvalidOrdering("ordering rank " + std::to_string(o.rank()) + " vs grid " + shape_string(spatial_shape));
  const std::size_t k = chunk_axes(p, o);
  const std::size_t total = shape_size(spatial_shape);
  std::size_t length = 1;
  for (std::size_t i = o.rank() - k; i < o.rank(); ++i) length *= spatial_shape[o.perm[i]];
  SequenceLayout layout{total / length, length, {}};
  for (std::size_t b = length; b < total; b += length) layout.boundaries.push_back(b);
  return layout;
}

std::vector<SubSequence> factorize_grid(const NdArray& grid, FactorizationPolicy p, const ScanOrdering& o) {
  Shape spatial(grid.shape().begin(), grid.shape().end() - 1);
  const SequenceLayout layout = scan_layout(spatial, o, p);
  const NdArray seq = apply_grid(grid, o);
  const std::size_t ch = grid.shape().back();
  std::vector<SubSequence> out;
  for (std::size_t k = 0; k < layout.count; ++k) {
    const std::size_t off = k * layout.length;
    std::vector<double> vals(seq.values().begin() + static_cast<std::ptrdiff_t>(off * ch),
                             seq.values().begin() + static_cast<std::ptrdiff_t>((off + layout.length) * ch));
    out.push_back({NdArray({layout.length, ch}, std::move(vals)), off});
  }
  return out;
}

std::size_t max_sequence_count(const Shape& spatial_shape, FactorizationPolicy p) {
  std::size_t best = 1;
  for (const auto& o : axis_continuous_orderings(spatial_shape.size()))
    best = std::max(best, scan_layout(spatial_shape, o, p).count);
  return best;
}

}  // namespace ssmnd
