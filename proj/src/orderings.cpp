#include "ssmnd/orderings.hpp"

#include <algorithm>
#include <numeric>

#include "ssmnd/errors.hpp"
#include "ssmnd/ops.hpp"

namespace ssmnd {

ScanOrdering ScanOrdering::flipped() const {
  return ScanOrdering{perm, reversed() ? Direction::Forward : Direction::Reverse};
}

std::string axis_letters(std::size_t rank) {
  switch (rank) {
    case 1: return "L";
    case 2: return "HW";
    case 3: return "THW";
    default: {
      std::string s;
      for (std::size_t i = 0; i < rank; ++i) s += static_cast<char>('0' + static_cast<int>(i % 10));
      return s;
    }
  }
}

namespace {

bool is_identity(std::span<const std::size_t> perm) {
  for (std::size_t i = 0; i < perm.size(); ++i)
    if (perm[i] != i) return false;
  return true;
}

std::vector<std::size_t> named_perm(char axis, std::size_t rank) {
  if (axis == 'L') {
    std::vector<std::size_t> p(rank);
    std::iota(p.begin(), p.end(), 0);
    return p;
  }
  if (rank == 2) {
    if (axis == 'H') return {1, 0};
    if (axis == 'W') return {0, 1};
  } else if (rank == 3) {
    if (axis == 'H') return {0, 2, 1};
    if (axis == 'W') return {0, 1, 2};
    if (axis == 'T') return {1, 2, 0};
  }
  throw InvalidOrdering(std::string("no shorthand '") + axis + "' for rank " + std::to_string(rank));
}

}  // namespace

ScanOrdering named_ordering(char axis, Direction dir, std::size_t rank) {
  if (rank == 0) throw InvalidOrdering("rank must be positive");
  return ScanOrdering{named_perm(axis, rank), dir};
}

ScanOrdering layout_ordering(std::size_t rank, Direction dir) { return named_ordering('L', dir, rank); }

ScanOrdering parse_ordering(std::string_view token, std::size_t rank) {
  if (token.empty()) throw InvalidOrdering("empty ordering token");
  Direction dir = Direction::Forward;
  std::string_view body = token;
  const char last = token.back();
  if (last == '+' || last == '-') {
    dir = last == '+' ? Direction::Forward : Direction::Reverse;
    body = token.substr(0, token.size() - 1);
  }
  if (body.size() == 1) return named_ordering(body[0], dir, rank);
  if (body.size() >= 2 && body.front() == '(' && body.back() == ')') {
    const std::string letters = axis_letters(rank);
    body = body.substr(1, body.size() - 2);
    if (body.size() != rank)
      throw InvalidOrdering("ordering '" + std::string(token) + "' does not have rank " + std::to_string(rank));
    std::vector<std::size_t> perm;
    for (char c : body) {
      const auto pos = letters.find(c);
      if (pos == std::string::npos)
        throw InvalidOrdering("unknown axis '" + std::string(1, c) + "' in '" + std::string(token) + "'");
      perm.push_back(pos);
    }
    try {
      check_permutation(perm, rank);
    } catch (const InvalidPermutation&) {
      throw InvalidOrdering("'" + std::string(token) + "' repeats an axis");
    }
    return ScanOrdering{perm, dir};
  }
  throw InvalidOrdering("cannot parse ordering token '" + std::string(token) + "'");
}

std::string explicit_name(const ScanOrdering& o) {
  const std::string letters = axis_letters(o.rank());
  std::string s = "(";
  for (auto p : o.perm) s += letters.at(p);
  s += ')';
  s += o.reversed() ? '-' : '+';
  return s;
}

std::string ordering_name(const ScanOrdering& o) {
  const char sign = o.reversed() ? '-' : '+';
  const std::size_t rank = o.rank();
  if (rank == 1) return std::string("L") + sign;
  if (rank == 2 || rank == 3) {
    const std::string axes = rank == 2 ? "WH" : "WHT";
    for (char a : axes)
      if (named_perm(a, rank) == o.perm) return std::string(1, a) + sign;
  }
  return explicit_name(o);
}

std::vector<ScanOrdering> enumerate_orderings(std::size_t rank) {
  if (rank == 0) throw InvalidOrdering("rank must be positive");
  std::vector<std::size_t> perm(rank);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<ScanOrdering> out;
  do {
    out.push_back({perm, Direction::Forward});
    out.push_back({perm, Direction::Reverse});
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

std::vector<ScanOrdering> axis_continuous_orderings(std::size_t rank) {
  std::string axes;
  if (rank == 1) axes = "L";
  else if (rank == 2) axes = "WH";
  else if (rank == 3) axes = "HWT";
  else throw InvalidOrdering("N-directional orderings defined for rank 1..3");
  std::vector<ScanOrdering> out;
  for (char a : axes) {
    out.push_back(named_ordering(a, Direction::Forward, rank));
    out.push_back(named_ordering(a, Direction::Reverse, rank));
  }
  return out;
}

NdArray apply(const NdArray& a, const ScanOrdering& o) {
  if (a.rank() != o.rank())
    throw InvalidOrdering("ordering of rank " + std::to_string(o.rank()) + " applied to array of shape " +
                          shape_string(a.shape()));
  check_permutation(o.perm, o.rank());
  NdArray seq = (is_identity(o.perm) ? a : permute(a, o.perm)).reshape(Shape{a.size()});
  return o.reversed() ? reverse_flat(seq) : seq;
}

NdArray invert(const NdArray& seq, const ScanOrdering& o, const Shape& shape) {
  if (seq.size() != shape_size(shape) || shape.size() != o.rank())
    throw ShapeError("sequence of length " + std::to_string(seq.size()) + " cannot fill " + shape_string(shape));
  check_permutation(o.perm, o.rank());
  NdArray s = o.reversed() ? reverse_flat(seq) : seq;
  Shape permuted(o.rank());
  for (std::size_t i = 0; i < o.rank(); ++i) permuted[i] = shape[o.perm[i]];
  s = std::move(s).reshape(permuted);
  if (is_identity(o.perm)) return s;
  return permute(s, inverse_permutation(o.perm));
}

namespace {

std::vector<std::size_t> with_channel(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> p = perm;
  p.push_back(perm.size());
  return p;
}

void check_grid(const Shape& grid_shape, const ScanOrdering& o) {
  if (grid_shape.size() != o.rank() + 1)
    throw InvalidOrdering("ordering of rank " + std::to_string(o.rank()) + " applied to grid " +
                          shape_string(grid_shape) + " (expected spatial axes plus channels)");
  check_permutation(o.perm, o.rank());
}

}  // namespace

NdArray apply_grid(const NdArray& grid, const ScanOrdering& o) {
  check_grid(grid.shape(), o);
  const std::size_t ch = grid.shape().back();
  NdArray seq = (is_identity(o.perm) ? grid : permute(grid, with_channel(o.perm)))
                    .reshape(Shape{grid.size() / ch, ch});
  return o.reversed() ? flip(seq, 0) : seq;
}

NdArray invert_grid(const NdArray& seq, const ScanOrdering& o, const Shape& grid_shape) {
  check_grid(grid_shape, o);
  if (seq.size() != shape_size(grid_shape)) throw ShapeError("sequence does not fill grid " + shape_string(grid_shape));
  NdArray s = o.reversed() ? flip(seq, 0) : seq;
  Shape permuted(grid_shape.size());
  for (std::size_t i = 0; i < o.rank(); ++i) permuted[i] = grid_shape[o.perm[i]];
  permuted.back() = grid_shape.back();
  s = std::move(s).reshape(permuted);
  if (is_identity(o.perm)) return s;
  return permute(s, inverse_permutation(with_channel(o.perm)));
}

Var apply_grid(Var grid, const ScanOrdering& o) {
  const Shape& shape = grid.shape();
  check_grid(shape, o);
  const std::size_t ch = shape.back();
  const std::size_t len = shape_size(shape) / ch;
  Var v = is_identity(o.perm) ? grid : ops::permute(grid, with_channel(o.perm));
  v = ops::reshape(v, Shape{len, ch});
  return o.reversed() ? ops::flip(v, 0) : v;
}

Var invert_grid(Var seq, const ScanOrdering& o, const Shape& grid_shape) {
  check_grid(grid_shape, o);
  if (shape_size(seq.shape()) != shape_size(grid_shape))
    throw ShapeError("sequence does not fill grid " + shape_string(grid_shape));
  Var v = o.reversed() ? ops::flip(seq, 0) : seq;
  Shape permuted(grid_shape.size());
  for (std::size_t i = 0; i < o.rank(); ++i) permuted[i] = grid_shape[o.perm[i]];
  permuted.back() = grid_shape.back();
  v = ops::reshape(v, permuted);
  if (is_identity(o.perm)) return v;
  const auto inv = inverse_permutation(with_channel(o.perm));
  return ops::permute(v, inv);
}

std::vector<ScanOrdering> AlternatingConfig::cycle() const {
  static constexpr char kNames[3] = {'T', 'H', 'W'};
  std::vector<ScanOrdering> out;
  for (std::size_t axis : axis_order) {
    std::vector<std::size_t> perm = named_perm(kNames[axis], 3);
    if (swap_leading[axis]) std::swap(perm[0], perm[1]);
    out.push_back({perm, Direction::Forward});
    out.push_back({perm, Direction::Reverse});
  }
  return out;
}

std::vector<AlternatingConfig> alternating_design_space() {
  std::vector<AlternatingConfig> out;
  std::array<std::size_t, 3> order{0, 1, 2};
  do {
    for (unsigned mask = 0; mask < 8; ++mask)
      out.push_back({order, {(mask & 1u) != 0, (mask & 2u) != 0, (mask & 4u) != 0}});
  } while (std::next_permutation(order.begin(), order.end()));
  return out;
}

}  // namespace ssmnd
