#include "ssmnd/ndarray.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "ssmnd/errors.hpp"

namespace ssmnd {

std::size_t shape_size(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Shape row_major_strides(std::span<const std::size_t> shape) {
  Shape strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("zero extent in shape " + shape_string(shape));
}

}  // namespace

NdArray::NdArray(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_size(shape_), fill);
}

NdArray::NdArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != shape_size(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
}

NdArray NdArray::vector(std::vector<double> v) {
  Shape s{v.size()};
  return NdArray(std::move(s), std::move(v));
}

std::size_t NdArray::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size())
    throw IndexError("index rank " + std::to_string(index.size()) + " for shape " +
                     shape_string(shape_));
  std::size_t off = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) throw IndexError("index out of range for shape " + shape_string(shape_));
    off = off * shape_[i] + index[i];
  }
  return off;
}

double NdArray::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

double& NdArray::at(std::initializer_list<std::size_t> index) {
  return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

double NdArray::item() const {
  if (data_.size() != 1) throw ShapeError("item() on array of shape " + shape_string(shape_));
  return data_[0];
}

NdArray NdArray::reshape(Shape shape) const& {
  NdArray copy = *this;
  return std::move(copy).reshape(std::move(shape));
}

NdArray NdArray::reshape(Shape shape) && {
  if (shape_size(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  check_extents(shape);
  return NdArray(std::move(shape), std::move(data_));
}

bool bit_equal(const NdArray& a, const NdArray& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

void check_permutation(std::span<const std::size_t> perm, std::size_t rank) {
  if (perm.size() != rank)
    throw InvalidPermutation("permutation of length " + std::to_string(perm.size()) +
                             " for rank " + std::to_string(rank));
  std::vector<bool> seen(rank, false);
  for (auto p : perm) {
    if (p >= rank || seen[p]) throw InvalidPermutation("not a permutation of 0..N-1");
    seen[p] = true;
  }
}

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  return inv;
}

NdArray permute(const NdArray& a, std::span<const std::size_t> perm) {
  check_permutation(perm, a.rank());
  const std::size_t rank = a.rank();
  Shape out_shape(rank);
  const Shape in_strides = a.strides();
  std::vector<std::size_t> src_stride(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = a.shape()[perm[i]];
    src_stride[i] = in_strides[perm[i]];
  }
  std::vector<double> out(a.size());
  if (rank == 0) return NdArray(out_shape, a.values());

  // Odometer walk over the output; the innermost axis is a strided copy.
  std::vector<std::size_t> idx(rank, 0);
  const std::size_t inner = out_shape[rank - 1];
  const std::size_t inner_stride = src_stride[rank - 1];
  auto src = a.data();
  std::size_t base = 0;
  for (std::size_t o = 0; o < out.size(); o += inner) {
    for (std::size_t k = 0; k < inner; ++k) out[o + k] = src[base + k * inner_stride];
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      base += src_stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      base -= src_stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return NdArray(std::move(out_shape), std::move(out));
}

NdArray reverse_flat(const NdArray& a) {
  std::vector<double> out(a.values().rbegin(), a.values().rend());
  return NdArray(a.shape(), std::move(out));
}

NdArray flip(const NdArray& a, std::size_t axis) {
  if (axis >= a.rank()) throw ShapeError("flip axis out of range");
  const std::size_t outer = shape_size(std::span(a.shape()).first(axis));
  const std::size_t n = a.shape()[axis];
  const std::size_t inner = shape_size(std::span(a.shape()).subspan(axis + 1));
  std::vector<double> out(a.size());
  auto src = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t from = (o * n + i) * inner;
      const std::size_t to = (o * n + (n - 1 - i)) * inner;
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(from), inner,
                  out.begin() + static_cast<std::ptrdiff_t>(to));
    }
  return NdArray(a.shape(), std::move(out));
}

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 16;
  if (values.size() <= kBlock) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double max_abs(const NdArray& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace ssmnd
