#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ssmnd {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(std::span<const std::size_t> shape);
Shape row_major_strides(std::span<const std::size_t> shape);
std::string shape_string(std::span<const std::size_t> shape);

/// Dense row-major array of doubles. A value type: copies own their data.
///
/// Every extent is positive and `size() == product(shape())`. A rank-0 array
/// (empty shape) holds a single scalar.
class NdArray {
 public:
  NdArray() = default;
  explicit NdArray(Shape shape, double fill = 0.0);
  NdArray(Shape shape, std::vector<double> data);

  static NdArray scalar(double v) { return NdArray(Shape{}, std::vector<double>{v}); }
  static NdArray vector(std::vector<double> v);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  Shape strides() const { return row_major_strides(shape_); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t flat) const { return data_[flat]; }
  double& operator[](std::size_t flat) { return data_[flat]; }

  double at(std::initializer_list<std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);
  std::size_t offset(std::span<const std::size_t> index) const;

  /// Value of a rank-0 or single-element array.
  double item() const;

  /// Same data, new shape; the element count must match.
  NdArray reshape(Shape shape) const&;
  NdArray reshape(Shape shape) &&;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Bit-exact equality of shape and data (NaN payloads compared by bits).
bool bit_equal(const NdArray& a, const NdArray& b);

/// out.shape[i] == a.shape[perm[i]].
NdArray permute(const NdArray& a, std::span<const std::size_t> perm);
std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm);
void check_permutation(std::span<const std::size_t> perm, std::size_t rank);

/// Reverses the flattened row-major sequence; shape is kept.
NdArray reverse_flat(const NdArray& a);

/// Reverses the order of entries along one axis.
NdArray flip(const NdArray& a, std::size_t axis);

/// Pairwise (cascade) summation; error grows as O(log n) ulps.
double pairwise_sum(std::span<const double> values);

double max_abs(const NdArray& a);

}  // namespace ssmnd
