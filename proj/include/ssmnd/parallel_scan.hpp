#pragma once

#include <cstddef>
#include <vector>

namespace ssmnd {

/// In-place inclusive scan with a work-efficient up-sweep/down-sweep
/// (Blelloch) schedule over a power-of-two padded buffer.
///
/// `combine(earlier, later)` must be associative; it need not be commutative.
/// `identity` must satisfy combine(identity, x) == combine(x, identity) == x.
/// The tree shape depends only on xs.size(), so results are reproducible.
template <class T, class Combine>
void blelloch_inclusive_scan(std::vector<T>& xs, Combine combine, const T& identity) {
  const std::size_t n = xs.size();
  if (n <= 1) return;
  std::size_t padded = 1;
  while (padded < n) padded <<= 1;

  std::vector<T> tree(padded, identity);
  for (std::size_t i = 0; i < n; ++i) tree[i] = xs[i];

  // Up-sweep: tree[i] becomes the reduction of its subtree.
  for (std::size_t stride = 1; stride < padded; stride <<= 1)
    for (std::size_t i = 2 * stride - 1; i < padded; i += 2 * stride)
      tree[i] = combine(tree[i - stride], tree[i]);

  // Down-sweep: exclusive prefixes.
  tree[padded - 1] = identity;
  for (std::size_t stride = padded >> 1; stride >= 1; stride >>= 1)
    for (std::size_t i = 2 * stride - 1; i < padded; i += 2 * stride) {
      T left = tree[i - stride];
      tree[i - stride] = tree[i];
      tree[i] = combine(tree[i], left);
    }

  for (std::size_t i = 0; i < n; ++i) xs[i] = combine(tree[i], xs[i]);
}

}  // namespace ssmnd
