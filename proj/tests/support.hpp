#pragma once

// Reference implementations and numeric helpers shared by the test programs.
// Everything here is written directly from the definitions, independently of
// the library code it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ssmnd/ndarray.hpp"
#include "ssmnd/rng.hpp"
#include "ssmnd/tape.hpp"

namespace testing {

using ssmnd::NdArray;
using ssmnd::Shape;

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor), floor = 1e-6 * max|b| (or tiny).
inline double max_rel_error(const NdArray& a, const NdArray& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double scale = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) scale = std::max(scale, std::abs(b[i]));
  const double floor = std::max(1e-6 * scale, 1e-300);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double den = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / den);
  }
  return worst;
}

/// max_i |a_i - b_i| / max_i |b_i|: error relative to the tensor's scale.
inline double max_scaled_error(const NdArray& a, const NdArray& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double scale = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    scale = std::max(scale, std::abs(b[i]));
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return scale > 0.0 ? worst / scale : worst;
}

inline NdArray random_array(ssmnd::Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  return rng.uniform_array(std::move(shape), lo, hi);
}

/// Central finite differences of a scalar function of several arrays.
inline std::vector<NdArray> numeric_gradients(const std::function<double(const std::vector<NdArray>&)>& f,
                                              std::vector<NdArray> inputs, const std::vector<double>& steps) {
  std::vector<NdArray> grads;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const double eps = steps[k];
    NdArray g(inputs[k].shape(), 0.0);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double keep = inputs[k][i];
      inputs[k][i] = keep + eps;
      const double up = f(inputs);
      inputs[k][i] = keep - eps;
      const double down = f(inputs);
      inputs[k][i] = keep;
      g[i] = (up - down) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

/// Builds a scalar on a tape from leaves and returns value plus analytic gradients.
using TapeFn = std::function<ssmnd::Var(ssmnd::Tape&, const std::vector<ssmnd::Var>&)>;

inline std::vector<NdArray> tape_gradients(const TapeFn& build, const std::vector<NdArray>& inputs) {
  ssmnd::Tape tape;
  std::vector<ssmnd::Var> leaves;
  for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
  const ssmnd::Var root = build(tape, leaves);
  const auto grads = tape.backward(root);
  std::vector<NdArray> out;
  for (const auto& v : leaves) out.push_back(grads.of(v));
  return out;
}

inline double tape_value(const TapeFn& build, const std::vector<NdArray>& inputs) {
  ssmnd::Tape tape;
  std::vector<ssmnd::Var> leaves;
  for (const auto& x : inputs) leaves.push_back(tape.constant(x));
  return build(tape, leaves).value().item();
}

/// Worst relative error between analytic and finite-difference gradients,
/// with one finite-difference step per input.
inline double gradient_check(const TapeFn& build, const std::vector<NdArray>& inputs, const std::vector<double>& steps) {
  const auto analytic = tape_gradients(build, inputs);
  const auto numeric =
      numeric_gradients([&](const std::vector<NdArray>& xs) { return tape_value(build, xs); }, inputs, steps);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) worst = std::max(worst, max_rel_error(analytic[k], numeric[k]));
  return worst;
}

inline double gradient_check(const TapeFn& build, const std::vector<NdArray>& inputs, double eps = 1e-5) {
  return gradient_check(build, inputs, std::vector<double>(inputs.size(), eps));
}

/// Weighted sum with fixed random weights, to turn any output into a scalar
/// with a generic gradient.
inline NdArray probe_weights(const Shape& shape, std::uint64_t seed) {
  ssmnd::Rng rng(seed);
  return rng.uniform_array(shape, -1.0, 1.0);
}

/// Selective scan written straight from the recurrence, one state at a time:
///   a_bar = exp(delta a), b_bar = (exp(delta a) - 1) / a * b  (or delta b),
///   h_t = a_bar h_{t-1} + b_bar u_t (h = 0 after a reset), y_t = sum_n c_t h_t + d u_t.
inline NdArray reference_selective_scan(const NdArray& u, const NdArray& delta, const NdArray& a, const NdArray& b,
                                        const NdArray& c, const NdArray& d, bool euler_b, bool use_d,
                                        const std::vector<std::size_t>& resets = {}) {
  const std::size_t len = u.shape()[0], ch = u.shape()[1], ns = a.shape()[1];
  NdArray y({len, ch}, 0.0);
  for (std::size_t k = 0; k < ch; ++k) {
    for (std::size_t n = 0; n < ns; ++n) {
      double h = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const bool reset = std::find(resets.begin(), resets.end(), t) != resets.end();
        const double dt = delta[t * ch + k];
        const double an = a[k * ns + n];
        const double abar = std::exp(dt * an);
        const double bbar = euler_b ? dt * b[t * ns + n] : std::expm1(dt * an) / an * b[t * ns + n];
        h = (reset ? 0.0 : abar * h) + bbar * u[t * ch + k];
        y[t * ch + k] += c[t * ns + n] * h;
      }
    }
    if (use_d)
      for (std::size_t t = 0; t < len; ++t) y[t * ch + k] += d[k] * u[t * ch + k];
  }
  return y;
}

/// Index of grid position `idx` in ordering (perm, reversed): walk the
/// permuted axes as a mixed-radix number.
inline std::size_t reference_position(const std::vector<std::size_t>& idx, const Shape& shape,
                                      const std::vector<std::size_t>& perm, bool reversed) {
  std::size_t pos = 0;
  for (std::size_t i = 0; i < perm.size(); ++i) pos = pos * shape[perm[i]] + idx[perm[i]];
  const std::size_t total = ssmnd::shape_size(shape);
  return reversed ? total - 1 - pos : pos;
}

}  // namespace testing
