#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssmnd/tape.hpp"

// Differentiable op set. Every op records one node on the tape of its first
// argument and carries an analytic vector-Jacobian product.

namespace ssmnd::ops {

// Elementwise. For binary ops `b` may be broadcast over `a` when b's shape
// equals the trailing dimensions of a's shape (bias-style broadcasting).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double factor);
Var exp(Var a);
Var softplus(Var a);
Var silu(Var a);

/// (m, k) x (k, n) -> (m, n).
Var matmul(Var a, Var b);

/// Depthwise causal 1-D convolution along axis 0 of x: (L, C), weight (C, K),
/// bias (C). Left padding of K-1 zeros keeps the length at L. A nonzero
/// `segment` restarts the padding every `segment` steps, so consecutive
/// segments do not see each other.
Var conv1d_causal(Var x, Var weight, Var bias, std::size_t segment = 0);

// Shape ops.
Var permute(Var a, std::span<const std::size_t> perm);
Var reverse_flat(Var a);
Var flip(Var a, std::size_t axis);
Var reshape(Var a, Shape shape);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var concat(std::span<const Var> parts, std::size_t axis);

// Reductions (pairwise summation).
Var sum(Var a);
Var mean(Var a);
Var sum_axis(Var a, std::size_t axis);
Var mean_axis(Var a, std::size_t axis);

/// Rows of `table` (V, D) selected by `indices` -> (n, D).
Var embedding(Var table, std::span<const std::size_t> indices);

/// RMS normalization over the last axis, scaled by `weight` (D).
Var rms_norm(Var x, Var weight, double eps = 1e-5);

/// Label-smoothed softmax cross-entropy of rank-1 logits; scalar result.
Var softmax_cross_entropy(Var logits, std::size_t label, double smoothing = 0.0);

}  // namespace ssmnd::ops

namespace ssmnd {

// Scalar helpers shared by kernels and ops.
double softplus(double x);
double sigmoid(double x);
double silu(double x);
/// Inverse of softplus for y > 0.
double softplus_inverse(double y);

}  // namespace ssmnd
