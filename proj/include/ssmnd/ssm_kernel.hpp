#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssmnd/ndarray.hpp"
#include "ssmnd/tape.hpp"

namespace ssmnd::ssm {

/// |ΔA| below which the zero-order-hold factor switches to its Taylor series.
inline constexpr double kSeriesThreshold = 1e-4;

struct Discretized {
  double a_bar;
  double b_bar;
};

/// Zero-order hold for one diagonal entry: a_bar = exp(ΔA),
/// b_bar = (ΔA)^-1 (exp(ΔA) - 1) ΔB. With `euler_b`, b_bar = ΔB.
/// Throws InvalidDelta unless delta > 0.
Discretized discretize(double a, double b, double delta, bool euler_b = false);

/// (exp(z) - 1) / z, switching to 1 + z/2 + z^2/6 + z^3/24 for |z| < kSeriesThreshold.
double zoh_factor(double z);
double zoh_factor_exact(double z);
double zoh_factor_series(double z);

enum class ScanMode { Sequential, Parallel };

/// Discretized operands of one scan: L steps, C channels, N states.
struct ScanInputs {
  NdArray a_bar;   // (L, C, N)
  NdArray bx;      // (L, C, N), b_bar_t * x_t
  NdArray c;       // (L, N)
  NdArray d_skip;  // (C)
  NdArray x;       // (L, C)
};

struct ScanOutputs {
  NdArray y;  // (L, C)
  NdArray h;  // (L, C, N)
};

/// h_t = a_bar_t h_{t-1} + bx_t with h_{-1} = 0; y_t = <c_t, h_t> + d_skip x_t.
ScanOutputs scan_sequential(const ScanInputs& in);

/// Same recurrence through the associative combine
/// (a2, b2) o (a1, b1) = (a1 a2, a2 b1 + b2) on a balanced tree.
ScanOutputs scan_parallel(const ScanInputs& in);

/// Independent scans over the sub-sequences delimited by `boundaries`
/// (strictly increasing cut positions in [1, L)); the state restarts from
/// zero at each cut.
ScanOutputs scan_factorized(const ScanInputs& in, std::span<const std::size_t> boundaries,
                            ScanMode mode = ScanMode::Sequential);

void validate_boundaries(std::span<const std::size_t> boundaries, std::size_t length);

struct ScanOptions {
  ScanMode mode = ScanMode::Sequential;
  bool euler_b = false;
  bool use_d_skip = true;
  std::vector<std::size_t> boundaries;  // state resets, see scan_factorized
};

/// Undiscretized operands of the selective scan.
struct SelectiveInputs {
  NdArray u;       // (L, C) input sequence
  NdArray delta;   // (L, C) positive step sizes
  NdArray a;       // (C, N) negative diagonal state matrix
  NdArray b;       // (L, N) input projections B_t
  NdArray c;       // (L, N) output projections C_t
  NdArray d_skip;  // (C)
};

/// Forward result plus what the backward pass needs.
struct SelectiveForward {
  NdArray y;      // (L, C)
  NdArray a_bar;  // (L, C, N)
  NdArray b_bar;  // (L, C, N)
  NdArray h;      // (L, C, N)
};

struct SelectiveGrads {
  NdArray u, delta, a, b, c, d_skip;
};

void check_shapes(const SelectiveInputs& in);
ScanInputs discretize_all(const SelectiveInputs& in, bool euler_b);
SelectiveForward selective_scan_forward(const SelectiveInputs& in, const ScanOptions& opt = {});

/// Reverse-time adjoint recurrence: gh_t = dy_t c_t + a_bar_{t+1} gh_{t+1}.
SelectiveGrads scan_backward(const SelectiveInputs& in, const SelectiveForward& fwd,
                             const NdArray& grad_y, const ScanOptions& opt = {});

/// Tape op wrapping selective_scan_forward / scan_backward.
Var selective_scan(Var u, Var delta, Var a, Var b, Var c, Var d_skip, const ScanOptions& opt = {});

}  // namespace ssmnd::ssm
