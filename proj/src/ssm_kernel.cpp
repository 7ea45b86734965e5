#include "ssmnd/ssm_kernel.hpp"

#include <cmath>
#include <memory>

#include "ssmnd/errors.hpp"
#include "ssmnd/ndarray.hpp"
#include "ssmnd/parallel_scan.hpp"

namespace ssmnd::ssm {

double zoh_factor_exact(double z) { return z == 0.0 ? 1.0 : std::expm1(z) / z; }

double zoh_factor_series(double z) { return 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0; }

double zoh_factor(double z) {
  return std::abs(z) < kSeriesThreshold ? zoh_factor_series(z) : zoh_factor_exact(z);
}

namespace {

// d/dz of (exp(z) - 1) / z.
double zoh_factor_derivative(double z) {
  if (std::abs(z) < 1e-2) {
    // sum_k k z^(k-1) / (k+1)!
    return 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0 + z * z * z * z / 144.0;
  }
  return (z * std::exp(z) - std::expm1(z)) / (z * z);
}

struct Dims {
  std::size_t len, ch, state;
};

Dims check_scan_inputs(const ScanInputs& in) {
  if (in.a_bar.rank() != 3) throw ShapeError("a_bar must be (L, C, N)");
  const Dims d{in.a_bar.shape()[0], in.a_bar.shape()[1], in.a_bar.shape()[2]};
  if (in.bx.shape() != in.a_bar.shape()) throw ShapeError("bx shape " + shape_string(in.bx.shape()) +
                                                          " != a_bar shape " + shape_string(in.a_bar.shape()));
  if (in.c.shape() != Shape{d.len, d.state}) throw ShapeError("c must be (L, N), got " + shape_string(in.c.shape()));
  if (in.x.shape() != Shape{d.len, d.ch}) throw ShapeError("x must be (L, C), got " + shape_string(in.x.shape()));
  if (in.d_skip.shape() != Shape{d.ch}) throw ShapeError("d_skip must be (C), got " + shape_string(in.d_skip.shape()));
  return d;
}

std::vector<bool> reset_mask(std::span<const std::size_t> boundaries, std::size_t len) {
  validate_boundaries(boundaries, len);
  std::vector<bool> reset(len, false);
  for (auto b : boundaries) reset[b] = true;
  return reset;
}

void readout(const ScanInputs& in, const Dims& d, ScanOutputs& out) {
  out.y = NdArray({d.len, d.ch});
  for (std::size_t t = 0; t < d.len; ++t)
    for (std::size_t c = 0; c < d.ch; ++c) {
      const std::size_t base = (t * d.ch + c) * d.state;
      double acc = 0.0;
      for (std::size_t n = 0; n < d.state; ++n) acc += in.c[t * d.state + n] * out.h[base + n];
      out.y[t * d.ch + c] = acc + in.d_skip[c] * in.x[t * d.ch + c];
    }
}

// Sequential recurrence over [begin, end) with the state starting at zero.
void sequential_range(const ScanInputs& in, const Dims& d, std::size_t begin, std::size_t end, NdArray& h) {
  const std::size_t lane = d.ch * d.state;
  for (std::size_t t = begin; t < end; ++t) {
    const std::size_t base = t * lane;
    if (t == begin) {
      for (std::size_t i = 0; i < lane; ++i) h[base + i] = in.a_bar[base + i] * 0.0 + in.bx[base + i];
    } else {
      for (std::size_t i = 0; i < lane; ++i) h[base + i] = in.a_bar[base + i] * h[base - lane + i] + in.bx[base + i];
    }
  }
}

struct Affine {
  double a;
  double b;
};

void parallel_range(const ScanInputs& in, const Dims& d, std::size_t begin, std::size_t end, NdArray& h) {
  const std::size_t lane = d.ch * d.state;
  const auto combine = [](const Affine& earlier, const Affine& later) {
    return Affine{earlier.a * later.a, later.a * earlier.b + later.b};
  };
  std::vector<Affine> xs(end - begin);
  for (std::size_t i = 0; i < lane; ++i) {
    for (std::size_t t = begin; t < end; ++t) xs[t - begin] = {in.a_bar[t * lane + i], in.bx[t * lane + i]};
    blelloch_inclusive_scan(xs, combine, Affine{1.0, 0.0});
    for (std::size_t t = begin; t < end; ++t) h[t * lane + i] = xs[t - begin].b;
  }
}

}  // namespace

Discretized discretize(double a, double b, double delta, bool euler_b) {
  if (!(delta > 0.0)) throw InvalidDelta("step size must be positive, got " + std::to_string(delta));
  const double z = delta * a;
  const double a_bar = std::exp(z);
  const double b_bar = euler_b ? delta * b : zoh_factor(z) * delta * b;
  return {a_bar, b_bar};
}

void validate_boundaries(std::span<const std::size_t> boundaries, std::size_t length) {
  std::size_t prev = 0;
  for (auto b : boundaries) {
    if (b == 0 || b >= length || b <= prev)
      throw InvalidBoundary("boundary " + std::to_string(b) + " not strictly increasing within [1, " +
                            std::to_string(length) + ")");
    prev = b;
  }
}

ScanOutputs scan_sequential(const ScanInputs& in) { return scan_factorized(in, {}, ScanMode::Sequential); }

ScanOutputs scan_parallel(const ScanInputs& in) { return scan_factorized(in, {}, ScanMode::Parallel); }

ScanOutputs scan_factorized(const ScanInputs& in, std::span<const std::size_t> boundaries, ScanMode mode) {
  const Dims d = check_scan_inputs(in);
  validate_boundaries(boundaries, d.len);
  ScanOutputs out;
  out.h = NdArray(in.a_bar.shape());
  std::size_t begin = 0;
  for (std::size_t k = 0; k <= boundaries.size(); ++k) {
    const std::size_t end = k < boundaries.size() ? boundaries[k] : d.len;
    if (mode == ScanMode::Sequential) sequential_range(in, d, begin, end, out.h);
    else parallel_range(in, d, begin, end, out.h);
    begin = end;
  }
  readout(in, d, out);
  return out;
}

void check_shapes(const SelectiveInputs& in) {
  if (in.u.rank() != 2) throw ShapeError("u must be (L, C), got " + shape_string(in.u.shape()));
  const std::size_t len = in.u.shape()[0], ch = in.u.shape()[1];
  if (in.a.rank() != 2 || in.a.shape()[0] != ch) throw ShapeError("A must be (C, N), got " + shape_string(in.a.shape()));
  const std::size_t state = in.a.shape()[1];
  if (in.delta.shape() != in.u.shape()) throw ShapeError("delta must match u, got " + shape_string(in.delta.shape()));
  if (in.b.shape() != Shape{len, state}) throw ShapeError("B must be (L, N), got " + shape_string(in.b.shape()));
  if (in.c.shape() != Shape{len, state}) throw ShapeError("C must be (L, N), got " + shape_string(in.c.shape()));
  if (in.d_skip.shape() != Shape{ch}) throw ShapeError("D must be (C), got " + shape_string(in.d_skip.shape()));
}

ScanInputs discretize_all(const SelectiveInputs& in, bool euler_b) {
  check_shapes(in);
  const std::size_t len = in.u.shape()[0], ch = in.u.shape()[1], state = in.a.shape()[1];
  ScanInputs s{NdArray({len, ch, state}), NdArray({len, ch, state}), in.c, in.d_skip, in.u};
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < ch; ++c) {
      const double delta = in.delta[t * ch + c];
      const double x = in.u[t * ch + c];
      for (std::size_t n = 0; n < state; ++n) {
        const auto [a_bar, b_bar] = discretize(in.a[c * state + n], in.b[t * state + n], delta, euler_b);
        const std::size_t i = (t * ch + c) * state + n;
        s.a_bar[i] = a_bar;
        s.bx[i] = b_bar * x;
      }
    }
  return s;
}

SelectiveForward selective_scan_forward(const SelectiveInputs& in, const ScanOptions& opt) {
  check_shapes(in);
  const std::size_t len = in.u.shape()[0], ch = in.u.shape()[1], state = in.a.shape()[1];
  ScanInputs s{NdArray({len, ch, state}), NdArray({len, ch, state}), in.c,
               opt.use_d_skip ? in.d_skip : NdArray(in.d_skip.shape(), 0.0), in.u};
  NdArray b_bar({len, ch, state});
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < ch; ++c) {
      const double delta = in.delta[t * ch + c];
      const double x = in.u[t * ch + c];
      for (std::size_t n = 0; n < state; ++n) {
        const auto [ab, bb] = discretize(in.a[c * state + n], in.b[t * state + n], delta, opt.euler_b);
        const std::size_t i = (t * ch + c) * state + n;
        s.a_bar[i] = ab;
        b_bar[i] = bb;
        s.bx[i] = bb * x;
      }
    }
  ScanOutputs o = scan_factorized(s, opt.boundaries, opt.mode);
  return SelectiveForward{std::move(o.y), std::move(s.a_bar), std::move(b_bar), std::move(o.h)};
}

SelectiveGrads scan_backward(const SelectiveInputs& in, const SelectiveForward& fwd, const NdArray& grad_y,
                             const ScanOptions& opt) {
  check_shapes(in);
  const std::size_t len = in.u.shape()[0], ch = in.u.shape()[1], state = in.a.shape()[1];
  if (grad_y.shape() != in.u.shape()) throw ShapeError("grad_y must match y");
  const std::vector<bool> reset = reset_mask(opt.boundaries, len);
  const std::size_t lane = ch * state;

  SelectiveGrads g{NdArray(in.u.shape(), 0.0), NdArray(in.delta.shape(), 0.0), NdArray(in.a.shape(), 0.0),
                   NdArray(in.b.shape(), 0.0), NdArray(in.c.shape(), 0.0), NdArray(in.d_skip.shape(), 0.0)};

  if (opt.use_d_skip)
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t c = 0; c < ch; ++c) {
        const double gy = grad_y[t * ch + c];
        g.d_skip[c] += gy * in.u[t * ch + c];
        g.u[t * ch + c] += gy * in.d_skip[c];
      }

  std::vector<double> carry(lane, 0.0);  // a_bar_{t+1} * gh_{t+1}
  for (std::size_t t = len; t-- > 0;) {
    for (std::size_t c = 0; c < ch; ++c) {
      const double gy = grad_y[t * ch + c];
      const double delta = in.delta[t * ch + c];
      const double x = in.u[t * ch + c];
      double g_delta = 0.0, g_x = 0.0;
      for (std::size_t n = 0; n < state; ++n) {
        const std::size_t li = c * state + n;
        const std::size_t i = t * lane + li;
        const double gh = gy * in.c[t * state + n] + carry[li];
        g.c[t * state + n] += gy * fwd.h[i];

        const double a = in.a[c * state + n];
        const double a_bar = fwd.a_bar[i];
        const double h_prev = (t > 0 && !reset[t]) ? fwd.h[i - lane] : 0.0;
        const double g_abar = reset[t] ? 0.0 : gh * h_prev;
        const double g_bbar = gh * x;
        g_x += gh * fwd.b_bar[i];

        const double bt = in.b[t * state + n];
        double db_ddelta, db_da, db_db;
        if (opt.euler_b) {
          db_ddelta = bt;
          db_da = 0.0;
          db_db = delta;
        } else {
          // b_bar = B (exp(delta A) - 1) / A
          const double z = delta * a;
          db_ddelta = bt * a_bar;
          db_da = bt * delta * delta * zoh_factor_derivative(z);
          db_db = delta * zoh_factor(z);
        }
        g_delta += g_abar * a_bar * a + g_bbar * db_ddelta;
        g.a[c * state + n] += g_abar * a_bar * delta + g_bbar * db_da;
        g.b[t * state + n] += g_bbar * db_db;
        carry[li] = reset[t] ? 0.0 : a_bar * gh;
      }
      g.delta[t * ch + c] += g_delta;
      g.u[t * ch + c] += g_x;
    }
  }
  return g;
}

Var selective_scan(Var u, Var delta, Var a, Var b, Var c, Var d_skip, const ScanOptions& opt) {
  Tape* t = u.tape();
  for (Var v : {delta, a, b, c, d_skip})
    if (v.tape() != t) throw Error("selective_scan operands live on different tapes");
  SelectiveInputs in{u.value(), delta.value(), a.value(), b.value(), c.value(), d_skip.value()};
  auto fwd = std::make_shared<SelectiveForward>(selective_scan_forward(in, opt));
  NdArray y = fwd->y;
  const std::vector<std::size_t> ids{u.id(), delta.id(), a.id(), b.id(), c.id(), d_skip.id()};
  return t->record(std::move(y), ids, [t, ids, fwd, opt](const NdArray& gy) {
    SelectiveInputs saved{t->value(ids[0]), t->value(ids[1]), t->value(ids[2]),
                          t->value(ids[3]), t->value(ids[4]), t->value(ids[5])};
    SelectiveGrads g = scan_backward(saved, *fwd, gy, opt);
    return std::vector<NdArray>{std::move(g.u), std::move(g.delta), std::move(g.a),
                                std::move(g.b), std::move(g.c),     std::move(g.d_skip)};
  });
}

}  // namespace ssmnd::ssm
