#include "ssmnd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssmnd/errors.hpp"

namespace ssmnd {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 20.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double silu(double x) { return x * sigmoid(x); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw InvalidDelta("softplus inverse needs a positive value");
  // log(exp(y) - 1) written to stay accurate for small and large y.
  return y + std::log(-std::expm1(-y));
}

namespace ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

Tape& tape_of(Var a) {
  if (!a.tape()) throw Error("Var is not bound to a tape");
  return *a.tape();
}

void same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw Error("operands live on different tapes");
}

// Trailing broadcast: b.shape must be a suffix of a.shape.
std::size_t broadcast_period(const Shape& a, const Shape& b) {
  if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin()))
    throw ShapeError("cannot broadcast " + shape_string(b) + " onto " + shape_string(a));
  return shape_size(b);
}

NdArray reduce_to_period(const NdArray& g, const Shape& b_shape) {
  const std::size_t period = shape_size(b_shape);
  if (period == g.size()) return g.reshape(b_shape);
  NdArray out(b_shape, 0.0);
  auto src = g.data();
  for (std::size_t i = 0; i < src.size(); ++i) out[i % period] += src[i];
  return out;
}

template <class F, class DF>
Var unary(Var a, F f, DF df) {
  const NdArray& av = a.value();
  NdArray out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  Tape* t = &tape_of(a);
  const std::size_t ia = a.id();
  return t->record(std::move(out), {ia}, [t, ia, df](const NdArray& g) {
    const NdArray& x = t->value(ia);
    NdArray gx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] = g[i] * df(x[i]);
    return std::vector<NdArray>{std::move(gx)};
  });
}

}  // namespace

Var add(Var a, Var b) {
  same_tape(a, b);
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  const std::size_t period = broadcast_period(av.shape(), bv.shape());
  NdArray out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i % period];
  const Shape b_shape = bv.shape();
  return tape_of(a).record(std::move(out), {a.id(), b.id()}, [b_shape](const NdArray& g) {
    return std::vector<NdArray>{g, reduce_to_period(g, b_shape)};
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  const std::size_t period = broadcast_period(av.shape(), bv.shape());
  NdArray out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i % period];
  const Shape b_shape = bv.shape();
  return tape_of(a).record(std::move(out), {a.id(), b.id()}, [b_shape](const NdArray& g) {
    NdArray gb = reduce_to_period(g, b_shape);
    for (auto& v : gb.data()) v = -v;
    return std::vector<NdArray>{g, std::move(gb)};
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  const std::size_t period = broadcast_period(av.shape(), bv.shape());
  NdArray out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i % period];
  Tape* t = &tape_of(a);
  const std::size_t ia = a.id(), ib = b.id();
  return t->record(std::move(out), {ia, ib}, [t, ia, ib, period](const NdArray& g) {
    const NdArray& x = t->value(ia);
    const NdArray& y = t->value(ib);
    std::vector<NdArray> r(2);
    if (t->requires_grad(ia)) {
      r[0] = NdArray(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) r[0][i] = g[i] * y[i % period];
    }
    if (t->requires_grad(ib)) {
      NdArray prod(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) prod[i] = g[i] * x[i];
      r[1] = reduce_to_period(prod, y.shape());
    }
    return r;
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double factor) {
  const NdArray& av = a.value();
  NdArray out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  return tape_of(a).record(std::move(out), {a.id()}, [factor](const NdArray& g) {
    NdArray gx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * factor;
    return std::vector<NdArray>{std::move(gx)};
  });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var softplus(Var a) {
  return unary(a, [](double x) { return ssmnd::softplus(x); }, [](double x) { return sigmoid(x); });
}

Var silu(Var a) {
  return unary(a, [](double x) { return ssmnd::silu(x); },
               [](double x) {
                 const double s = sigmoid(x);
                 return s * (1.0 + x * (1.0 - s));
               });
}

Var matmul(Var a, Var b) {
  same_tape(a, b);
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0])
    throw ShapeError("matmul " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  const auto m = static_cast<Eigen::Index>(av.shape()[0]);
  const auto k = static_cast<Eigen::Index>(av.shape()[1]);
  const auto n = static_cast<Eigen::Index>(bv.shape()[1]);
  NdArray out({av.shape()[0], bv.shape()[1]});
  Map(out.data().data(), m, n).noalias() = ConstMap(av.data().data(), m, k) * ConstMap(bv.data().data(), k, n);
  Tape* t = &tape_of(a);
  const std::size_t ia = a.id(), ib = b.id();
  return t->record(std::move(out), {ia, ib}, [t, ia, ib, m, k, n](const NdArray& g) {
    const NdArray& x = t->value(ia);
    const NdArray& y = t->value(ib);
    ConstMap gm(g.data().data(), m, n);
    std::vector<NdArray> r(2);
    if (t->requires_grad(ia)) {
      r[0] = NdArray(x.shape());
      Map(r[0].data().data(), m, k).noalias() = gm * ConstMap(y.data().data(), k, n).transpose();
    }
    if (t->requires_grad(ib)) {
      r[1] = NdArray(y.shape());
      Map(r[1].data().data(), k, n).noalias() = ConstMap(x.data().data(), m, k).transpose() * gm;
    }
    return r;
  });
}

Var conv1d_causal(Var x, Var weight, Var bias, std::size_t segment) {
  same_tape(x, weight);
  same_tape(x, bias);
  const NdArray& xv = x.value();
  const NdArray& wv = weight.value();
  const NdArray& bv = bias.value();
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || wv.shape()[0] != xv.shape()[1] ||
      bv.shape()[0] != xv.shape()[1])
    throw ShapeError("conv1d_causal: x " + shape_string(xv.shape()) + ", weight " +
                     shape_string(wv.shape()) + ", bias " + shape_string(bv.shape()));
  const std::size_t len = xv.shape()[0], ch = xv.shape()[1], width = wv.shape()[1];
  if (segment == 0) segment = len;
  if (len % segment != 0)
    throw ShapeError("conv1d_causal: segment " + std::to_string(segment) + " does not divide length " +
                     std::to_string(len));
  NdArray out(xv.shape());
  for (std::size_t t = 0; t < len; ++t) {
    const std::size_t pos = t % segment;  // steps available since the segment start
    for (std::size_t c = 0; c < ch; ++c) {
      double acc = bv[c];
      for (std::size_t k = 0; k < width; ++k) {
        const std::size_t shift = width - 1 - k;
        if (pos >= shift) acc += wv[c * width + k] * xv[(t - shift) * ch + c];
      }
      out[t * ch + c] = acc;
    }
  }
  Tape* tp = &tape_of(x);
  const std::size_t ix = x.id(), iw = weight.id(), ib = bias.id();
  return tp->record(std::move(out), {ix, iw, ib}, [tp, ix, iw, len, ch, width, segment](const NdArray& g) {
    const NdArray& xv = tp->value(ix);
    const NdArray& wv = tp->value(iw);
    NdArray gx(xv.shape(), 0.0), gw(wv.shape(), 0.0), gb(Shape{ch}, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t pos = t % segment;
      for (std::size_t c = 0; c < ch; ++c) {
        const double go = g[t * ch + c];
        gb[c] += go;
        for (std::size_t k = 0; k < width; ++k) {
          const std::size_t shift = width - 1 - k;
          if (pos < shift) continue;
          const std::size_t s = (t - shift) * ch + c;
          gx[s] += go * wv[c * width + k];
          gw[c * width + k] += go * xv[s];
        }
      }
    }
    return std::vector<NdArray>{std::move(gx), std::move(gw), std::move(gb)};
  });
}

Var permute(Var a, std::span<const std::size_t> perm) {
  NdArray out = ssmnd::permute(a.value(), perm);
  std::vector<std::size_t> inv = inverse_permutation(perm);
  return tape_of(a).record(std::move(out), {a.id()}, [inv](const NdArray& g) {
    return std::vector<NdArray>{ssmnd::permute(g, inv)};
  });
}

Var reverse_flat(Var a) {
  return tape_of(a).record(ssmnd::reverse_flat(a.value()), {a.id()}, [](const NdArray& g) {
    return std::vector<NdArray>{ssmnd::reverse_flat(g)};
  });
}

Var flip(Var a, std::size_t axis) {
  return tape_of(a).record(ssmnd::flip(a.value(), axis), {a.id()}, [axis](const NdArray& g) {
    return std::vector<NdArray>{ssmnd::flip(g, axis)};
  });
}

Var reshape(Var a, Shape shape) {
  const Shape original = a.shape();
  return tape_of(a).record(a.value().reshape(std::move(shape)), {a.id()},
                           [original](const NdArray& g) {
                             return std::vector<NdArray>{g.reshape(original)};
                           });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const NdArray& av = a.value();
  if (axis >= av.rank() || begin >= end || end > av.shape()[axis])
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " of " + shape_string(av.shape()));
  const std::size_t outer = shape_size(std::span(av.shape()).first(axis));
  const std::size_t n = av.shape()[axis];
  const std::size_t inner = shape_size(std::span(av.shape()).subspan(axis + 1));
  const std::size_t m = end - begin;
  Shape out_shape = av.shape();
  out_shape[axis] = m;
  NdArray out(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>((o * n + begin) * inner), m * inner,
                out.data().begin() + static_cast<std::ptrdiff_t>(o * m * inner));
  const Shape in_shape = av.shape();
  return tape_of(a).record(std::move(out), {a.id()},
                           [in_shape, outer, n, inner, m, begin](const NdArray& g) {
                             NdArray ga(in_shape, 0.0);
                             for (std::size_t o = 0; o < outer; ++o)
                               std::copy_n(g.data().begin() + static_cast<std::ptrdiff_t>(o * m * inner),
                                           m * inner,
                                           ga.data().begin() +
                                               static_cast<std::ptrdiff_t>((o * n + begin) * inner));
                             return std::vector<NdArray>{std::move(ga)};
                           });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero arrays");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range");
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> ids;
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) throw ShapeError("concat extent mismatch");
    sizes.push_back(s[axis]);
    ids.push_back(p.id());
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = shape_size(std::span(first).first(axis));
  const std::size_t inner = shape_size(std::span(first).subspan(axis + 1));
  const std::size_t total = out_shape[axis];
  NdArray out(out_shape);
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const NdArray& pv = parts[p].value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.data().begin() + static_cast<std::ptrdiff_t>(o * sizes[p] * inner), sizes[p] * inner,
                  out.data().begin() + static_cast<std::ptrdiff_t>((o * total + off) * inner));
    off += sizes[p];
  }
  std::vector<Shape> shapes;
  for (const Var& p : parts) shapes.push_back(p.shape());
  return parts[0].tape()->record(
      std::move(out), ids, [shapes, sizes, outer, inner, total](const NdArray& g) {
        std::vector<NdArray> r;
        std::size_t off = 0;
        for (std::size_t p = 0; p < shapes.size(); ++p) {
          NdArray gp(shapes[p]);
          for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(g.data().begin() + static_cast<std::ptrdiff_t>((o * total + off) * inner),
                        sizes[p] * inner,
                        gp.data().begin() + static_cast<std::ptrdiff_t>(o * sizes[p] * inner));
          off += sizes[p];
          r.push_back(std::move(gp));
        }
        return r;
      });
}

Var sum(Var a) {
  const Shape in_shape = a.shape();
  return tape_of(a).record(NdArray::scalar(pairwise_sum(a.value().data())), {a.id()},
                           [in_shape](const NdArray& g) {
                             return std::vector<NdArray>{NdArray(in_shape, g.item())};
                           });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var sum_axis(Var a, std::size_t axis) {
  const NdArray& av = a.value();
  if (axis >= av.rank()) throw ShapeError("sum_axis axis out of range");
  const std::size_t outer = shape_size(std::span(av.shape()).first(axis));
  const std::size_t n = av.shape()[axis];
  const std::size_t inner = shape_size(std::span(av.shape()).subspan(axis + 1));
  Shape out_shape = av.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  NdArray out(out_shape);
  std::vector<double> column(n);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      for (std::size_t k = 0; k < n; ++k) column[k] = av[(o * n + k) * inner + i];
      out[o * inner + i] = pairwise_sum(column);
    }
  const Shape in_shape = av.shape();
  return tape_of(a).record(std::move(out), {a.id()}, [in_shape, outer, n, inner](const NdArray& g) {
    NdArray ga(in_shape);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < inner; ++i) ga[(o * n + k) * inner + i] = g[o * inner + i];
    return std::vector<NdArray>{std::move(ga)};
  });
}

Var mean_axis(Var a, std::size_t axis) {
  const double n = static_cast<double>(a.value().shape().at(axis));
  return scale(sum_axis(a, axis), 1.0 / n);
}

Var embedding(Var table, std::span<const std::size_t> indices) {
  const NdArray& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("embedding table must be (V, D)");
  const std::size_t vocab = tv.shape()[0], dim = tv.shape()[1];
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  NdArray out({idx.size(), dim});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= vocab) throw IndexError("embedding index " + std::to_string(idx[r]) + " >= " +
                                          std::to_string(vocab));
    std::copy_n(tv.data().begin() + static_cast<std::ptrdiff_t>(idx[r] * dim), dim,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * dim));
  }
  const Shape t_shape = tv.shape();
  return tape_of(table).record(std::move(out), {table.id()}, [t_shape, idx, dim](const NdArray& g) {
    NdArray gt(t_shape, 0.0);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t d = 0; d < dim; ++d) gt[idx[r] * dim + d] += g[r * dim + d];
    return std::vector<NdArray>{std::move(gt)};
  });
}

Var rms_norm(Var x, Var weight, double eps) {
  same_tape(x, weight);
  const NdArray& xv = x.value();
  const NdArray& wv = weight.value();
  if (xv.rank() == 0 || wv.rank() != 1 || wv.shape()[0] != xv.shape().back())
    throw ShapeError("rms_norm: x " + shape_string(xv.shape()) + ", weight " + shape_string(wv.shape()));
  const std::size_t dim = wv.shape()[0];
  const std::size_t rows = xv.size() / dim;
  NdArray out(xv.shape());
  std::vector<double> inv_rms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t d = 0; d < dim; ++d) ss += xv[r * dim + d] * xv[r * dim + d];
    inv_rms[r] = 1.0 / std::sqrt(ss / static_cast<double>(dim) + eps);
    for (std::size_t d = 0; d < dim; ++d) out[r * dim + d] = xv[r * dim + d] * inv_rms[r] * wv[d];
  }
  Tape* t = &tape_of(x);
  const std::size_t ix = x.id(), iw = weight.id();
  return t->record(std::move(out), {ix, iw}, [t, ix, iw, inv_rms, rows, dim](const NdArray& g) {
    const NdArray& xv = t->value(ix);
    const NdArray& wv = t->value(iw);
    NdArray gx(xv.shape()), gw(wv.shape(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double ir = inv_rms[r];
      double dot = 0.0;  // sum_d g*w*xhat
      for (std::size_t d = 0; d < dim; ++d) {
        const double xh = xv[r * dim + d] * ir;
        gw[d] += g[r * dim + d] * xh;
        dot += g[r * dim + d] * wv[d] * xh;
      }
      const double m = dot / static_cast<double>(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        const double xh = xv[r * dim + d] * ir;
        gx[r * dim + d] = ir * (g[r * dim + d] * wv[d] - xh * m);
      }
    }
    return std::vector<NdArray>{std::move(gx), std::move(gw)};
  });
}

Var softmax_cross_entropy(Var logits, std::size_t label, double smoothing) {
  const NdArray& lv = logits.value();
  if (lv.rank() != 1) throw ShapeError("cross-entropy expects rank-1 logits");
  const std::size_t k = lv.size();
  if (label >= k) throw IndexError("label " + std::to_string(label) + " >= " + std::to_string(k));
  const double mx = *std::max_element(lv.data().begin(), lv.data().end());
  std::vector<double> p(k);
  double z = 0.0;
  for (std::size_t i = 0; i < k; ++i) z += (p[i] = std::exp(lv[i] - mx));
  const double log_z = std::log(z) + mx;
  std::vector<double> target(k, smoothing / static_cast<double>(k));
  target[label] += 1.0 - smoothing;
  double loss = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    p[i] /= z;
    loss -= target[i] * (lv[i] - log_z);
  }
  return tape_of(logits).record(NdArray::scalar(loss), {logits.id()}, [p, target](const NdArray& g) {
    NdArray gl(Shape{p.size()});
    for (std::size_t i = 0; i < p.size(); ++i) gl[i] = g.item() * (p[i] - target[i]);
    return std::vector<NdArray>{std::move(gl)};
  });
}

}  // namespace ops
}  // namespace ssmnd
