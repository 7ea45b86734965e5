#include "ssmnd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "ssmnd/errors.hpp"
#include "ssmnd/ops.hpp"

namespace ssmnd {

std::size_t center_token(const Shape& grid) {
  std::size_t flat = 0;
  const Shape strides = row_major_strides(grid);
  for (std::size_t i = 0; i < grid.size(); ++i) flat += (grid[i] / 2) * strides[i];
  return flat;
}

ErfMap compute_erf(const Model& model, const NdArray& input, std::optional<std::size_t> probe, std::size_t max_groups) {
  const Shape grid = model.config().token_grid();
  const std::size_t len = shape_size(grid);
  const std::size_t p = probe.value_or(center_token(grid));
  if (p >= len) throw IndexError("probe " + std::to_string(p) + " outside a grid of " + std::to_string(len) + " tokens");

  Tape tape;
  Binding bind(tape, model.params(), false);
  ForwardOptions opt;
  opt.token_grad = true;
  opt.max_groups = max_groups;
  const ForwardResult fr = model.forward(bind, input, opt);
  NdArray seed(fr.features.shape(), 0.0);
  const std::size_t d = model.config().d_model;
  for (std::size_t c = 0; c < d; ++c) seed[p * d + c] = 1.0;
  const NdArray g = tape.backward(fr.features, seed).of(fr.tokens);

  ErfMap map;
  map.grid = grid;
  map.probe = p;
  map.raw = NdArray(grid, 0.0);
  const std::size_t td = g.size() / len;
  for (std::size_t t = 0; t < len; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < td; ++k) s += std::abs(g[t * td + k]);
    map.raw[t] = s;
  }
  map.values = map.raw;
  const double peak = max_abs(map.raw);
  if (peak > 0.0)
    for (auto& v : map.values.data()) v /= peak;
  return map;
}

void write_erf_csv(const std::string& path, const ErfMap& map) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "index";
  for (std::size_t a = 0; a < map.grid.size(); ++a) out << ",i" << a;
  out << ",raw,normalized\n";
  out << std::setprecision(17);
  const Shape strides = row_major_strides(map.grid);
  for (std::size_t t = 0; t < map.raw.size(); ++t) {
    out << t;
    for (std::size_t a = 0; a < map.grid.size(); ++a) out << ',' << (t / strides[a]) % map.grid[a];
    out << ',' << map.raw[t] << ',' << map.values[t] << '\n';
  }
}

void write_erf_pgm(const std::string& path, const ErfMap& map) {
  const Shape& g = map.grid;
  std::size_t frames = 1, rows = 1, cols = g.back();
  if (g.size() >= 2) rows = g[g.size() - 2];
  if (g.size() == 3) frames = g[0];
  const std::size_t width = frames * cols;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << "P5\n" << width << ' ' << rows << "\n255\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double v = map.values[(f * rows + r) * cols + c];
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
      }
    }
  }
}

std::string to_string(Arch a) { return a == Arch::ViT ? "vit" : "mamba"; }

Arch parse_arch(const std::string& s) {
  if (s == "vit") return Arch::ViT;
  if (s == "mamba") return Arch::Mamba;
  throw Error("unknown architecture '" + s + "'");
}

double FlopModel::vit_block(double length, double d) const {
  return vit_dense * length * d * d + vit_attention * length * length * d;
}

double FlopModel::mamba_layer(double length, double d) const {
  const double e = static_cast<double>(expand), n = static_cast<double>(d_state), k = static_cast<double>(conv_width);
  const double r = dt_rank ? static_cast<double>(dt_rank) : std::ceil(d / 16.0);
  const double ed = e * d;
  return length * (3.0 * ed * d + ed * (r + 2.0 * n) + r * ed + k * ed + scan_coeff * ed * n);
}

double flops(Arch arch, double length, double d, std::size_t layers, const FlopModel& fm) {
  const double per = arch == Arch::ViT ? fm.vit_block(length, d) : fm.mamba_layer(length, d);
  return static_cast<double>(layers) * per;
}

std::vector<std::size_t> square_lengths(std::size_t k_min, std::size_t k_max) {
  std::vector<std::size_t> out;
  for (std::size_t k = k_min; k <= k_max; ++k) out.push_back(k * k);
  return out;
}

std::vector<CurvePoint> bench_curve(const std::vector<std::size_t>& lengths, std::size_t d, std::size_t vit_layers,
                                    std::size_t mamba_layers, const FlopModel& fm) {
  std::vector<CurvePoint> out;
  const double dd = static_cast<double>(d);
  for (auto l : lengths) {
    const double ld = static_cast<double>(l);
    out.push_back({l, flops(Arch::ViT, ld, dd, vit_layers, fm), flops(Arch::Mamba, ld, dd, mamba_layers, fm)});
  }
  return out;
}

std::optional<std::size_t> crossover(const std::vector<CurvePoint>& curve) {
  for (const auto& p : curve)
    if (p.mamba < p.vit) return p.length;
  return std::nullopt;
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "length,side,vit_flops,mamba_flops\n" << std::setprecision(17);
  for (const auto& p : curve) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(p.length))));
    out << p.length << ',' << (side * side == p.length ? std::to_string(side) : "") << ',' << p.vit << ',' << p.mamba
        << '\n';
  }
}

}  // namespace ssmnd
