#pragma once

// psi_t, square functions, g*_lambda, maximal operators, the Lerner-type
// operators M_S / N_S, the far-field majorant and the Marcinkiewicz function.
//
// Everything is evaluated on the cell-centered lattice of the input grid,
// extended past the box where needed: f vanishes outside [-R, R]^n but
// psi_t f does not, and the cone around a point near the edge reaches out.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lpdini/errors.hpp"
#include "lpdini/fft.hpp"
#include "lpdini/geometry.hpp"
#include "lpdini/kernels.hpp"
#include "lpdini/moduli.hpp"
#include "lpdini/parallel.hpp"
#include "lpdini/sampling.hpp"

namespace lpdini {

struct EvalOptions {
  bool oracle = false;                       ///< force direct summation everywhere
  std::size_t fast_threshold = 1u << 15;     ///< work size above which the FFT path is used
  unsigned threads = 0;                      ///< 0: LPDINI_THREADS or hardware
};

namespace detail {

inline std::size_t box_index(const IndexBox& b, long i, long j) {
  return static_cast<std::size_t>(j - b.lo[1]) * static_cast<std::size_t>(b.extent(0)) +
         static_cast<std::size_t>(i - b.lo[0]);
}

struct Entries {
  std::vector<long> i, j;
  std::vector<double> v;
  std::size_t size() const { return v.size(); }
};

inline Entries nonzeros(const GridFunction& f, const IndexBox& in) {
  Entries e;
  const IndexBox b = in.intersect(f.box());
  for (long j = b.lo[1]; j < b.hi[1]; ++j)
    for (long i = b.lo[0]; i < b.hi[0]; ++i) {
      const double v = f(i, j);
      if (v != 0.0) {
        e.i.push_back(i);
        e.j.push_back(j);
        e.v.push_back(v);
      }
    }
  return e;
}

/// Offsets d = x - y with x in `out`, y in `in`.
inline IndexBox offset_range(const IndexBox& out, const IndexBox& in, int n) {
  IndexBox d;
  d.lo[0] = out.lo[0] - (in.hi[0] - 1);
  d.hi[0] = out.hi[0] - in.lo[0];
  if (n == 2) {
    d.lo[1] = out.lo[1] - (in.hi[1] - 1);
    d.hi[1] = out.hi[1] - in.lo[1];
  }
  return d;
}

/// K[d] = phi(d h / t) over an offset box.
inline std::vector<double> profile_table(const KernelSpec& k, double t, double h,
                                         const IndexBox& d) {
  std::vector<double> tab(d.size());
  const double s = h / t;
  std::size_t idx = 0;
  for (long d1 = d.lo[1]; d1 < d.hi[1]; ++d1)
    for (long d0 = d.lo[0]; d0 < d.hi[0]; ++d0)
      tab[idx++] = k.profile({static_cast<double>(d0) * s, static_cast<double>(d1) * s});
  return tab;
}

inline std::vector<double> direct_convolution(const std::vector<double>& tab, const IndexBox& d,
                                              const Entries& e, const IndexBox& out) {
  std::vector<double> u(out.size(), 0.0);
  const long w = out.extent(0);
  const long dw = d.extent(0);
  for (std::size_t q = 0; q < e.size(); ++q) {
    const double v = e.v[q];
    for (long i1 = out.lo[1]; i1 < out.hi[1]; ++i1) {
      const double* trow = tab.data() + static_cast<std::size_t>((i1 - e.j[q] - d.lo[1]) * dw) +
                           static_cast<std::size_t>(out.lo[0] - e.i[q] - d.lo[0]);
      double* urow = u.data() + static_cast<std::size_t>((i1 - out.lo[1]) * w);
      for (long i0 = 0; i0 < w; ++i0) urow[i0] += trow[i0] * v;
    }
  }
  return u;
}

inline std::vector<double> fft_convolution(const std::vector<double>& tab, const IndexBox& d,
                                           const GridFunction& f, const IndexBox& inb,
                                           const IndexBox& out) {
  std::vector<double> a(inb.size());
  for (long j = inb.lo[1]; j < inb.hi[1]; ++j)
    for (long i = inb.lo[0]; i < inb.hi[0]; ++i) a[box_index(inb, i, j)] = f(i, j);
  const auto c = fft::convolve(a, static_cast<std::size_t>(inb.extent(1)),
                               static_cast<std::size_t>(inb.extent(0)), tab,
                               static_cast<std::size_t>(d.extent(1)),
                               static_cast<std::size_t>(d.extent(0)));
  const std::size_t cw = static_cast<std::size_t>(inb.extent(0) + d.extent(0) - 1);
  std::vector<double> u(out.size());
  for (long i1 = out.lo[1]; i1 < out.hi[1]; ++i1)
    for (long i0 = out.lo[0]; i0 < out.hi[0]; ++i0) {
      const std::size_t p0 = static_cast<std::size_t>(i0 - inb.lo[0] - d.lo[0]);
      const std::size_t p1 = static_cast<std::size_t>(i1 - inb.lo[1] - d.lo[1]);
      u[box_index(out, i0, i1)] = c[p1 * cw + p0];
    }
  return u;
}

/// Tight box around the entries (empty box if there are none).
inline IndexBox entry_box(const Entries& e, int n) {
  IndexBox b{{0, 0}, {0, n == 2 ? 0 : 1}};
  if (e.size() == 0) return b;
  b.lo = {e.i[0], n == 2 ? e.j[0] : 0};
  b.hi = {e.i[0] + 1, n == 2 ? e.j[0] + 1 : 1};
  for (std::size_t q = 0; q < e.size(); ++q) {
    b.lo[0] = std::min(b.lo[0], e.i[q]);
    b.hi[0] = std::max(b.hi[0], e.i[q] + 1);
    if (n == 2) {
      b.lo[1] = std::min(b.lo[1], e.j[q]);
      b.hi[1] = std::max(b.hi[1], e.j[q] + 1);
    }
  }
  return b;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fast-path gate

struct GateReport {
  bool passed = false;
  double worst = 0.0;             ///< max over cases of max|fast - direct| / max|direct|
  std::vector<double> errors;
  std::uint64_t seed = 0;
};

/// Compares the FFT convolution with direct summation on seeded random
/// inputs (1D and 2D, random scales and boxes).
inline GateReport run_fast_path_gate(std::uint64_t seed = 20240611, int cases = 10,
                                     double tol = 1e-8) {
  GateReport rep;
  rep.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const auto k1 = example_kernel(ExampleId::ex1, {3.0, std::nullopt, false}, 1);
  const auto k2 = example_kernel(ExampleId::ex1, {3.0, std::nullopt, false}, 2);
  rep.passed = true;
  for (int c = 0; c < cases; ++c) {
    const int n = c % 3 == 2 ? 2 : 1;
    const auto& k = n == 1 ? k1 : k2;
    const double R = 4.0;
    const double h = n == 1 ? 1.0 / 32.0 : 1.0 / 4.0;
    GridFunction f(n, R, h);
    for (double& v : f.values()) v = U(rng);
    const double t = std::exp(std::log(h) + (std::log(2.0 * R) - std::log(h)) * (0.5 + 0.5 * U(rng)));
    const long pad = static_cast<long>(8.0 * (1.5 + U(rng)));
    const IndexBox out = f.box().grow(pad, n);
    const auto e = detail::nonzeros(f, f.box());
    const IndexBox inb = detail::entry_box(e, n);
    const IndexBox d = detail::offset_range(out, inb, n);
    const auto tab = detail::profile_table(k, t, h, d);
    const auto a = detail::direct_convolution(tab, d, e, out);
    const auto b = detail::fft_convolution(tab, d, f, inb, out);
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      diff = std::max(diff, std::abs(a[i] - b[i]));
      scale = std::max(scale, std::abs(a[i]));
    }
    const double err = scale > 0.0 ? diff / scale : diff;
    rep.errors.push_back(err);
    rep.worst = std::max(rep.worst, err);
    if (!(err <= tol)) rep.passed = false;
  }
  return rep;
}

/// Result of the gate, computed once per process.
inline const GateReport& fast_path_gate() {
  static const GateReport rep = run_fast_path_gate();
  return rep;
}

// ---------------------------------------------------------------------------
// psi_t on lattice boxes

/// psi_t f (or psi_t(f1, f2)) at the lattice points of `out`, with the inputs
/// restricted to `in`. Row-major over `out`.
inline std::vector<double> psi_lattice(const KernelSpec& k, const GridFunction& f1,
                                       const GridFunction* f2, double t, const IndexBox& in,
                                       const IndexBox& out, const EvalOptions& opt = {}) {
  if (!(t > 0.0)) throw ParameterError("t must be positive");
  const int n = f1.dimension();
  if (k.n != n) throw ShapeError("kernel dimension does not match the grid");
  const double h = f1.spacing();
  const double pre = std::pow(h / t, n);
  if (!k.is_bilinear()) {
    if (f2) throw ShapeError(k.name + ": linear kernel applied to two inputs");
    const auto e = detail::nonzeros(f1, in);
    std::vector<double> u(out.size(), 0.0);
    if (e.size() == 0 || out.empty()) return u;
    if (k.kind == KernelKind::convolution) {
      const IndexBox inb = detail::entry_box(e, n);
      const IndexBox d = detail::offset_range(out, inb, n);
      const auto tab = detail::profile_table(k, t, h, d);
      const bool fast = !opt.oracle && out.size() * e.size() > opt.fast_threshold &&
                        fast_path_gate().passed;
      u = fast ? detail::fft_convolution(tab, d, f1.restricted(in), inb, out)
               : detail::direct_convolution(tab, d, e, out);
    } else {
      for (long i1 = out.lo[1]; i1 < out.hi[1]; ++i1)
        for (long i0 = out.lo[0]; i0 < out.hi[0]; ++i0) {
          const Point x = (1.0 / t) * f1.point(i0, i1);
          double s = 0.0;
          for (std::size_t q = 0; q < e.size(); ++q)
            s += k.linear(x, (1.0 / t) * f1.point(e.i[q], e.j[q])) * e.v[q];
          u[detail::box_index(out, i0, i1)] = s;
        }
    }
    for (double& v : u) v *= pre;
    return u;
  }
  if (!f2) throw ShapeError(k.name + ": bilinear kernel needs two inputs");
  f1.require_same_grid(*f2, "bilinear psi_t");
  const auto e1 = detail::nonzeros(f1, in);
  const auto e2 = detail::nonzeros(*f2, in);
  std::vector<double> u(out.size(), 0.0);
  if (e1.size() == 0 || e2.size() == 0 || out.empty()) return u;
  const double s = h / t;
  const std::size_t pair_work = e1.size() * e2.size() * out.size();
  if (n == 1 && k.bilinear_profile) {
    const IndexBox b1 = detail::entry_box(e1, 1), b2 = detail::entry_box(e2, 1);
    const long dlo = out.lo[0] - std::max(b1.hi[0], b2.hi[0]) + 1;
    const long dhi = out.hi[0] - std::min(b1.lo[0], b2.lo[0]);
    const std::size_t D = static_cast<std::size_t>(dhi - dlo);
    if (D * D < pair_work) {
      std::vector<double> T(D * D);
      for (std::size_t a = 0; a < D; ++a)
        for (std::size_t b = 0; b < D; ++b)
          T[a * D + b] = k.bilinear_profile({static_cast<double>(dlo + static_cast<long>(a)) * s, 0.0},
                                            {static_cast<double>(dlo + static_cast<long>(b)) * s, 0.0});
      for (long i = out.lo[0]; i < out.hi[0]; ++i) {
        double acc = 0.0;
        for (std::size_t p = 0; p < e1.size(); ++p) {
          const double* row = T.data() + static_cast<std::size_t>(i - e1.i[p] - dlo) * D;
          double inner = 0.0;
          for (std::size_t q = 0; q < e2.size(); ++q)
            inner += row[static_cast<std::size_t>(i - e2.i[q] - dlo)] * e2.v[q];
          acc += e1.v[p] * inner;
        }
        u[static_cast<std::size_t>(i - out.lo[0])] = acc * pre * pre;
      }
      return u;
    }
  }
  for (long i1 = out.lo[1]; i1 < out.hi[1]; ++i1)
    for (long i0 = out.lo[0]; i0 < out.hi[0]; ++i0) {
      const Point x = (1.0 / t) * f1.point(i0, i1);
      double acc = 0.0;
      for (std::size_t p = 0; p < e1.size(); ++p) {
        const Point y1 = (1.0 / t) * f1.point(e1.i[p], e1.j[p]);
        double inner = 0.0;
        for (std::size_t q = 0; q < e2.size(); ++q)
          inner += k(x, y1, (1.0 / t) * f1.point(e2.i[q], e2.j[q])) * e2.v[q];
        acc += e1.v[p] * inner;
      }
      u[detail::box_index(out, i0, i1)] = acc * pre * pre;
    }
  return u;
}

inline GridFunction psi_t_apply(const KernelSpec& k, const GridFunction& f, double t,
                                const EvalOptions& opt = {}) {
  GridFunction g = f.zeros_like();
  g.values() = psi_lattice(k, f, nullptr, t, f.box(), f.box(), opt);
  return g;
}

inline GridFunction psi_t_apply(const KernelSpec& k, const GridFunction& f1,
                                const GridFunction& f2, double t, const EvalOptions& opt = {}) {
  f1.require_same_grid(f2, "psi_t");
  GridFunction g = f1.zeros_like();
  g.values() = psi_lattice(k, f1, &f2, t, f1.box(), f1.box(), opt);
  return g;
}

// ---------------------------------------------------------------------------
// Cone sums

/// Produces psi_t-type values for cone level `level` on the lattice box `ubox`.
using LevelField = std::function<std::vector<double>(std::size_t level, const IndexBox& ubox)>;

namespace detail {

/// weight (h/t)^n sum over the level stencil of usq(x + m), for x in eval.
inline void cone_level_sum(const ConeLevel& lv, int n, double h, const std::vector<double>& usq,
                           const IndexBox& ubox, const IndexBox& eval, std::vector<double>& acc) {
  const double w = lv.weight * std::pow(h / lv.t, n);
  const long uw = ubox.extent(0);
  const long rows = ubox.extent(1);
  std::vector<long double> pref(static_cast<std::size_t>((uw + 1) * rows));
  for (long r = 0; r < rows; ++r) {
    long double s = 0.0L;
    long double* p = pref.data() + static_cast<std::size_t>(r * (uw + 1));
    p[0] = 0.0L;
    for (long c = 0; c < uw; ++c) {
      s += usq[static_cast<std::size_t>(r * uw + c)];
      p[c + 1] = s;
    }
  }
  auto range_sum = [&](long row, long c_lo, long c_hi) {  // columns [c_lo, c_hi] inclusive
    const long double* p = pref.data() + static_cast<std::size_t>(row * (uw + 1));
    return p[c_hi + 1] - p[c_lo];
  };
  for (long i1 = eval.lo[1]; i1 < eval.hi[1]; ++i1)
    for (long i0 = eval.lo[0]; i0 < eval.hi[0]; ++i0) {
      long double s = 0.0L;
      const long c = i0 - ubox.lo[0];
      if (n == 1) {
        s = range_sum(0, c - lv.reach, c + lv.reach);
      } else {
        for (long j = -lv.reach; j <= lv.reach; ++j) {
          const long half = lv.row_half[static_cast<std::size_t>(j + lv.reach)];
          if (half < 0) continue;
          s += range_sum(i1 + j - ubox.lo[1], c - half, c + half);
        }
      }
      acc[box_index(eval, i0, i1)] = static_cast<double>(s) * w;
    }
}

inline void check_cone(const ConeGrid& cone, const GridFunction& f) {
  if (cone.n != f.dimension()) throw ShapeError("cone dimension does not match the grid");
  if (std::abs(cone.h - f.spacing()) > 1e-12 * f.spacing())
    throw ShapeError("cone spacing does not match the grid");
}

}  // namespace detail

/// Squared cone integral at each point of `eval`: sum over levels of
/// ln r (h/t)^n sum_{|m| h < alpha t} |u_t(x + m h)|^2. Levels are summed in
/// order, so the result does not depend on the thread count.
inline std::vector<double> cone_square_sum(const ConeGrid& cone, double h, const IndexBox& eval,
                                           const LevelField& field, const EvalOptions& opt = {}) {
  const std::size_t L = cone.levels.size();
  std::vector<std::vector<double>> per(L);
  parallel_for(
      L,
      [&](std::size_t l) {
        const auto& lv = cone.levels[l];
        const IndexBox ubox = eval.grow(lv.reach, cone.n);
        auto u = field(l, ubox);
        for (double& v : u) v *= v;
        per[l].assign(eval.size(), 0.0);
        detail::cone_level_sum(lv, cone.n, h, u, ubox, eval, per[l]);
      },
      opt.threads);
  std::vector<double> total(eval.size(), 0.0);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += per[l][i];
  return total;
}

/// S^2 at the points of `eval` for inputs restricted to `in`.
inline std::vector<double> square_sq(const KernelSpec& k, const GridFunction& f1,
                                     const GridFunction* f2, const ConeGrid& cone,
                                     const IndexBox& in, const IndexBox& eval,
                                     const EvalOptions& opt = {}) {
  detail::check_cone(cone, f1);
  if (f2) f1.require_same_grid(*f2, "square function");
  return cone_square_sum(
      cone, f1.spacing(), eval,
      [&](std::size_t l, const IndexBox& ubox) {
        return psi_lattice(k, f1, f2, cone.levels[l].t, in, ubox, opt);
      },
      opt);
}

inline GridFunction square_function(const KernelSpec& k, const GridFunction& f,
                                    const ConeGrid& cone, const EvalOptions& opt = {}) {
  GridFunction g = f.zeros_like();
  auto s2 = square_sq(k, f, nullptr, cone, f.box(), f.box(), opt);
  for (std::size_t i = 0; i < s2.size(); ++i) g.values()[i] = std::sqrt(s2[i]);
  return g;
}

inline GridFunction square_function(const KernelSpec& k, const GridFunction& f1,
                                    const GridFunction& f2, const ConeGrid& cone,
                                    const EvalOptions& opt = {}) {
  GridFunction g = f1.zeros_like();
  auto s2 = square_sq(k, f1, &f2, cone, f1.box(), f1.box(), opt);
  for (std::size_t i = 0; i < s2.size(); ++i) g.values()[i] = std::sqrt(s2[i]);
  return g;
}

// ---------------------------------------------------------------------------
// g*_lambda

namespace detail {

inline std::vector<double> gstar_impl(const KernelSpec& k, const GridFunction& f1,
                                      const GridFunction* f2, double lambda,
                                      const ConeGrid& cone, const EvalOptions& opt) {
  const int m = k.is_bilinear() ? 2 : 1;
  if (!(lambda > 2.0 * m))
    throw ParameterError(m == 1 ? "g* needs lambda > 2" : "bilinear g* needs lambda > 4");
  check_cone(cone, f1);
  const int n = f1.dimension();
  const double h = f1.spacing();
  const IndexBox eval = f1.box();
  const std::size_t L = cone.levels.size();
  std::vector<std::vector<double>> per(L);
  parallel_for(
      L,
      [&](std::size_t l) {
        const auto& lv = cone.levels[l];
        const IndexBox ubox = eval.grow(lv.reach, n);
        auto u = psi_lattice(k, f1, f2, lv.t, f1.box(), ubox, opt);
        for (double& v : u) v *= v;
        // Weight table over the stencil box, zero outside the cone.
        IndexBox wb{{-lv.reach, n == 2 ? -lv.reach : 0}, {lv.reach + 1, n == 2 ? lv.reach + 1 : 1}};
        std::vector<double> W(wb.size(), 0.0);
        for (long j = wb.lo[1]; j < wb.hi[1]; ++j)
          for (long i = wb.lo[0]; i < wb.hi[0]; ++i)
            if (lv.contains(i, j)) {
              const double r = h * std::sqrt(static_cast<double>(i * i + j * j));
              W[box_index(wb, i, j)] = std::pow(lv.t / (lv.t + r), n * lambda);
            }
        std::vector<double> acc(eval.size(), 0.0);
        const bool fast = !opt.oracle && eval.size() * W.size() > opt.fast_threshold &&
                          fast_path_gate().passed;
        if (fast) {
          const auto c = fft::convolve(u, static_cast<std::size_t>(ubox.extent(1)),
                                       static_cast<std::size_t>(ubox.extent(0)), W,
                                       static_cast<std::size_t>(wb.extent(1)),
                                       static_cast<std::size_t>(wb.extent(0)));
          const std::size_t cw = static_cast<std::size_t>(ubox.extent(0) + wb.extent(0) - 1);
          for (long i1 = eval.lo[1]; i1 < eval.hi[1]; ++i1)
            for (long i0 = eval.lo[0]; i0 < eval.hi[0]; ++i0) {
              const std::size_t p0 = static_cast<std::size_t>(i0 - ubox.lo[0] + lv.reach);
              const std::size_t p1 =
                  static_cast<std::size_t>(n == 2 ? i1 - ubox.lo[1] + lv.reach : 0);
              acc[box_index(eval, i0, i1)] = std::max(0.0, c[p1 * cw + p0]);
            }
        } else {
          for (long i1 = eval.lo[1]; i1 < eval.hi[1]; ++i1)
            for (long i0 = eval.lo[0]; i0 < eval.hi[0]; ++i0) {
              long double s = 0.0L;
              for (long j = wb.lo[1]; j < wb.hi[1]; ++j)
                for (long i = wb.lo[0]; i < wb.hi[0]; ++i) {
                  const double wt = W[box_index(wb, i, j)];
                  if (wt != 0.0) s += wt * u[box_index(ubox, i0 + i, i1 + j)];
                }
              acc[box_index(eval, i0, i1)] = static_cast<double>(s);
            }
        }
        const double scale = lv.weight * std::pow(h / lv.t, n);
        for (double& v : acc) v *= scale;
        per[l] = std::move(acc);
      },
      opt.threads);
  std::vector<double> total(eval.size(), 0.0);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += per[l][i];
  return total;
}

}  // namespace detail

/// g*_lambda over the truncated half-space described by `halfspace`: the
/// weight (t / (t + |x - y|))^{n lambda} is applied to every stored cone point.
inline GridFunction g_star(const KernelSpec& k, const GridFunction& f, double lambda,
                           const ConeGrid& halfspace, const EvalOptions& opt = {}) {
  GridFunction g = f.zeros_like();
  auto s2 = detail::gstar_impl(k, f, nullptr, lambda, halfspace, opt);
  for (std::size_t i = 0; i < s2.size(); ++i) g.values()[i] = std::sqrt(s2[i]);
  return g;
}

inline GridFunction g_star(const KernelSpec& k, const GridFunction& f1, const GridFunction& f2,
                           double lambda, const ConeGrid& halfspace,
                           const EvalOptions& opt = {}) {
  f1.require_same_grid(f2, "g*");
  GridFunction g = f1.zeros_like();
  auto s2 = detail::gstar_impl(k, f1, &f2, lambda, halfspace, opt);
  for (std::size_t i = 0; i < s2.size(); ++i) g.values()[i] = std::sqrt(s2[i]);
  return g;
}

// ---------------------------------------------------------------------------
// Point evaluation with adaptive y-quadrature (far field)

/// S_{alpha} f(x) at a single point, including cone points far outside the
/// grid. Each level uses a midpoint rule in y with `per_unit` points per
/// unit of alpha t along each axis. Convolution kernels only.
inline double square_at_point(const KernelSpec& k, const GridFunction& f, const Point& x,
                              double alpha, double t_min, double t_max, int q = 8,
                              int per_unit = 16) {
  if (k.is_bilinear()) throw ParameterError("square_at_point: linear kernels only");
  const int n = f.dimension();
  const auto e = detail::nonzeros(f, f.box());
  if (e.size() == 0) return 0.0;
  const int K = std::max(1, static_cast<int>(std::lround(q * std::log2(t_max / t_min))));
  const double r = std::pow(t_max / t_min, 1.0 / K);
  const double h = f.spacing();
  const double hn = std::pow(h, n);
  long double total = 0.0L;
  for (int lvl = 0; lvl < K; ++lvl) {
    const double t = t_min * std::pow(r, lvl + 0.5);
    const double a = alpha * t;
    const int m = std::max(2, static_cast<int>(std::ceil(per_unit * alpha)));
    const double step = 2.0 * a / (2 * m);
    long double lvl_sum = 0.0L;
    for (int b = 0; b < (n == 2 ? 2 * m : 1); ++b)
      for (int c = 0; c < 2 * m; ++c) {
        const Point off{-a + (c + 0.5) * step, n == 2 ? -a + (b + 0.5) * step : 0.0};
        if (!(norm(off, n) < a)) continue;
        const Point y = x + off;
        double u = 0.0;
        for (std::size_t p = 0; p < e.size(); ++p)
          u += k(( 1.0 / t) * y, (1.0 / t) * f.point(e.i[p], e.j[p])) * e.v[p];
        u *= hn / std::pow(t, n);
        lvl_sum += static_cast<long double>(u) * u;
      }
    total += lvl_sum * std::pow(step, n) / std::pow(t, n) * std::log(r);
  }
  return std::sqrt(static_cast<double>(total));
}

// ---------------------------------------------------------------------------
// Maximal operators

enum class MaximalVariant { hl, dyadic, powered };

namespace detail {

/// Sliding maximum of width `w` over a[0..len): out[i] = max a[i..i+w).
inline std::vector<double> sliding_max(const std::vector<double>& a, long w) {
  const long len = static_cast<long>(a.size());
  std::vector<double> out(static_cast<std::size_t>(std::max(0L, len - w + 1)));
  std::deque<long> dq;
  for (long i = 0; i < len; ++i) {
    while (!dq.empty() && a[static_cast<std::size_t>(dq.back())] <= a[static_cast<std::size_t>(i)])
      dq.pop_back();
    dq.push_back(i);
    if (dq.front() <= i - w) dq.pop_front();
    if (i >= w - 1) out[static_cast<std::size_t>(i - w + 1)] = a[static_cast<std::size_t>(dq.front())];
  }
  return out;
}

inline GridFunction maximal_hl(const GridFunction& f) {
  const long N = f.cells();
  const int n = f.dimension();
  GridFunction M = f.zeros_like();
  if (n == 1) {
    std::vector<long double> P(static_cast<std::size_t>(N + 1), 0.0L);
    for (long i = 0; i < N; ++i) P[static_cast<std::size_t>(i + 1)] = P[static_cast<std::size_t>(i)] + std::abs(f(i));
    for (long L = 1; L <= N; ++L) {
      // windows [s, s + L) for s in [-L + 1, N - 1]
      std::vector<double> W(static_cast<std::size_t>(N + L - 1));
      for (long s = -L + 1; s <= N - 1; ++s) {
        const long a = std::max(0L, s), b = std::min(N, s + L);
        W[static_cast<std::size_t>(s + L - 1)] =
            static_cast<double>((P[static_cast<std::size_t>(b)] - P[static_cast<std::size_t>(a)]) / L);
      }
      const auto mx = sliding_max(W, L);  // mx[i] = max over windows containing cell i
      for (long i = 0; i < N; ++i) M(i) = std::max(M(i), mx[static_cast<std::size_t>(i)]);
    }
    return M;
  }
  const std::size_t S = static_cast<std::size_t>(N + 1);
  std::vector<long double> P(S * S, 0.0L);
  for (long j = 0; j < N; ++j)
    for (long i = 0; i < N; ++i)
      P[static_cast<std::size_t>(j + 1) * S + static_cast<std::size_t>(i + 1)] =
          std::abs(f(i, j)) + P[static_cast<std::size_t>(j) * S + static_cast<std::size_t>(i + 1)] +
          P[static_cast<std::size_t>(j + 1) * S + static_cast<std::size_t>(i)] -
          P[static_cast<std::size_t>(j) * S + static_cast<std::size_t>(i)];
  auto rect = [&](long a0, long b0, long a1, long b1) {
    a0 = std::max(0L, a0); a1 = std::max(0L, a1);
    b0 = std::min(N, b0); b1 = std::min(N, b1);
    if (a0 >= b0 || a1 >= b1) return 0.0L;
    auto at = [&](long i, long j) { return P[static_cast<std::size_t>(j) * S + static_cast<std::size_t>(i)]; };
    return at(b0, b1) - at(a0, b1) - at(b0, a1) + at(a0, a1);
  };
  for (long L = 1; L <= N; ++L) {
    const long cnt = N + L - 1;
    const double area = static_cast<double>(L) * static_cast<double>(L);
    // Row-wise sliding max of window averages, then column-wise.
    std::vector<std::vector<double>> rowmax(static_cast<std::size_t>(cnt));
    for (long s1 = -L + 1; s1 <= N - 1; ++s1) {
      std::vector<double> W(static_cast<std::size_t>(cnt));
      for (long s0 = -L + 1; s0 <= N - 1; ++s0)
        W[static_cast<std::size_t>(s0 + L - 1)] = static_cast<double>(rect(s0, s0 + L, s1, s1 + L)) / area;
      rowmax[static_cast<std::size_t>(s1 + L - 1)] = sliding_max(W, L);
    }
    for (long i = 0; i < N; ++i) {
      std::vector<double> col(static_cast<std::size_t>(cnt));
      for (long s1 = 0; s1 < cnt; ++s1) col[static_cast<std::size_t>(s1)] = rowmax[static_cast<std::size_t>(s1)][static_cast<std::size_t>(i)];
      const auto mx = sliding_max(col, L);
      for (long j = 0; j < N; ++j) M(i, j) = std::max(M(i, j), mx[static_cast<std::size_t>(j)]);
    }
  }
  return M;
}

inline long floor_div(long a, long b) {
  long q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

/// Dyadic cubes anchored at the origin, sides 2R (N cells) down to one cell.
inline GridFunction maximal_dyadic(const GridFunction& f) {
  const long N = f.cells();
  if (N % 2 != 0 || (N & (N - 1)) != 0)
    throw ShapeError("dyadic maximal function needs 2R/h to be a power of 2");
  const int n = f.dimension();
  GridFunction M = f.zeros_like();
  const long half = N / 2;
  for (long L = N; L >= 1; L /= 2) {
    const long lo = floor_div(-half, L), hi = floor_div(N - 1 - half, L) + 1;
    const long cubes = hi - lo;
    const double vol = std::pow(static_cast<double>(L), n);
    std::vector<long double> sums(static_cast<std::size_t>(n == 2 ? cubes * cubes : cubes), 0.0L);
    auto cube_of = [&](long i) { return floor_div(i - half, L) - lo; };
    for (long j = 0; j < (n == 2 ? N : 1); ++j)
      for (long i = 0; i < N; ++i) {
        const std::size_t c = n == 2 ? static_cast<std::size_t>(cube_of(j) * cubes + cube_of(i))
                                     : static_cast<std::size_t>(cube_of(i));
        sums[c] += std::abs(f(i, j));
      }
    for (long j = 0; j < (n == 2 ? N : 1); ++j)
      for (long i = 0; i < N; ++i) {
        const std::size_t c = n == 2 ? static_cast<std::size_t>(cube_of(j) * cubes + cube_of(i))
                                     : static_cast<std::size_t>(cube_of(i));
        M(i, j) = std::max(M(i, j), static_cast<double>(sums[c]) / vol);
      }
  }
  return M;
}

}  // namespace detail

inline GridFunction maximal(const GridFunction& f, MaximalVariant variant, double kappa = 1.0) {
  switch (variant) {
    case MaximalVariant::hl: return detail::maximal_hl(f);
    case MaximalVariant::dyadic: return detail::maximal_dyadic(f);
    case MaximalVariant::powered: {
      if (!(kappa > 0.0)) throw ParameterError("powered maximal function needs kappa > 0");
      auto M = detail::maximal_hl(f.map([kappa](double v) { return std::pow(std::abs(v), kappa); }));
      return M.map([kappa](double v) { return std::pow(v, 1.0 / kappa); });
    }
  }
  throw ParameterError("unknown maximal variant");
}

// ---------------------------------------------------------------------------
// Lerner-type maximal operators

enum class LernerVariant { M_S, N_S };

/// A cube of the pool as a box of lattice cells (may extend past the grid).
struct PoolCube {
  IndexBox cells;
  long side = 1;  ///< cells per axis
  int n = 1;
  IndexBox dilate3() const {
    IndexBox b = cells;
    for (int a = 0; a < n; ++a) {
      b.lo[a] -= side;
      b.hi[a] += side;
    }
    return b;
  }
};

/// Dyadic cubes inside the grid (sides N/2 .. 1 cells, anchored at the
/// origin) together with their concentric 3-dilates.
inline std::vector<PoolCube> default_lerner_pool(const GridFunction& f, bool with_dilates = true) {
  const long N = f.cells();
  const int n = f.dimension();
  std::vector<PoolCube> pool;
  for (long L = N / 2; L >= 1; L /= 2) {
    for (long a1 = 0; a1 < (n == 2 ? N / L : 1); ++a1)
      for (long a0 = 0; a0 < N / L; ++a0) {
        PoolCube c;
        c.side = L;
        c.n = n;
        c.cells.lo = {a0 * L, n == 2 ? a1 * L : 0};
        c.cells.hi = {a0 * L + L, n == 2 ? a1 * L + L : 1};
        pool.push_back(c);
        if (with_dilates) {
          PoolCube d;
          d.side = 3 * L;
          d.n = n;
          d.cells = c.dilate3();
          pool.push_back(d);
        }
      }
  }
  return pool;
}

/// psi_t f on a box for each cone level, computed once and sliced.
class LevelCache {
 public:
  LevelCache(const KernelSpec& k, const GridFunction& f1, const GridFunction* f2,
             const ConeGrid& cone, const EvalOptions& opt)
      : n_(f1.dimension()) {
    detail::check_cone(cone, f1);
    boxes_.resize(cone.levels.size());
    data_.resize(cone.levels.size());
    parallel_for(
        cone.levels.size(),
        [&](std::size_t l) {
          boxes_[l] = f1.box().grow(cone.levels[l].reach, n_);
          data_[l] = psi_lattice(k, f1, f2, cone.levels[l].t, f1.box(), boxes_[l], opt);
        },
        opt.threads);
  }

  std::vector<double> slice(std::size_t l, const IndexBox& b) const {
    std::vector<double> out(b.size());
    for (long j = b.lo[1]; j < b.hi[1]; ++j)
      for (long i = b.lo[0]; i < b.hi[0]; ++i)
        out[detail::box_index(b, i, j)] = data_[l][detail::box_index(boxes_[l], i, j)];
    return out;
  }

 private:
  int n_;
  std::vector<IndexBox> boxes_;
  std::vector<std::vector<double>> data_;
};

namespace detail {

/// M_S or N_S expression on the cells of `q` (intersected with the grid),
/// given the full psi_t f cache. Returns values over the clipped box.
inline std::vector<double> lerner_on_cube(const KernelSpec& k, const GridFunction& f1,
                                          const GridFunction* f2, const ConeGrid& cone,
                                          const LevelCache& full, const IndexBox& q,
                                          const IndexBox& q3, LernerVariant variant,
                                          const EvalOptions& opt) {
  const IndexBox eval = q.intersect(f1.box());
  EvalOptions inner = opt;
  inner.threads = 1;
  if (variant == LernerVariant::N_S) {
    auto s2 = cone_square_sum(
        cone, f1.spacing(), eval,
        [&](std::size_t l, const IndexBox& ub) {
          auto u = full.slice(l, ub);
          const auto v = psi_lattice(k, f1, f2, cone.levels[l].t, q3, ub, inner);
          for (std::size_t i = 0; i < u.size(); ++i) u[i] -= v[i];
          return u;
        },
        inner);
    for (double& v : s2) v = std::sqrt(std::max(0.0, v));
    return s2;
  }
  auto sf = cone_square_sum(
      cone, f1.spacing(), eval, [&](std::size_t l, const IndexBox& ub) { return full.slice(l, ub); },
      inner);
  auto sl = cone_square_sum(
      cone, f1.spacing(), eval,
      [&](std::size_t l, const IndexBox& ub) {
        return psi_lattice(k, f1, f2, cone.levels[l].t, q3, ub, inner);
      },
      inner);
  for (std::size_t i = 0; i < sf.size(); ++i) sf[i] = std::sqrt(std::abs(sf[i] - sl[i]));
  return sf;
}

inline GridFunction lerner_impl(const KernelSpec& k, const GridFunction& f1,
                                const GridFunction* f2, const ConeGrid& cone,
                                LernerVariant variant, const std::vector<PoolCube>& pool,
                                const EvalOptions& opt) {
  if (pool.empty()) throw CoverageError("empty cube pool");
  const LevelCache full(k, f1, f2, cone, opt);
  std::vector<std::vector<double>> vals(pool.size());
  parallel_for(
      pool.size(),
      [&](std::size_t c) {
        vals[c] = lerner_on_cube(k, f1, f2, cone, full, pool[c].cells, pool[c].dilate3(), variant, opt);
      },
      opt.threads);
  GridFunction out = f1.zeros_like();
  std::vector<char> covered(out.size(), 0);
  for (std::size_t c = 0; c < pool.size(); ++c) {
    const IndexBox eval = pool[c].cells.intersect(f1.box());
    for (long j = eval.lo[1]; j < eval.hi[1]; ++j)
      for (long i = eval.lo[0]; i < eval.hi[0]; ++i) {
        out(i, j) = std::max(out(i, j), vals[c][box_index(eval, i, j)]);
        covered[out.index(i, j)] = 1;
      }
  }
  std::ostringstream missing;
  std::size_t nmiss = 0;
  for (long j = 0; j < (f1.dimension() == 2 ? f1.cells() : 1); ++j)
    for (long i = 0; i < f1.cells(); ++i)
      if (!covered[out.index(i, j)]) {
        if (nmiss < 8) missing << " (" << f1.coord(i) << (f1.dimension() == 2 ? ", " + std::to_string(f1.coord(j)) : "") << ")";
        ++nmiss;
      }
  if (nmiss > 0)
    throw CoverageError(std::to_string(nmiss) + " grid points lie in no pool cube:" + missing.str());
  return out;
}

}  // namespace detail

inline GridFunction lerner_maximal(const KernelSpec& k, const GridFunction& f,
                                   const ConeGrid& cone, LernerVariant variant,
                                   const std::vector<PoolCube>& pool,
                                   const EvalOptions& opt = {}) {
  return detail::lerner_impl(k, f, nullptr, cone, variant, pool, opt);
}

inline GridFunction lerner_maximal(const KernelSpec& k, const GridFunction& f1,
                                   const GridFunction& f2, const ConeGrid& cone,
                                   LernerVariant variant, const std::vector<PoolCube>& pool,
                                   const EvalOptions& opt = {}) {
  f1.require_same_grid(f2, "lerner");
  return detail::lerner_impl(k, f1, &f2, cone, variant, pool, opt);
}

// ---------------------------------------------------------------------------
// Far-field majorant

struct MajorantTerms {
  double local = 0.0;  ///< [w] phi(2 sqrt(n) l / d) / d^n term
  double rings = 0.0;  ///< truncated ring sum plus tail bound
  double total() const { return local + rings; }
};

/// Right-hand side of the far-field bound for a mean-zero b supported in the
/// cube with center c and side l, at a point x with |x - c| > 64 n l.
inline MajorantTerms far_field_terms(const KernelSpec& k, const GridFunction& b, const Point& c,
                                     double side, const Point& x, int k_max = 64) {
  const int n = b.dimension();
  const double d = norm(x - c, n);
  if (!(d > 64.0 * n * side))
    throw GeometryError("far-field majorant needs |x - c(Q)| > 64 n l(Q)");
  const double l1 = b.l1();
  if (std::abs(b.integral()) > 1e-10 * l1) throw ParameterError("far-field majorant needs mean-zero b");
  MajorantTerms m;
  if (l1 == 0.0) return m;
  const double A = k.A;
  const double wd = dini_constant(k.w_mod).value;
  m.local = A * wd / std::pow(d, n) * k.phi_mod(2.0 * std::sqrt(static_cast<double>(n)) * side / d) * l1;
  long double s = 0.0L;
  for (int j = 1; j <= k_max; ++j) {
    const double p = std::ldexp(side, j);
    s += std::pow(2.0, -0.5 * j * n) / std::pow(p + d, n) * k.w_mod(4.0 * p / (p + d));
  }
  // Terms past k_max: (2^k l + d)^{-n} <= d^{-n}, w <= w(1).
  const double tail = k.w_mod.at_one() / std::pow(d, n) * std::pow(2.0, -0.5 * (k_max + 1) * n) /
                      (1.0 - std::pow(2.0, -0.5 * n));
  m.rings = A * (static_cast<double>(s) + tail) * l1;
  return m;
}

inline double far_field_majorant(const KernelSpec& k, const GridFunction& b, const Point& c,
                                 double side, const Point& x, int k_max = 64) {
  return far_field_terms(k, b, c, side, x, k_max).total();
}

// ---------------------------------------------------------------------------
// Generalized Marcinkiewicz function

struct WeightedCube {
  Point c{};
  double r = 1.0;  ///< half-side
  double lambda = 0.0;
};

inline void check_disjoint(const std::vector<WeightedCube>& cubes, int n) {
  for (std::size_t a = 0; a < cubes.size(); ++a) {
    if (!(cubes[a].r > 0.0)) throw ParameterError("cube half-side must be positive");
    if (!(cubes[a].lambda >= 0.0)) throw ParameterError("cube weights must be nonnegative");
    for (std::size_t b = a + 1; b < cubes.size(); ++b) {
      bool overlap = true;
      for (int i = 0; i < n; ++i)
        if (std::abs(cubes[a].c[i] - cubes[b].c[i]) >= cubes[a].r + cubes[b].r) overlap = false;
      if (overlap) {
        std::ostringstream msg;
        msg << "cubes " << a << " and " << b << " overlap";
        throw DisjointnessError(msg.str());
      }
    }
  }
}

namespace detail {

inline double marcinkiewicz_unchecked(const Modulus& w, const std::vector<WeightedCube>& cubes,
                                      const Point& x, int n) {
  double s = 0.0;
  for (const auto& q : cubes)
    s += q.lambda * maximal_cube_indicator(x, q.c, q.r, n) * w(q.r / (q.r + norm(x - q.c, n)));
  return s;
}

}  // namespace detail

inline double marcinkiewicz_fw(const Modulus& w, const std::vector<WeightedCube>& cubes,
                               const Point& x, int n) {
  check_disjoint(cubes, n);
  return detail::marcinkiewicz_unchecked(w, cubes, x, n);
}

inline GridFunction marcinkiewicz_grid(const Modulus& w, const std::vector<WeightedCube>& cubes,
                                       int n, double R, double h) {
  check_disjoint(cubes, n);
  GridFunction g(n, R, h);
  for (long j = 0; j < (n == 2 ? g.cells() : 1); ++j)
    for (long i = 0; i < g.cells(); ++i)
      g(i, j) = detail::marcinkiewicz_unchecked(w, cubes, g.point(i, j), n);
  return g;
}

}  // namespace lpdini
