#pragma once

// Dyadic cubes, Calderon-Zygmund decomposition, the adjacency-closed shifted
// families D^(k), sparse families and the stopping-time sparse construction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <limits>
#include <numbers>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "lpdini/errors.hpp"
#include "lpdini/kernels.hpp"
#include "lpdini/moduli.hpp"
#include "lpdini/operators.hpp"
#include "lpdini/sampling.hpp"

namespace lpdini {

// ---------------------------------------------------------------------------
// Cubes

/// Standard dyadic cube: side = base 2^-generation, lower corner anchor * side.
struct Cube {
  int n = 1;
  int generation = 0;
  std::array<std::int64_t, 2> anchor{0, 0};
  double base = 1.0;

  double side() const { return std::ldexp(base, -generation); }
  double lower(int axis) const { return static_cast<double>(anchor[axis]) * side(); }
  Point center() const {
    const double s = side();
    return {lower(0) + 0.5 * s, n == 2 ? lower(1) + 0.5 * s : 0.0};
  }
  double measure() const { return std::pow(side(), n); }

  Cube parent() const {
    Cube p = *this;
    --p.generation;
    for (int a = 0; a < n; ++a) p.anchor[a] = floor_half(anchor[a]);
    return p;
  }
  std::vector<Cube> children() const {
    std::vector<Cube> out;
    for (int b = 0; b < (n == 2 ? 2 : 1); ++b)
      for (int a = 0; a < 2; ++a) {
        Cube c = *this;
        ++c.generation;
        c.anchor[0] = 2 * anchor[0] + a;
        if (n == 2) c.anchor[1] = 2 * anchor[1] + b;
        out.push_back(c);
      }
    return out;
  }
  /// Ancestor (or self) at generation g <= generation.
  Cube ancestor(int g) const {
    Cube c = *this;
    while (c.generation > g) c = c.parent();
    return c;
  }
  bool contains(const Cube& o) const {
    if (o.n != n || o.base != base || o.generation < generation) return false;
    return o.ancestor(generation) == *this;
  }
  bool operator==(const Cube& o) const {
    return n == o.n && generation == o.generation && anchor == o.anchor && base == o.base;
  }
  bool operator<(const Cube& o) const {
    if (generation != o.generation) return generation < o.generation;
    return anchor < o.anchor;
  }

  /// Lattice cells of the cube on grid g (must align with the lattice).
  IndexBox cells(const GridFunction& g) const {
    const double h = g.spacing();
    const double cnt = side() / h;
    const long L = std::lround(cnt);
    if (L < 1 || std::abs(cnt - static_cast<double>(L)) > 1e-9 * cnt)
      throw ShapeError("cube side is not a multiple of the grid spacing");
    IndexBox b;
    for (int a = 0; a < n; ++a) {
      const double lo = (lower(a) + g.half_width()) / h;
      const long l = std::lround(lo);
      if (std::abs(lo - static_cast<double>(l)) > 1e-9 * std::max(1.0, std::abs(lo)))
        throw ShapeError("cube corner is not on the lattice");
      b.lo[a] = l;
      b.hi[a] = l + L;
    }
    return b;
  }
  /// Concentric 3-fold dilate on the lattice.
  IndexBox cells3(const GridFunction& g) const { return cells(g).grow(cells(g).extent(0), n); }

 private:
  static std::int64_t floor_half(std::int64_t a) { return a >= 0 ? a / 2 : -((-a + 1) / 2); }
};

inline std::string to_string(const Cube& c) {
  std::ostringstream s;
  s << "[" << c.lower(0) << ", " << c.lower(0) + c.side() << ")";
  if (c.n == 2) s << "x[" << c.lower(1) << ", " << c.lower(1) + c.side() << ")";
  return s.str();
}

/// Dyadic lattice of grid g: base side 2R anchored at the origin.
inline Cube grid_cube(const GridFunction& g, int generation, std::int64_t a0, std::int64_t a1 = 0) {
  Cube c;
  c.n = g.dimension();
  c.generation = generation;
  c.anchor = {a0, a1};
  c.base = 2.0 * g.half_width();
  return c;
}

// ---------------------------------------------------------------------------
// Calderon-Zygmund decomposition

struct BadPart {
  Cube cube;
  IndexBox cells;
  double average = 0.0;          ///< signed average of f on the cube
  double abs_average = 0.0;      ///< average of |f|
  std::vector<double> values;    ///< f - average on the cube, row-major over cells

  GridFunction expand(const GridFunction& like) const {
    GridFunction b = like.zeros_like();
    for (long j = cells.lo[1]; j < cells.hi[1]; ++j)
      for (long i = cells.lo[0]; i < cells.hi[0]; ++i) b(i, j) = values[detail::box_index(cells, i, j)];
    return b;
  }
};

struct CZDecomposition {
  double rho = 0.0;
  GridFunction good;
  std::vector<BadPart> bad;
};

namespace detail {

inline bool is_pow2(long v) { return v > 0 && (v & (v - 1)) == 0; }

/// Sums of |f| (and f) over the dyadic cubes of every generation that lie
/// inside the grid: generation g has N/2^g... cubes of L = N 2^-g cells per axis.
struct DyadicSums {
  long N = 0;
  int n = 1;
  int G = 0;  ///< generation of single cells
  std::vector<std::vector<long double>> abs_sum, sum;

  long per_axis(int g) const { return N >> g; }
  std::size_t idx(int g, long a0, long a1) const {
    return static_cast<std::size_t>(a1 * (n == 2 ? per_axis(g) : 0) + a0);
  }
};

inline DyadicSums dyadic_sums(const GridFunction& f) {
  DyadicSums d;
  d.N = f.cells();
  d.n = f.dimension();
  if (!is_pow2(d.N) || d.N < 2) throw ShapeError("dyadic work needs 2R/h to be a power of 2");
  while ((1L << d.G) < d.N) ++d.G;
  d.abs_sum.resize(static_cast<std::size_t>(d.G + 1));
  d.sum.resize(static_cast<std::size_t>(d.G + 1));
  // Generation g (1..G) has 2^g cubes per axis inside the box, each of N/2^g cells.
  auto count = [&](int g) { return static_cast<std::size_t>(d.n == 2 ? (1L << g) * (1L << g) : (1L << g)); };
  d.abs_sum[static_cast<std::size_t>(d.G)].resize(count(d.G));
  d.sum[static_cast<std::size_t>(d.G)].resize(count(d.G));
  for (long j = 0; j < (d.n == 2 ? d.N : 1); ++j)
    for (long i = 0; i < d.N; ++i) {
      const std::size_t k = static_cast<std::size_t>(j * (d.n == 2 ? d.N : 0) + i);
      d.abs_sum[static_cast<std::size_t>(d.G)][k] = std::abs(f(i, j));
      d.sum[static_cast<std::size_t>(d.G)][k] = f(i, j);
    }
  for (int g = d.G - 1; g >= 1; --g) {
    const long m = 1L << g;
    auto& A = d.abs_sum[static_cast<std::size_t>(g)];
    auto& S = d.sum[static_cast<std::size_t>(g)];
    A.assign(count(g), 0.0L);
    S.assign(count(g), 0.0L);
    const auto& Ac = d.abs_sum[static_cast<std::size_t>(g + 1)];
    const auto& Sc = d.sum[static_cast<std::size_t>(g + 1)];
    for (long a1 = 0; a1 < (d.n == 2 ? m : 1); ++a1)
      for (long a0 = 0; a0 < m; ++a0) {
        const std::size_t k = static_cast<std::size_t>(a1 * (d.n == 2 ? m : 0) + a0);
        for (long b1 = 0; b1 < (d.n == 2 ? 2 : 1); ++b1)
          for (long b0 = 0; b0 < 2; ++b0) {
            const std::size_t kc = static_cast<std::size_t>((2 * a1 + b1) * (d.n == 2 ? 2 * m : 0) + 2 * a0 + b0);
            A[k] += Ac[kc];
            S[k] += Sc[kc];
          }
      }
  }
  return d;
}

}  // namespace detail

/// Calderon-Zygmund decomposition at height rho over the dyadic lattice with
/// base side 2R anchored at the origin. Cubes of generation >= 1 (inside the
/// box) are candidates; the generation-0 cubes act as the parents of the
/// first generation and must have averages <= rho.
inline CZDecomposition cz_decompose(const GridFunction& f, double rho) {
  if (!(rho > 0.0)) throw ParameterError("CZ height must be positive");
  const int n = f.dimension();
  const auto d = detail::dyadic_sums(f);
  const long N = d.N;
  const double base_vol = std::pow(static_cast<double>(N), n);  // cells of a generation-0 cube
  // Generation-0 cubes each hold 2^{-n} of the box: one orthant.
  {
    const auto& A1 = d.abs_sum[1];
    for (std::size_t k = 0; k < A1.size(); ++k)
      if (static_cast<double>(A1[k]) / base_vol > rho) {
        std::ostringstream msg;
        msg << "height " << rho << " is below a top-level dyadic average "
            << static_cast<double>(A1[k]) / base_vol;
        throw ParameterError(msg.str());
      }
  }
  CZDecomposition cz;
  cz.rho = rho;
  cz.good = f;
  std::vector<char> taken(f.size(), 0);
  for (int g = 1; g <= d.G; ++g) {
    const long m = 1L << g;
    const long L = N >> g;
    const double vol = std::pow(static_cast<double>(L), n);
    for (long a1 = 0; a1 < (n == 2 ? m : 1); ++a1)
      for (long a0 = 0; a0 < m; ++a0) {
        const std::size_t k = static_cast<std::size_t>(a1 * (n == 2 ? m : 0) + a0);
        const double avg = static_cast<double>(d.abs_sum[static_cast<std::size_t>(g)][k]) / vol;
        if (!(avg > rho)) continue;
        if (taken[f.index(a0 * L, n == 2 ? a1 * L : 0)]) continue;
        BadPart bp;
        bp.cube = grid_cube(f, g, a0 - m / 2, n == 2 ? a1 - m / 2 : 0);
        bp.cells.lo = {a0 * L, n == 2 ? a1 * L : 0};
        bp.cells.hi = {a0 * L + L, n == 2 ? a1 * L + L : 1};
        bp.abs_average = avg;
        bp.average = static_cast<double>(d.sum[static_cast<std::size_t>(g)][k] / static_cast<long double>(vol));
        bp.values.resize(bp.cells.size());
        for (long j = bp.cells.lo[1]; j < bp.cells.hi[1]; ++j)
          for (long i = bp.cells.lo[0]; i < bp.cells.hi[0]; ++i) {
            taken[f.index(i, j)] = 1;
            bp.values[detail::box_index(bp.cells, i, j)] = f(i, j) - bp.average;
            cz.good(i, j) = bp.average;
          }
        cz.bad.push_back(std::move(bp));
      }
  }
  return cz;
}

// ---------------------------------------------------------------------------
// Shifted families D^(k)

/// Interval [start, start + 2^-generation) with start in units of 2^-unit.
struct ShiftedInterval {
  std::int64_t start = 0;
  int generation = 0;
  int unit = 0;

  double lo() const { return std::ldexp(static_cast<double>(start), -unit); }
  double length() const { return std::ldexp(1.0, -generation); }
  double hi() const { return lo() + length(); }
  std::int64_t len_units() const { return std::int64_t{1} << (unit - generation); }
  bool contains(double a, double b) const { return lo() <= a && b <= hi(); }
  bool operator<(const ShiftedInterval& o) const {
    return generation != o.generation ? generation < o.generation : start < o.start;
  }
  bool operator==(const ShiftedInterval& o) const {
    return generation == o.generation && start == o.start && unit == o.unit;
  }
};

struct ShiftedCube {
  int k[2] = {1, 1};
  int n = 1;
  std::array<ShiftedInterval, 2> sides{};
  double length() const { return sides[0].length(); }
};

class ShiftedBudgetError : public BudgetExceeded {
 public:
  ShiftedBudgetError(const std::string& what, std::vector<ShiftedInterval> partial)
      : BudgetExceeded(what, static_cast<double>(partial.size())), partial_(std::move(partial)) {}
  const std::vector<ShiftedInterval>& family() const { return partial_; }

 private:
  std::vector<ShiftedInterval> partial_;
};

/// Closure of the generators [3j + k - 1, 3j + k) under "add an adjacent
/// interval of twice or half the length touching at one endpoint",
/// restricted to generations [g_min, g_max] and to intervals whose closure
/// meets [w_lo, w_hi].
inline std::vector<ShiftedInterval> shifted_family_1d(int k, int g_min, int g_max, double w_lo,
                                                      double w_hi, std::size_t budget = 10'000'000) {
  if (k < 1 || k > 3) throw ParameterError("shift id must be 1, 2 or 3");
  if (g_min > g_max) throw ParameterError("empty generation range");
  if (g_min > 0 || g_max < 0) throw ParameterError("generation range must include 0 (the generators)");
  if (!(w_hi > w_lo)) throw ParameterError("empty window");
  const int unit = g_max;
  auto meets = [&](const ShiftedInterval& I) { return I.lo() <= w_hi && I.hi() >= w_lo; };
  std::set<ShiftedInterval> seen;
  std::queue<ShiftedInterval> work;
  auto push = [&](const ShiftedInterval& I) {
    if (I.generation < g_min || I.generation > g_max || !meets(I)) return;
    if (seen.insert(I).second) work.push(I);
  };
  const long j_lo = static_cast<long>(std::floor((w_lo - k) / 3.0)) - 1;
  const long j_hi = static_cast<long>(std::ceil((w_hi - k + 1) / 3.0)) + 1;
  for (long j = j_lo; j <= j_hi; ++j)
    push({(3 * j + k - 1) * (std::int64_t{1} << unit), 0, unit});
  std::size_t steps = 0;
  while (!work.empty()) {
    if (++steps > budget)
      throw ShiftedBudgetError("shifted family: fixpoint not reached within budget",
                               std::vector<ShiftedInterval>(seen.begin(), seen.end()));
    const ShiftedInterval I = work.front();
    work.pop();
    const std::int64_t a = I.start, len = I.len_units();
    if (I.generation - 1 >= g_min) {  // twice the length
      push({a + len, I.generation - 1, unit});
      push({a - 2 * len, I.generation - 1, unit});
    }
    if (I.generation + 1 <= g_max) {  // half the length
      push({a + len, I.generation + 1, unit});
      push({a - len / 2, I.generation + 1, unit});
    }
  }
  return {seen.begin(), seen.end()};
}

/// n-dimensional family: products of one-dimensional members of equal length.
inline std::vector<ShiftedCube> shifted_family(std::array<int, 2> k, int n, int g_min, int g_max,
                                               double w_lo, double w_hi) {
  std::vector<ShiftedCube> out;
  const auto A = shifted_family_1d(k[0], g_min, g_max, w_lo, w_hi);
  if (n == 1) {
    for (const auto& I : A) {
      ShiftedCube c;
      c.k[0] = k[0];
      c.sides[0] = I;
      out.push_back(c);
    }
    return out;
  }
  const auto B = shifted_family_1d(k[1], g_min, g_max, w_lo, w_hi);
  for (const auto& I : A)
    for (const auto& J : B)
      if (I.generation == J.generation) {
        ShiftedCube c;
        c.n = 2;
        c.k[0] = k[0];
        c.k[1] = k[1];
        c.sides = {I, J};
        out.push_back(c);
      }
  return out;
}

struct CoveringReport {
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::size_t relative_failures = 0;  ///< no member with length <= 6 l(I)
  double worst_relative = 0.0;        ///< max over I of min l(R) / l(I)
  std::vector<std::pair<double, double>> failed;
};

/// Every interval [a, b) with endpoints on the lattice of step `step`, length
/// <= max_len and inside [w_lo, w_hi] must lie in a member of length
/// <= max_member of one of the three families.
inline CoveringReport shifted_covering_check(double w_lo = -8.0, double w_hi = 8.0,
                                             double step = 0.125, double max_len = 1.0,
                                             double max_member = 6.0) {
  const int g_max = static_cast<int>(std::lround(-std::log2(step)));
  const int g_min = -static_cast<int>(std::floor(std::log2(max_member)));
  std::array<std::vector<ShiftedInterval>, 3> fam;
  for (int k = 1; k <= 3; ++k)
    fam[static_cast<std::size_t>(k - 1)] =
        shifted_family_1d(k, std::min(0, g_min), std::max(0, g_max), 2 * w_lo, 2 * w_hi);
  CoveringReport rep;
  const long cells = std::lround((w_hi - w_lo) / step);
  const long maxc = std::lround(max_len / step);
  for (long s = 0; s < cells; ++s)
    for (long L = 1; L <= maxc && s + L <= cells; ++L) {
      const double a = w_lo + static_cast<double>(s) * step;
      const double b = a + static_cast<double>(L) * step;
      ++rep.checked;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& F : fam)
        for (const auto& R : F)
          if (R.length() <= max_member && R.contains(a, b)) best = std::min(best, R.length());
      if (!std::isfinite(best)) {
        ++rep.failures;
        if (rep.failed.size() < 16) rep.failed.emplace_back(a, b);
        continue;
      }
      const double rel = best / (b - a);
      rep.worst_relative = std::max(rep.worst_relative, rel);
      if (rel > 6.0) ++rep.relative_failures;
    }
  return rep;
}

// ---------------------------------------------------------------------------
// Sparse families

struct SparseFamily {
  double eta = 0.5;
  Cube root;
  std::vector<Cube> cubes;         ///< cubes[0] == root
  std::vector<long> parent;        ///< index of the enclosing family cube, -1 for the root
  double gamma = 0.0;              ///< largest gamma used by the construction
  double threshold_constant = 0.0; ///< [w][phi] + ||S_1||
  std::string pool = "dyadic subcubes of the current cube";
};

struct SparseCheck {
  bool ok = true;
  double worst_ratio = 0.0;
  Cube worst;
  std::size_t cubes = 0;
};

/// Exact check of |union of family cubes strictly inside Q| <= (1 - eta)|Q|.
/// For dyadic cubes the union is the disjoint union of the members whose
/// nearest strict family ancestor is Q.
inline SparseCheck verify_sparse(const SparseFamily& fam, double eta) {
  if (!(eta > 0.0 && eta < 1.0)) throw ParameterError("eta must lie in (0, 1)");
  SparseCheck rep;
  std::map<Cube, double> ratio;
  for (const auto& c : fam.cubes) {
    if (!fam.root.contains(c)) throw ContainmentError("cube " + to_string(c) + " lies outside the root");
    ratio.emplace(c, 0.0);
  }
  rep.cubes = ratio.size();
  for (const auto& [c, unused] : ratio) {
    (void)unused;
    for (int g = c.generation - 1; g >= fam.root.generation; --g) {
      const Cube a = c.ancestor(g);
      auto it = ratio.find(a);
      if (it != ratio.end()) {
        it->second += std::ldexp(1.0, -c.n * (c.generation - g));
        break;
      }
    }
  }
  rep.worst = fam.root;
  for (const auto& [c, r] : ratio)
    if (r > rep.worst_ratio) {
      rep.worst_ratio = r;
      rep.worst = c;
    }
  rep.ok = rep.worst_ratio <= 1.0 - eta;
  return rep;
}

namespace detail {

inline double cube_abs_average(const GridFunction& f, const IndexBox& cells) {
  const IndexBox in = cells.intersect(f.box());
  long double s = 0.0L;
  for (long j = in.lo[1]; j < in.hi[1]; ++j)
    for (long i = in.lo[0]; i < in.hi[0]; ++i) s += std::abs(f(i, j));
  return static_cast<double>(s / static_cast<long double>(cells.size()));
}

}  // namespace detail

/// [sum_P (prod_i <f_i>_{1, dP})^2 1_P]^{1/2}; dilate is 1 or 3.
inline GridFunction sparse_rhs_eval(const SparseFamily& fam, const GridFunction& f1,
                                    const GridFunction* f2, int dilate) {
  if (dilate != 1 && dilate != 3) throw ParameterError("dilate must be 1 or 3");
  if (f2) f1.require_same_grid(*f2, "sparse rhs");
  GridFunction out = f1.zeros_like();
  std::vector<long double> acc(out.size(), 0.0L);
  for (const auto& P : fam.cubes) {
    const IndexBox c = P.cells(f1);
    const IndexBox d = dilate == 3 ? P.cells3(f1) : c;
    double v = detail::cube_abs_average(f1, d);
    if (f2) v *= detail::cube_abs_average(*f2, d);
    const IndexBox in = c.intersect(f1.box());
    for (long j = in.lo[1]; j < in.hi[1]; ++j)
      for (long i = in.lo[0]; i < in.hi[0]; ++i) acc[out.index(i, j)] += static_cast<long double>(v) * v;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) out.values()[i] = std::sqrt(static_cast<double>(acc[i]));
  return out;
}

inline GridFunction sparse_rhs_eval(const SparseFamily& fam, const GridFunction& f, int dilate) {
  return sparse_rhs_eval(fam, f, nullptr, dilate);
}

// ---------------------------------------------------------------------------
// Sparse construction

struct SparseOptions {
  std::optional<double> gamma;      ///< fixed gamma; empty selects the doubling search
  double gamma_start = 1.0;        ///< first gamma tried by the doubling search
  int max_doublings = 80;
  EvalOptions eval;
  /// ||S_1||_{L^2 -> L^2}; computed from the kernel when empty.
  std::optional<double> square_norm;
};

/// Empirical ||S_1 f||_2 / ||f||_2 maximized over seeded random inputs.
inline double empirical_square_norm(const KernelSpec& k, const GridFunction& like,
                                    const ConeGrid& cone1, int trials = 8, std::uint64_t seed = 7,
                                    const EvalOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> Z(0.0, 1.0);
  double best = 0.0;
  for (int t = 0; t < trials; ++t) {
    GridFunction f = like.zeros_like();
    for (double& v : f.values()) v = Z(rng);
    if (k.is_bilinear()) {
      GridFunction g = like.zeros_like();
      for (double& v : g.values()) v = Z(rng);
      const auto s = square_function(k, f, g, cone1, opt);
      best = std::max(best, s.l2() / (f.l2() * g.linf()));
    } else {
      const auto s = square_function(k, f, cone1, opt);
      best = std::max(best, s.l2() / f.l2());
    }
  }
  return best;
}

/// ||S_1||_{L^2 -> L^2} = (2 (2 pi) int_0^inf |F phi(s)|^2 ds / s)^{1/2} for a
/// one-dimensional convolution profile; the integral is a Riemann sum over
/// the discrete transform.
inline double square_l2_norm(const KernelSpec& k, const FourierGrid& grid = {}) {
  if (k.kind != KernelKind::convolution || k.n != 1)
    throw ParameterError("transform norm needs a one-dimensional convolution kernel");
  const std::size_t N = grid.points;
  const double dx = grid.spacing;
  std::vector<double> v(N);
  const double L = 0.5 * static_cast<double>(N) * dx;
  for (std::size_t j = 0; j < N; ++j)
    v[j] = k.profile({(static_cast<double>(j) - 0.5 * static_cast<double>(N)) * dx, 0.0});
  v[0] = 0.5 * (k.profile({-L, 0.0}) + k.profile({L, 0.0}));
  const auto F = fft::forward(v, 1, N);
  const double scale = dx / std::sqrt(2.0 * std::numbers::pi);
  const double dxi = 2.0 * std::numbers::pi / (static_cast<double>(N) * dx);
  if (std::abs(F[0]) * scale > 1e-6)
    throw ParameterError("profile has nonzero mean: S_1 is unbounded on L^2");
  long double s = 0.0L;
  for (std::size_t j = 1; j < F.size(); ++j) {
    const double a = std::abs(F[j]) * scale;
    s += static_cast<long double>(a) * a * dxi / (static_cast<double>(j) * dxi);
  }
  return std::sqrt(4.0 * std::numbers::pi * static_cast<double>(s));
}

namespace detail {

struct SparseContext {
  const KernelSpec* k;
  const GridFunction* f1;
  const GridFunction* f2;
  const ConeGrid* cone;
  const SparseOptions* opt;
  double constant;
  SparseFamily* fam;
};

/// M-tilde on the cells of P for inputs restricted to 3P.
inline std::vector<double> sparse_mtilde(const SparseContext& ctx, const Cube& P) {
  const GridFunction& f = *ctx.f1;
  const IndexBox pc = P.cells(f);
  const IndexBox p3 = P.cells3(f);
  auto s2 = square_sq(*ctx.k, f, ctx.f2, *ctx.cone, p3, pc, ctx.opt->eval);
  std::vector<double> mt(s2.size());
  for (std::size_t i = 0; i < s2.size(); ++i) mt[i] = std::sqrt(s2[i]);
  // Local M_S over dyadic subcubes R of P.
  std::vector<Cube> level{P};
  while (!level.empty()) {
    std::vector<Cube> next;
    for (const auto& R : level) {
      const IndexBox rc = R.cells(f);
      if (!(R == P)) {
        const auto r2 = square_sq(*ctx.k, f, ctx.f2, *ctx.cone, R.cells3(f), rc, ctx.opt->eval);
        for (long j = rc.lo[1]; j < rc.hi[1]; ++j)
          for (long i = rc.lo[0]; i < rc.hi[0]; ++i) {
            const std::size_t at = box_index(pc, i, j);
            const double v = std::sqrt(std::abs(s2[at] - r2[box_index(rc, i, j)]));
            mt[at] = std::max(mt[at], v);
          }
      }
      if (rc.extent(0) > 1)
        for (const auto& c : R.children()) next.push_back(c);
    }
    level = std::move(next);
  }
  return mt;
}

inline void sparse_node(const SparseContext& ctx, const Cube& P, long parent_index, double gamma) {
  const GridFunction& f = *ctx.f1;
  const int n = f.dimension();
  ctx.fam->cubes.push_back(P);
  ctx.fam->parent.push_back(parent_index);
  const long self = static_cast<long>(ctx.fam->cubes.size()) - 1;
  const IndexBox pc = P.cells(f);
  if (pc.extent(0) <= 1) return;
  double avg = cube_abs_average(f, P.cells3(f));
  if (ctx.f2) avg *= cube_abs_average(*ctx.f2, P.cells3(f));
  if (avg == 0.0) return;
  const auto mt = sparse_mtilde(ctx, P);
  const double half_measure = 0.5 * static_cast<double>(pc.size());
  const double cut = std::ldexp(1.0, -n - 1);

  auto select = [&](double g, std::vector<Cube>& parents, std::size_t& e_count) {
    const double thr = std::sqrt(g) * ctx.constant * avg;
    std::vector<char> E(pc.size(), 0);
    e_count = 0;
    for (std::size_t i = 0; i < mt.size(); ++i)
      if (mt[i] > thr) {
        E[i] = 1;
        ++e_count;
      }
    parents.clear();
    if (e_count == 0) return true;
    if (static_cast<double>(e_count) > cut * static_cast<double>(pc.size())) return false;
    // Maximal strict dyadic subcubes with |R cap E| / |R| > 2^{-n-1}.
    std::vector<Cube> stops;
    std::vector<char> taken(pc.size(), 0);
    std::vector<Cube> level = P.children();
    while (!level.empty()) {
      std::vector<Cube> next;
      for (const auto& R : level) {
        const IndexBox rc = R.cells(f);
        if (taken[box_index(pc, rc.lo[0], rc.lo[1])]) continue;
        std::size_t cnt = 0;
        for (long j = rc.lo[1]; j < rc.hi[1]; ++j)
          for (long i = rc.lo[0]; i < rc.hi[0]; ++i) cnt += static_cast<std::size_t>(E[box_index(pc, i, j)]);
        if (static_cast<double>(cnt) > cut * static_cast<double>(rc.size())) {
          stops.push_back(R);
          for (long j = rc.lo[1]; j < rc.hi[1]; ++j)
            for (long i = rc.lo[0]; i < rc.hi[0]; ++i) taken[box_index(pc, i, j)] = 1;
        } else if (cnt > 0 && rc.extent(0) > 1) {
          for (const auto& c : R.children()) next.push_back(c);
        }
      }
      level = std::move(next);
    }
    std::set<Cube> par;
    for (const auto& R : stops) par.insert(R.parent());
    for (const auto& Q : par) {
      bool maximal = true;
      for (const auto& Q2 : par)
        if (!(Q2 == Q) && Q2.contains(Q)) maximal = false;
      if (maximal) parents.push_back(Q);
    }
    double covered = 0.0;
    for (const auto& Q : parents) covered += static_cast<double>(Q.cells(f).size());
    return covered <= half_measure;
  };

  std::vector<Cube> parents;
  std::size_t e_count = 0;
  double g = gamma;
  if (ctx.opt->gamma) {
    if (!select(g, parents, e_count))
      throw ConstructionError("fixed gamma leaves too large an exceptional set in " + to_string(P),
                              static_cast<double>(e_count) / static_cast<double>(pc.size()));
  } else {
    int d = 0;
    while (!select(g, parents, e_count)) {
      if (++d > ctx.opt->max_doublings)
        throw ConstructionError("gamma search exhausted its doubling budget in " + to_string(P),
                                static_cast<double>(e_count) / static_cast<double>(pc.size()));
      g *= 2.0;
    }
  }
  ctx.fam->gamma = std::max(ctx.fam->gamma, g);
  for (const auto& Q : parents) sparse_node(ctx, Q, self, g);
}

}  // namespace detail

/// Stopping-time construction of a sparse family in the root cube Q0 for f
/// supported in 3 Q0 (or a pair f1, f2 for bilinear kernels).
inline SparseFamily sparse_construct(const KernelSpec& k, const GridFunction& f1,
                                     const GridFunction* f2, const Cube& Q0, const ConeGrid& cone,
                                     const SparseOptions& opt = {}) {
  if (k.is_bilinear() != (f2 != nullptr))
    throw ParameterError("bilinear kernels need two inputs, linear kernels one");
  const IndexBox q3 = Q0.cells3(f1);
  for (const GridFunction* g : {&f1, f2}) {
    if (!g) continue;
    if (g != &f1) f1.require_same_grid(*g, "sparse_construct");
    for (long j = 0; j < (g->dimension() == 2 ? g->cells() : 1); ++j)
      for (long i = 0; i < g->cells(); ++i)
        if ((*g)(i, j) != 0.0 && !q3.contains(i, j))
          throw ContainmentError("input is not supported in 3Q0");
  }
  if (opt.gamma && !(*opt.gamma > 0.0)) throw ParameterError("gamma must be positive");
  if (!(opt.gamma_start > 0.0)) throw ParameterError("gamma_start must be positive");
  double norm = 0.0;
  if (opt.square_norm) {
    norm = *opt.square_norm;
  } else if (k.kind == KernelKind::convolution && k.n == 1) {
    norm = square_l2_norm(k);
  } else {
    const ConeGrid c1 = build_cone(1.0, cone.n, cone.h, cone.t_min, cone.t_max, cone.q);
    norm = empirical_square_norm(k, f1, c1, 4, 7, opt.eval);
  }
  SparseFamily fam;
  fam.root = Q0;
  fam.threshold_constant =
      dini_constant(k.w_mod).value * dini_constant(k.phi_mod).value + norm;
  detail::SparseContext ctx{&k, &f1, f2, &cone, &opt, fam.threshold_constant, &fam};
  detail::sparse_node(ctx, Q0, -1, opt.gamma ? *opt.gamma : opt.gamma_start);
  return fam;
}

inline SparseFamily sparse_construct(const KernelSpec& k, const GridFunction& f, const Cube& Q0,
                                     const ConeGrid& cone, const SparseOptions& opt = {}) {
  return sparse_construct(k, f, nullptr, Q0, cone, opt);
}

}  // namespace lpdini
