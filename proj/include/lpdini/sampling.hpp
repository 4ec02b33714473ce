#pragma once

// Uniform lattices on [-R, R]^n, sampled functions and the cone
// discretization of the upper half-space.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "lpdini/errors.hpp"
#include "lpdini/geometry.hpp"

namespace lpdini {

/// Half-open box of lattice indices; axis 1 is [0, 1) in one dimension.
/// Indices may lie outside [0, N): the lattice extends past the box.
struct IndexBox {
  std::array<long, 2> lo{0, 0};
  std::array<long, 2> hi{0, 1};

  long extent(int axis) const { return hi[axis] - lo[axis]; }
  std::size_t size() const {
    return empty() ? 0 : static_cast<std::size_t>(extent(0)) * static_cast<std::size_t>(extent(1));
  }
  bool empty() const { return extent(0) <= 0 || extent(1) <= 0; }
  bool contains(long i, long j = 0) const {
    return i >= lo[0] && i < hi[0] && j >= lo[1] && j < hi[1];
  }
  IndexBox intersect(const IndexBox& o) const {
    IndexBox r;
    for (int a = 0; a < 2; ++a) {
      r.lo[a] = std::max(lo[a], o.lo[a]);
      r.hi[a] = std::min(hi[a], o.hi[a]);
      if (r.hi[a] < r.lo[a]) r.hi[a] = r.lo[a];
    }
    return r;
  }
  IndexBox grow(long pad, int n) const {
    IndexBox r = *this;
    for (int a = 0; a < n; ++a) {
      r.lo[a] -= pad;
      r.hi[a] += pad;
    }
    return r;
  }
  bool operator==(const IndexBox&) const = default;
};

class GridFunction {
 public:
  GridFunction() = default;

  GridFunction(int n, double R, double h) : n_(n), R_(R), h_(h) {
    if (n != 1 && n != 2) throw ShapeError("dimension must be 1 or 2");
    if (!(h > 0.0) || !(R > 0.0)) throw ShapeError("grid needs R > 0 and h > 0");
    const double cells = 2.0 * R / h;
    const double rounded = std::round(cells);
    if (std::abs(cells - rounded) > 1e-9 * cells || rounded < 1.0)
      throw ShapeError("h must divide 2R evenly");
    N_ = static_cast<long>(rounded);
    values_.assign(n == 1 ? static_cast<std::size_t>(N_)
                          : static_cast<std::size_t>(N_) * static_cast<std::size_t>(N_),
                   0.0);
  }

  int dimension() const { return n_; }
  double half_width() const { return R_; }
  double spacing() const { return h_; }
  /// Cells per axis.
  long cells() const { return N_; }
  std::size_t size() const { return values_.size(); }
  double cell_measure() const { return n_ == 1 ? h_ : h_ * h_; }

  /// Center of cell i along an axis (defined for any integer i).
  double coord(long i) const { return -R_ + (static_cast<double>(i) + 0.5) * h_; }
  Point point(long i, long j = 0) const { return {coord(i), n_ == 2 ? coord(j) : 0.0}; }
  /// Cell containing coordinate x (no range check).
  long cell_of(double x) const { return static_cast<long>(std::floor((x + R_) / h_)); }

  IndexBox box() const {
    IndexBox b;
    b.hi[0] = N_;
    if (n_ == 2) b.hi[1] = N_;
    return b;
  }

  std::size_t index(long i, long j = 0) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(N_) + static_cast<std::size_t>(i);
  }
  double& operator()(long i, long j = 0) { return values_[index(i, j)]; }
  double operator()(long i, long j = 0) const { return values_[index(i, j)]; }
  /// Zero outside the box.
  double at(long i, long j = 0) const {
    if (i < 0 || i >= N_) return 0.0;
    if (n_ == 2 && (j < 0 || j >= N_)) return 0.0;
    if (n_ == 1 && j != 0) return 0.0;
    return values_[index(i, j)];
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_grid(const GridFunction& o) const {
    return n_ == o.n_ && N_ == o.N_ && R_ == o.R_ && h_ == o.h_;
  }
  void require_same_grid(const GridFunction& o, const char* what) const {
    if (!same_grid(o)) throw ShapeError(std::string(what) + ": grid mismatch");
  }

  GridFunction zeros_like() const {
    GridFunction g = *this;
    std::fill(g.values_.begin(), g.values_.end(), 0.0);
    return g;
  }

  double l1() const {
    long double s = 0.0L;
    for (double v : values_) s += std::abs(v);
    return static_cast<double>(s) * cell_measure();
  }
  double l2() const {
    long double s = 0.0L;
    for (double v : values_) s += static_cast<long double>(v) * v;
    return std::sqrt(static_cast<double>(s) * cell_measure());
  }
  double lp(double p) const {
    long double s = 0.0L;
    for (double v : values_) s += std::pow(std::abs(v), p);
    return std::pow(static_cast<double>(s) * cell_measure(), 1.0 / p);
  }
  double linf() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }
  double integral() const {
    long double s = 0.0L;
    for (double v : values_) s += v;
    return static_cast<double>(s) * cell_measure();
  }

  /// Smallest index box containing all nonzero values (empty if f == 0).
  IndexBox support() const {
    IndexBox b;
    b.lo = {N_, n_ == 2 ? N_ : 0};
    b.hi = {0, n_ == 2 ? 0 : 1};
    bool any = false;
    for (long j = 0; j < (n_ == 2 ? N_ : 1); ++j)
      for (long i = 0; i < N_; ++i)
        if ((*this)(i, j) != 0.0) {
          any = true;
          b.lo[0] = std::min(b.lo[0], i);
          b.hi[0] = std::max(b.hi[0], i + 1);
          if (n_ == 2) {
            b.lo[1] = std::min(b.lo[1], j);
            b.hi[1] = std::max(b.hi[1], j + 1);
          }
        }
    if (!any) return IndexBox{{0, 0}, {0, n_ == 2 ? 0 : 1}};
    return b;
  }

  /// Copy restricted to an index box (zero elsewhere).
  GridFunction restricted(const IndexBox& b) const {
    GridFunction g = zeros_like();
    const IndexBox c = b.intersect(box());
    for (long j = c.lo[1]; j < c.hi[1]; ++j)
      for (long i = c.lo[0]; i < c.hi[0]; ++i) g(i, j) = (*this)(i, j);
    return g;
  }

  GridFunction& operator+=(const GridFunction& o) {
    require_same_grid(o, "add");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
    return *this;
  }
  GridFunction& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }
  friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
  friend GridFunction operator*(double s, GridFunction a) { return a *= s; }

  template <class F>
  GridFunction map(F&& fn) const {
    GridFunction g = *this;
    for (double& v : g.values_) v = fn(v);
    return g;
  }

 private:
  int n_ = 1;
  double R_ = 1.0;
  double h_ = 1.0;
  long N_ = 0;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Sampling

/// Evaluates fn at every cell center. Non-finite values are rejected.
inline GridFunction sample_function(const std::function<double(const Point&)>& fn, int n,
                                    double R, double h) {
  GridFunction g(n, R, h);
  const long N = g.cells();
  for (long j = 0; j < (n == 2 ? N : 1); ++j)
    for (long i = 0; i < N; ++i) {
      const Point p = g.point(i, j);
      const double v = fn(p);
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "non-finite sample at (" << p[0];
        if (n == 2) msg << ", " << p[1];
        msg << ")";
        throw EvaluationError(msg.str());
      }
      g(i, j) = v;
    }
  return g;
}

GridFunction read_grid_csv(const std::string& path);

namespace detail {

inline std::vector<double> parse_numbers(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw ParameterError("bad number '" + tok + "'");
    }
    if (used != tok.size()) throw ParameterError("bad number '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

inline double cube_indicator(const Point& p, int n, double a, double b) {
  for (int i = 0; i < n; ++i)
    if (p[i] < a || p[i] > b) return 0.0;
  return 1.0;
}

}  // namespace detail

/// Named functions, "id" or "id:p1,p2,...":
///   gaussian[:s]        exp(-|x|^2 / s^2), s = 1
///   indicator[:a,b]     1 on [a, b]^n, default [-1, 1]
///   const[:c]           c everywhere
///   hat[:c,r]           max(0, 1 - |x - c|/r) (c on the first axis), default 0, 1
///   bump[:c,r]          exp(1 - 1/(1 - |x - c|^2/r^2)) inside the ball, default 0, 1
///   haar[:a,l]          +1 on [a, a + l/2), -1 on [a + l/2, a + l) along axis 0, times
///                       1_{[a, a+l)} on axis 1 in 2D; default 0, 1
///   csv:path            GridFunction CSV on the same grid
inline GridFunction sample_function(const std::string& expr, int n, double R, double h) {
  const auto colon = expr.find(':');
  const std::string id = expr.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : expr.substr(colon + 1);
  if (id == "csv") {
    GridFunction g = read_grid_csv(rest);
    GridFunction ref(n, R, h);
    g.require_same_grid(ref, "csv input");
    return g;
  }
  const auto p = detail::parse_numbers(rest);
  auto arg = [&](std::size_t i, double def) { return i < p.size() ? p[i] : def; };
  std::function<double(const Point&)> fn;
  if (id == "gaussian") {
    const double s = arg(0, 1.0);
    fn = [n, s](const Point& x) {
      double r2 = x[0] * x[0] + (n == 2 ? x[1] * x[1] : 0.0);
      return std::exp(-r2 / (s * s));
    };
  } else if (id == "indicator") {
    const double a = arg(0, -1.0), b = arg(1, 1.0);
    fn = [n, a, b](const Point& x) { return detail::cube_indicator(x, n, a, b); };
  } else if (id == "const") {
    const double c = arg(0, 1.0);
    fn = [c](const Point&) { return c; };
  } else if (id == "hat") {
    const double c = arg(0, 0.0), r = arg(1, 1.0);
    fn = [n, c, r](const Point& x) {
      const double d = norm(Point{x[0] - c, x[1]}, n);
      return std::max(0.0, 1.0 - d / r);
    };
  } else if (id == "bump") {
    const double c = arg(0, 0.0), r = arg(1, 1.0);
    fn = [n, c, r](const Point& x) {
      const double d = norm(Point{x[0] - c, x[1]}, n) / r;
      if (d >= 1.0) return 0.0;
      return std::exp(1.0 - 1.0 / (1.0 - d * d));
    };
  } else if (id == "haar") {
    const double a = arg(0, 0.0), l = arg(1, 1.0);
    fn = [n, a, l](const Point& x) {
      if (n == 2 && (x[1] < a || x[1] >= a + l)) return 0.0;
      if (x[0] >= a && x[0] < a + 0.5 * l) return 1.0;
      if (x[0] >= a + 0.5 * l && x[0] < a + l) return -1.0;
      return 0.0;
    };
  } else {
    throw ConfigError("unknown function id '" + id + "'");
  }
  return sample_function(fn, n, R, h);
}

// ---------------------------------------------------------------------------
// IO. CSV rows are cell centers and value, preceded by a header line
// "# n=<n> R=<R> h=<h>". Values use 17 significant digits so that a round
// trip is exact.

inline void write_grid_csv(const GridFunction& g, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw IoError("cannot write " + path);
  std::fprintf(fp, "# n=%d R=%.17g h=%.17g\n", g.dimension(), g.half_width(), g.spacing());
  std::fprintf(fp, g.dimension() == 1 ? "x,value\n" : "x,y,value\n");
  const long N = g.cells();
  for (long j = 0; j < (g.dimension() == 2 ? N : 1); ++j)
    for (long i = 0; i < N; ++i) {
      if (g.dimension() == 1)
        std::fprintf(fp, "%.17g,%.17g\n", g.coord(i), g(i));
      else
        std::fprintf(fp, "%.17g,%.17g,%.17g\n", g.coord(i), g.coord(j), g(i, j));
    }
  if (std::fclose(fp) != 0) throw IoError("error writing " + path);
}

inline GridFunction read_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  int n = 0;
  double R = 0.0, h = 0.0;
  if (std::sscanf(line.c_str(), "# n=%d R=%lf h=%lf", &n, &R, &h) != 3)
    throw IoError(path + ": missing grid header");
  GridFunction g(n, R, h);
  std::getline(in, line);  // column names
  const long N = g.cells();
  for (long j = 0; j < (n == 2 ? N : 1); ++j)
    for (long i = 0; i < N; ++i) {
      if (!std::getline(in, line)) throw IoError(path + ": truncated");
      const auto vals = detail::parse_numbers(line);
      if (vals.size() != static_cast<std::size_t>(n + 1)) throw IoError(path + ": bad row");
      g(i, j) = vals.back();
    }
  return g;
}

/// Binary layout: int32 n, float64 R, float64 h, then the values as
/// little-endian float64 in row-major order.
inline void write_grid_binary(const GridFunction& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  const std::int32_t n = g.dimension();
  const double R = g.half_width(), h = g.spacing();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&R), sizeof R);
  out.write(reinterpret_cast<const char*>(&h), sizeof h);
  out.write(reinterpret_cast<const char*>(g.values().data()),
            static_cast<std::streamsize>(g.size() * sizeof(double)));
  if (!out) throw IoError("error writing " + path);
}

inline GridFunction read_grid_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::int32_t n = 0;
  double R = 0.0, h = 0.0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&R), sizeof R);
  in.read(reinterpret_cast<char*>(&h), sizeof h);
  if (!in) throw IoError(path + ": truncated header");
  GridFunction g(n, R, h);
  in.read(reinterpret_cast<char*>(g.values().data()),
          static_cast<std::streamsize>(g.size() * sizeof(double)));
  if (!in) throw IoError(path + ": truncated data");
  return g;
}

// ---------------------------------------------------------------------------
// Cone discretization

/// Lattice offsets m (in units of h) with |m| h < alpha t. In 1D the
/// stencil is |m_0| <= reach; in 2D row m_1 = j holds |m_0| <= row_half[j + reach].
struct ConeLevel {
  double t = 0.0;
  double weight = 0.0;  ///< ln r
  long reach = 0;
  std::vector<long> row_half;
  std::size_t count = 0;

  bool contains(long m0, long m1 = 0) const {
    if (row_half.empty()) return m1 == 0 && std::abs(m0) <= reach;
    if (std::abs(m1) > reach) return false;
    return std::abs(m0) <= row_half[static_cast<std::size_t>(m1 + reach)];
  }
};

struct ConeGrid {
  double alpha = 1.0;
  int n = 1;
  double h = 1.0;
  double t_min = 0.0;
  double t_max = 0.0;
  int q = 4;
  double ratio = 1.0;
  std::vector<ConeLevel> levels;
  std::size_t total_points = 0;

  long max_reach() const {
    long r = 0;
    for (const auto& l : levels) r = std::max(r, l.reach);
    return r;
  }
};

/// Largest m >= 0 with m h < a (strict); -1 if none.
inline long strict_reach(double a, double h) {
  if (!(a > 0.0)) return -1;
  long m = static_cast<long>(std::ceil(a / h)) - 1;
  while (static_cast<double>(m + 1) * h < a) ++m;
  while (m >= 0 && !(static_cast<double>(m) * h < a)) --m;
  return m;
}

inline ConeLevel cone_stencil(double alpha, int n, double h, double t) {
  ConeLevel lv;
  lv.t = t;
  const double a = alpha * t;
  lv.reach = strict_reach(a, h);
  if (lv.reach < 0) throw ResolutionError("empty cone stencil");
  if (n == 1) {
    lv.count = static_cast<std::size_t>(2 * lv.reach + 1);
    return lv;
  }
  lv.row_half.resize(static_cast<std::size_t>(2 * lv.reach + 1));
  for (long j = -lv.reach; j <= lv.reach; ++j) {
    // |(m, j)| h < a  <=>  m^2 h^2 < a^2 - j^2 h^2
    const double jh = static_cast<double>(j) * h;
    long m = static_cast<long>(std::floor(std::sqrt(std::max(0.0, a * a - jh * jh)) / h)) + 1;
    auto inside = [&](long mm) {
      const double mh = static_cast<double>(mm) * h;
      return mh * mh + jh * jh < a * a;
    };
    while (m >= 0 && !inside(m)) --m;
    while (inside(m + 1)) ++m;
    lv.row_half[static_cast<std::size_t>(j + lv.reach)] = m;
    if (m >= 0) lv.count += static_cast<std::size_t>(2 * m + 1);
  }
  return lv;
}

/// Levels t_k = t_min r^{k + 1/2}, k = 0..K-1, with K = round(q log2(t_max/t_min))
/// and r = (t_max/t_min)^{1/K}, so each octave holds about q levels.
inline ConeGrid build_cone(double alpha, int n, double h, double t_min, double t_max, int q,
                           double R = std::numeric_limits<double>::infinity()) {
  if (!(alpha >= 1.0)) throw ParameterError("aperture must be >= 1");
  if (n != 1 && n != 2) throw ParameterError("dimension must be 1 or 2");
  if (q < 1) throw ParameterError("q must be >= 1");
  if (!(t_min >= h * (1.0 - 1e-12))) throw ParameterError("t_min must be >= h");
  if (!(t_max > t_min)) throw ParameterError("t_max must exceed t_min");
  if (t_max > 4.0 * R * (1.0 + 1e-12)) throw ParameterError("t_max must be <= 4R");
  if (alpha * t_min < h) throw ResolutionError("alpha t_min < h: lowest cone level is unresolved");
  ConeGrid c;
  c.alpha = alpha;
  c.n = n;
  c.h = h;
  c.t_min = t_min;
  c.t_max = t_max;
  c.q = q;
  const int K = std::max(1, static_cast<int>(std::lround(q * std::log2(t_max / t_min))));
  c.ratio = std::pow(t_max / t_min, 1.0 / K);
  const double lr = std::log(c.ratio);
  for (int k = 0; k < K; ++k) {
    ConeLevel lv = cone_stencil(alpha, n, h, t_min * std::pow(c.ratio, k + 0.5));
    lv.weight = lr;
    c.total_points += lv.count;
    c.levels.push_back(std::move(lv));
  }
  return c;
}

/// Default discretization: t_min = 2h, t_max = 2R, four levels per octave.
inline ConeGrid default_cone(double alpha, int n, double h, double R) {
  return build_cone(alpha, n, h, 2.0 * h, 2.0 * R, 4, R);
}

}  // namespace lpdini
