#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace lpdini {

/// A point in R^n for n in {1, 2}; unused coordinates are zero.
using Point = std::array<double, 2>;

inline double norm(const Point& p, int n) {
  return n == 1 ? std::abs(p[0]) : std::hypot(p[0], p[1]);
}

inline Point operator-(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Point operator+(const Point& a, const Point& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Point operator*(double s, const Point& a) { return {s * a[0], s * a[1]}; }

namespace detail {

/// Best overlap of an interval of length s containing d with [-1, 1].
inline double best_overlap(double s, double d) {
  d = std::abs(d);
  if (d <= 1.0) return std::min(s, 2.0);
  return std::clamp(s - (d - 1.0), 0.0, 2.0);
}

}  // namespace detail

/// Hardy-Littlewood maximal function of the indicator of Q(0, 1) = [-1, 1]^n,
/// evaluated at d. Exact: the sup over cubes of side s separates into two
/// one-dimensional placements, and the resulting piecewise-rational function
/// of s is maximized over its breakpoints and interior critical points.
inline double maximal_unit_cube(const Point& d, int n) {
  if (n == 1) {
    const double a = std::abs(d[0]);
    return a <= 1.0 ? 1.0 : 2.0 / (1.0 + a);
  }
  const double ax = std::abs(d[0]);
  const double ay = std::abs(d[1]);
  if (ax <= 1.0 && ay <= 1.0) return 1.0;
  std::vector<double> cands{2.0};
  std::vector<double> shifts;
  for (double a : {ax, ay}) {
    if (a > 1.0) {
      shifts.push_back(a - 1.0);
      cands.push_back(a - 1.0);
      cands.push_back(a + 1.0);
      cands.push_back(2.0 * (a - 1.0));
    }
  }
  if (shifts.size() == 2) {
    const double A = shifts[0];
    const double B = shifts[1];
    cands.push_back(2.0 * A * B / (A + B));
  }
  double best = 0.0;
  for (double s : cands) {
    if (!(s > 0.0)) continue;
    const double v = detail::best_overlap(s, ax) * detail::best_overlap(s, ay) / (s * s);
    best = std::max(best, v);
  }
  return std::min(best, 1.0);
}

/// M 1_{Q(c, r)}(x) for the closed cube of half-side r centered at c.
inline double maximal_cube_indicator(const Point& x, const Point& c, double r, int n) {
  return maximal_unit_cube((1.0 / r) * (x - c), n);
}

}  // namespace lpdini
