#pragma once

// Adaptive Simpson quadrature plus a half-line integrator built on panel
// doubling. The half-line integrator is what turns the Dini integral
// (after t = exp(-u)) into a finite computation.

#include <cmath>
#include <cstddef>
#include <vector>

namespace lpdini::quad {

struct SimpsonResult {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;
  std::size_t evaluations = 0;
};

namespace detail {

template <class F>
double simpson_recurse(const F& f, double a, double b, double fa, double fm,
                       double fb, double whole, double tol, int depth,
                       SimpsonResult& out) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  out.evaluations += 2;
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0) {
    out.converged = false;
    out.error += std::abs(delta) / 15.0;
    return left + right + delta / 15.0;
  }
  if (std::abs(delta) <= 15.0 * tol) {
    out.error += std::abs(delta) / 15.0;
    return left + right + delta / 15.0;
  }
  return simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1,
                         out) +
         simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1,
                         out);
}

}  // namespace detail

/// Adaptive Simpson on [a, b] with absolute tolerance `tol`.
///
/// The interval is pre-split into `initial_panels` pieces so that narrow
/// features are not missed by the first five samples.
template <class F>
SimpsonResult adaptive_simpson(const F& f, double a, double b, double tol,
                               int max_depth = 48, int initial_panels = 8) {
  SimpsonResult out;
  if (!(b > a)) return out;
  const double width = (b - a) / initial_panels;
  const double panel_tol = tol / initial_panels;
  for (int i = 0; i < initial_panels; ++i) {
    const double lo = a + i * width;
    const double hi = (i + 1 == initial_panels) ? b : lo + width;
    const double fa = f(lo);
    const double fb = f(hi);
    const double fm = f(0.5 * (lo + hi));
    out.evaluations += 3;
    const double whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    out.value += detail::simpson_recurse(f, lo, hi, fa, fm, fb, whole,
                                         panel_tol, max_depth, out);
  }
  return out;
}

/// Outcome of integrating a nonnegative function over [a, infinity).
struct HalfLineResult {
  double value = 0.0;       ///< integral, including any extrapolated tail
  double cutoff = 0.0;      ///< final panel end, relative to a
  double tail = 0.0;        ///< extrapolated power-law tail (0 if none)
  double exponent = 0.0;    ///< last local decay exponent log2(f(U) / f(2U))
  int doublings = 0;
  bool tail_ok = false;     ///< tail negligible or extrapolated
  bool divergent = false;
  std::vector<double> history;  ///< truncated value after each doubling
};

/// Integrates a nonnegative, eventually decreasing `f` over [a, infinity).
///
/// Panels are [a, a+1], then [a+U, a+2U] for U = 1, 2, 4, ... . After each
/// panel:
///  - if f(a+U) U < tol / 10 the tail is negligible;
///  - once U >= 64, the local exponent p = log2(f(a+U) / f(a+2U)) is
///    tracked; when two consecutive values agree to 1e-6 relative, p > 1
///    adds the power-law tail f(a+2U) 2U / (p - 1) and stops, while p <= 1
///    marks the integral divergent.
/// If the budget runs out, two final growth factors > 1.5 also mean
/// divergence; otherwise the result is unresolved (`tail_ok == false`).
template <class F>
HalfLineResult integrate_half_line(const F& f, double a, double tol,
                                   int max_doublings = 64) {
  HalfLineResult out;
  const double panel_tol = tol / 256.0;
  out.value = adaptive_simpson(f, a, a + 1.0, panel_tol).value;
  out.history.push_back(out.value);
  double span = 1.0;
  double prev_p = std::nan("");
  while (out.doublings < max_doublings) {
    const double fu = std::abs(f(a + span));
    if (fu * span < tol / 10.0) {
      out.tail_ok = true;
      break;
    }
    out.value += adaptive_simpson(f, a + span, a + 2.0 * span, panel_tol).value;
    const double f2u = std::abs(f(a + 2.0 * span));
    span *= 2.0;
    ++out.doublings;
    out.history.push_back(out.value);
    if (span >= 128.0 && fu > 0.0 && f2u > 0.0) {
      const double p = std::log2(fu / f2u);
      out.exponent = p;
      if (std::abs(p - prev_p) <= 1e-6 * std::abs(p)) {
        if (p > 1.0 + 1e-6) {
          out.tail = f2u * span / (p - 1.0);
          out.value += out.tail;
          out.tail_ok = true;
        } else {
          out.divergent = true;
        }
        break;
      }
      prev_p = p;
    }
  }
  out.cutoff = span;
  if (!out.tail_ok && !out.divergent) {
    const std::size_t k = out.history.size();
    if (k >= 3) {
      const double g1 = out.history[k - 1] / out.history[k - 2];
      const double g2 = out.history[k - 2] / out.history[k - 3];
      out.divergent = g1 > 1.5 && g2 > 1.5;
    }
  }
  return out;
}

}  // namespace lpdini::quad
