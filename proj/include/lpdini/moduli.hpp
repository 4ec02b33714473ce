#pragma once

// Moduli of continuity and Dini-type quantities.
//
// A modulus is an increasing nonnegative function on (0, 1], extended by the
// constant w(1) for t > 1. Every modulus can also be evaluated in the
// logarithmic coordinate u = -log t, which is how all singular integrals
// near t = 0 are computed.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lpdini/errors.hpp"
#include "lpdini/quadrature.hpp"

namespace lpdini {

class Modulus {
 public:
  using Fn = std::function<double(double)>;

  Modulus() = default;

  /// `eval` is queried on (0, 1] only. `eval_log(u)` must equal
  /// eval(exp(-u)) for u >= 0; when absent it is derived from `eval`.
  Modulus(std::string name, Fn eval, Fn eval_log = {},
          bool declared_increasing = true)
      : name_(std::move(name)),
        eval_(std::move(eval)),
        eval_log_(std::move(eval_log)),
        declared_increasing_(declared_increasing) {}

  double operator()(double t) const {
    if (!(t > 0.0)) return 0.0;
    if (t >= 1.0) return eval_(1.0);
    return eval_(t);
  }

  /// w(exp(-u)); u <= 0 maps to w(1).
  double at_log(double u) const {
    if (u <= 0.0) return eval_(1.0);
    if (eval_log_) return eval_log_(u);
    return (*this)(std::exp(-u));
  }

  double at_one() const { return eval_(1.0); }
  const std::string& name() const { return name_; }
  bool declared_increasing() const { return declared_increasing_; }
  bool valid() const { return static_cast<bool>(eval_); }

  /// Pointwise power w^e, still a modulus for e > 0.
  Modulus pow(double e) const {
    auto self = *this;
    std::ostringstream nm;
    nm << "(" << name_ << ")^" << e;
    return Modulus(
        nm.str(), [self, e](double t) { return std::pow(self(t), e); },
        [self, e](double u) { return std::pow(self.at_log(u), e); },
        declared_increasing_);
  }

 private:
  std::string name_;
  Fn eval_;
  Fn eval_log_;
  bool declared_increasing_ = true;
};

namespace moduli {

/// min(1, t)^delta.
inline Modulus power(double delta) {
  if (!(delta > 0.0)) throw ConstraintError("power modulus requires delta > 0");
  std::ostringstream nm;
  nm << "power:" << delta;
  return Modulus(
      nm.str(), [delta](double t) { return std::pow(std::min(1.0, t), delta); },
      [delta](double u) { return std::exp(-delta * u); });
}

namespace detail {
/// log(c + e^u) for u >= 0 without overflow.
inline double log_c_plus_exp(double c, double u) {
  return u + std::log1p(c * std::exp(-u));
}
}  // namespace detail

/// log^{-kappa/2}(2 + 1/min(1, t)), the modulus attached to Examples 1 and 3.
inline Modulus log_example(double kappa) {
  if (!(kappa > 0.0)) throw ConstraintError("log modulus requires kappa > 0");
  std::ostringstream nm;
  nm << "log:" << kappa;
  const double e = -0.5 * kappa;
  return Modulus(
      nm.str(),
      [e](double t) { return std::pow(std::log(2.0 + 1.0 / std::min(1.0, t)), e); },
      [e](double u) { return std::pow(detail::log_c_plus_exp(2.0, u), e); });
}

/// log^{-s}(1 + 1/min(1, t)) for s > 0.
inline Modulus log_one_plus(double s, std::string name) {
  if (!(s > 0.0)) throw ConstraintError("log(1+1/t) modulus requires exponent > 0");
  return Modulus(
      std::move(name),
      [s](double t) { return std::pow(std::log(1.0 + 1.0 / std::min(1.0, t)), -s); },
      [s](double u) { return std::pow(detail::log_c_plus_exp(1.0, u), -s); });
}

struct ModulusPair {
  Modulus w;
  Modulus phi;
};

/// Example 2 pair: w = log^{beta-kappa}(1+1/t), phi = log^{-beta}(1+1/t).
inline ModulusPair log_split(double kappa, double beta) {
  if (!(kappa > 2.0)) throw ConstraintError("logsplit requires kappa > 2");
  if (!(beta > 1.0)) throw ConstraintError("logsplit requires beta > 1");
  if (!(kappa - beta > 1.0)) throw ConstraintError("logsplit requires kappa - beta > 1");
  std::ostringstream wn, pn;
  wn << "logsplit:" << kappa << "," << beta << ":w";
  pn << "logsplit:" << kappa << "," << beta << ":phi";
  return {log_one_plus(kappa - beta, wn.str()), log_one_plus(beta, pn.str())};
}

/// Piecewise-linear modulus through (t_i, w_i), with (0, 0) prepended.
inline Modulus table(std::vector<double> ts, std::vector<double> ws,
                     std::string name = "table") {
  if (ts.size() != ws.size() || ts.empty())
    throw ParameterError("modulus table needs matching nonempty columns");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (!(ts[i] > 0.0) || (i > 0 && !(ts[i] > ts[i - 1])))
      throw ParameterError("modulus table abscissae must be positive and increasing");
    if (!(ws[i] >= 0.0)) throw ParameterError("modulus table values must be nonnegative");
  }
  auto t_ptr = std::make_shared<const std::vector<double>>(std::move(ts));
  auto w_ptr = std::make_shared<const std::vector<double>>(std::move(ws));
  return Modulus(std::move(name), [t_ptr, w_ptr](double t) {
    const auto& T = *t_ptr;
    const auto& W = *w_ptr;
    if (t >= T.back()) return W.back();
    const auto it = std::upper_bound(T.begin(), T.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - T.begin());
    const double t0 = i == 0 ? 0.0 : T[i - 1];
    const double w0 = i == 0 ? 0.0 : W[i - 1];
    const double s = (t - t0) / (T[i] - t0);
    return w0 + s * (W[i] - w0);
  });
}

}  // namespace moduli

// ---------------------------------------------------------------------------
// Dini constant

/// Spot-checks monotonicity and nonnegativity on 256 geometric points
/// t = exp(-u), u in [0, 64].
inline void check_monotone(const Modulus& w) {
  constexpr int kSamples = 256;
  double prev = w.at_log(64.0);
  if (!(prev >= 0.0)) throw MonotonicityError(w.name() + ": negative or NaN value");
  for (int i = kSamples - 2; i >= 0; --i) {
    const double u = 64.0 * i / (kSamples - 1);
    const double v = w.at_log(u);
    if (!(v >= 0.0)) throw MonotonicityError(w.name() + ": negative or NaN value");
    if (v < prev * (1.0 - 1e-12) - 1e-300) {
      std::ostringstream msg;
      msg << w.name() << ": not increasing near t = exp(-" << u << ")";
      throw MonotonicityError(msg.str());
    }
    prev = v;
  }
}

struct DiniResult {
  double value = 0.0;     ///< integral + w(1)
  double integral = 0.0;  ///< int_0^1 w(t) dt / t
  double cutoff = 0.0;    ///< final U in the substituted integral
  bool divergent = false;
};

/// [w]_Dini = int_0^1 w(t) dt/t + w(1), by adaptive Simpson on w(exp(-u)).
inline DiniResult dini_constant(const Modulus& w, double tol = 1e-8) {
  if (!(tol > 0.0)) throw ParameterError("dini_constant: tol must be positive");
  check_monotone(w);
  auto f = [&w](double u) { return w.at_log(u); };
  const auto r = quad::integrate_half_line(f, 0.0, tol);
  DiniResult out;
  out.integral = r.value;
  out.cutoff = r.cutoff;
  out.value = r.value + w.at_one();
  if (r.divergent) {
    out.divergent = true;
    out.value = std::numeric_limits<double>::infinity();
    return out;
  }
  if (!r.tail_ok)
    throw BudgetExceeded(w.name() + ": Dini quadrature did not converge",
                         out.value);
  return out;
}

/// Truncated log-Dini integral int_{exp(-U)}^1 w(t) log(1/t) dt/t.
inline double log_dini_truncated(const Modulus& w, double cutoff,
                                 double tol = 1e-9) {
  auto f = [&w](double u) { return w.at_log(u) * u; };
  double total = quad::adaptive_simpson(f, 0.0, std::min(1.0, cutoff), tol).value;
  for (double lo = 1.0; lo < cutoff; lo *= 2.0)
    total += quad::adaptive_simpson(f, lo, std::min(2.0 * lo, cutoff), tol).value;
  return total;
}

// ---------------------------------------------------------------------------
// Auxiliary Dini inequalities

struct InequalityEntry {
  std::string item;
  double lhs = 0.0;
  double reference = 0.0;
  double ratio = 0.0;
};

struct InequalityReport {
  std::vector<InequalityEntry> entries;
  bool all_finite() const {
    return std::all_of(entries.begin(), entries.end(),
                       [](const InequalityEntry& e) { return std::isfinite(e.ratio); });
  }
  const InequalityEntry& at(const std::string& item) const {
    for (const auto& e : entries)
      if (e.item == item) return e;
    throw ParameterError("no inequality item " + item);
  }
};

struct InequalityOptions {
  double alpha = 1.0;
  int dimension = 1;
  double cube_side = 1.0;
  int ring_shift = 2;   ///< m in the ring-sum lemma
  int root_power = 2;   ///< m in item (e)
  int k_max = 64;
  double tol = 1e-9;
};

namespace detail {

inline double softplus(double s) {
  return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
}

/// Surface measure of the unit sphere in R^n for n = 1, 2.
inline double sphere_measure(int n) { return n == 1 ? 2.0 : 2.0 * std::numbers::pi; }

template <class F>
double whole_line(const F& f, double tol, const std::string& item) {
  const auto right = quad::integrate_half_line(f, 0.0, tol);
  const auto left = quad::integrate_half_line([&f](double s) { return f(-s); }, 0.0, tol);
  if (right.divergent || left.divergent || !right.tail_ok || !left.tail_ok)
    throw DivergenceError(item, "item " + item + ": integral fails the tail test");
  return right.value + left.value;
}

}  // namespace detail

/// Evaluates items (a)-(e), the ring sum and the far-ring integral, and
/// divides each by its reference size (e.g. log(2+alpha)[w]_Dini).
inline InequalityReport dini_inequality_suite(const Modulus& w,
                                              const InequalityOptions& opt = {}) {
  if (!(opt.alpha >= 1.0)) throw ParameterError("dini_inequality_suite: alpha must be >= 1");
  if (opt.dimension != 1 && opt.dimension != 2)
    throw ParameterError("dini_inequality_suite: dimension must be 1 or 2");
  const double tol = opt.tol;
  const auto dini = dini_constant(w, tol);
  if (dini.divergent) throw DivergenceError("dini", w.name() + ": Dini integral diverges");
  const double D = dini.value;
  const int n = opt.dimension;
  const double a = opt.alpha;
  const double log_a = std::log(2.0 + a);
  const double ln2 = std::numbers::ln2;
  InequalityReport rep;
  auto add = [&rep](std::string item, double lhs, double ref) {
    rep.entries.push_back({std::move(item), lhs, ref, lhs / ref});
  };

  // (a) with t = e^s.
  {
    auto f = [&](double s) {
      const double u = -std::log(4.0) - s + detail::softplus(s);
      const double v = std::exp(-n * detail::softplus(s)) * w.at_log(u);
      return v * v;
    };
    add("a", std::sqrt(detail::whole_line(f, tol, "a")), D);
  }
  // (b)
  {
    auto f = [&](double s) {
      const double v = std::exp(-n * detail::softplus(s)) * w.at_log(-std::log1p(a) - s);
      return v * v;
    };
    add("b", detail::whole_line(f, tol, "b"), log_a * D * D);
  }
  // (c) partial sum plus integral-test tail.
  {
    auto term = [&](double k) { return w.at_log((k + 1.0) * ln2 - std::log1p(a)); };
    double partial = 0.0;
    for (int k = 1; k <= opt.k_max; ++k) partial += term(k);
    const auto tail = quad::integrate_half_line(term, static_cast<double>(opt.k_max), tol);
    if (tail.divergent || !tail.tail_ok)
      throw DivergenceError("c", "item c: truncated sum fails the tail bound");
    add("c", partial + tail.value, log_a * D);
  }
  // (d) int_0^alpha w dt/t, w constant past 1.
  add("d", dini.integral + w.at_one() * std::log(a), log_a * D);
  // (e)
  {
    const int m = opt.root_power;
    const auto root = dini_constant(w.pow(1.0 / m), tol);
    add("e", D, std::pow(root.value, m));
  }
  // Ring sum: each k-term is scale free after r = 2^k l e^s.
  {
    const double sigma = detail::sphere_measure(n);
    const double shift = std::ldexp(1.0, opt.ring_shift);
    auto f = [&](double s) {
      const double u = detail::softplus(s) - std::log(shift);
      return sigma * std::exp(n * (s - detail::softplus(s))) * w.at_log(u);
    };
    const double ring = detail::whole_line(f, tol, "ring");
    const double q = std::exp2(-0.5 * n);
    double partial = 0.0;
    for (int k = 1; k <= opt.k_max; ++k) partial += std::pow(q, k) * ring;
    const double tail = ring * std::pow(q, opt.k_max + 1) / (1.0 - q);
    add("ring", partial + tail, D);
  }
  // Far ring: sigma_n int_{u0}^inf w(e^-u) du with u0 = log(16 sqrt n).
  {
    const double sigma = detail::sphere_measure(n);
    const double u0 = std::log(16.0 * std::sqrt(static_cast<double>(n)));
    const auto r = quad::integrate_half_line([&](double u) { return w.at_log(u); }, u0, tol);
    if (r.divergent || !r.tail_ok) throw DivergenceError("far", "far-ring integral diverges");
    add("far", sigma * r.value, D);
  }
  return rep;
}

}  // namespace lpdini
