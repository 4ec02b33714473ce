#pragma once

// Kernel specifications, the example kernels and their numerical checks:
// size / smoothness ratios against the Dini envelopes and the Fourier decay
// profile of convolution profiles.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lpdini/errors.hpp"
#include "lpdini/fft.hpp"
#include "lpdini/geometry.hpp"
#include "lpdini/moduli.hpp"

namespace lpdini {

enum class KernelKind { convolution, linear, bilinear };

struct KernelSpec {
  using Profile = std::function<double(const Point&)>;
  using Linear = std::function<double(const Point&, const Point&)>;
  using Bilinear = std::function<double(const Point&, const Point&, const Point&)>;

  KernelKind kind = KernelKind::convolution;
  int n = 1;
  double A = 1.0;
  Modulus w_mod;
  Modulus phi_mod;
  std::string name;
  std::map<std::string, double> params;

  Profile profile;            ///< convolution: psi(x, y) = profile(x - y)
  Linear linear;              ///< general two-point kernel
  Bilinear bilinear;          ///< psi(x, y1, y2)
  Linear bilinear_profile;    ///< optional: psi(x, y1, y2) = P(x - y1, x - y2)

  bool is_bilinear() const { return kind == KernelKind::bilinear; }

  double operator()(const Point& x, const Point& y) const {
    switch (kind) {
      case KernelKind::convolution: return profile(x - y);
      case KernelKind::linear: return linear(x, y);
      default: throw ParameterError(name + ": two-point evaluation of a bilinear kernel");
    }
  }

  double operator()(const Point& x, const Point& y1, const Point& y2) const {
    if (kind != KernelKind::bilinear)
      throw ParameterError(name + ": three-point evaluation of a linear kernel");
    if (bilinear_profile) return bilinear_profile(x - y1, x - y2);
    return bilinear(x, y1, y2);
  }

  double param(const std::string& key) const {
    const auto it = params.find(key);
    if (it == params.end()) throw ParameterError(name + ": missing parameter " + key);
    return it->second;
  }
};

inline KernelSpec convolution_kernel(std::string name, int n, KernelSpec::Profile profile,
                                     Modulus w, Modulus phi, double A = 1.0) {
  KernelSpec k;
  k.kind = KernelKind::convolution;
  k.n = n;
  k.A = A;
  k.name = std::move(name);
  k.profile = std::move(profile);
  k.w_mod = std::move(w);
  k.phi_mod = std::move(phi);
  return k;
}

inline KernelSpec linear_kernel(std::string name, int n, KernelSpec::Linear psi, Modulus w,
                                Modulus phi, double A = 1.0) {
  KernelSpec k;
  k.kind = KernelKind::linear;
  k.n = n;
  k.A = A;
  k.name = std::move(name);
  k.linear = std::move(psi);
  k.w_mod = std::move(w);
  k.phi_mod = std::move(phi);
  return k;
}

enum class ExampleId { ex1, ex2, ex3, bex1 };

struct ExampleParams {
  double kappa = 3.0;
  std::optional<double> beta;
  /// Profile-only use (Fourier profiling) only needs integrability, kappa > 1.
  bool profile_only = false;
};

namespace detail {

inline double sq_norm(const Point& p, int n) {
  return n == 1 ? p[0] * p[0] : p[0] * p[0] + p[1] * p[1];
}

inline void check_dimension(int n) {
  if (n != 1 && n != 2) throw ParameterError("dimension must be 1 or 2");
}

}  // namespace detail

/// sin x_1 / ((1 + |x|^2)^{n/2} log^kappa(2 + |x|^2)).
inline KernelSpec::Profile example1_profile(double kappa, int n) {
  return [kappa, n](const Point& x) {
    const double r2 = detail::sq_norm(x, n);
    return std::sin(x[0]) /
           (std::pow(1.0 + r2, 0.5 * n) * std::pow(std::log(2.0 + r2), kappa));
  };
}

/// d/dx_1 [(1 + |x|^2)^{-(n-1)/2} log^{-kappa}(2 + |x|^2)].
inline KernelSpec::Profile example3_profile(double kappa, int n) {
  return [kappa, n](const Point& x) {
    const double r2 = detail::sq_norm(x, n);
    const double a = 0.5 * (n - 1);
    const double L = std::log(2.0 + r2);
    const double base = std::pow(1.0 + r2, -a);
    const double dg = -a * base / (1.0 + r2) * std::pow(L, -kappa) -
                      kappa * base * std::pow(L, -kappa - 1.0) / (2.0 + r2);
    return 2.0 * x[0] * dg;
  };
}

/// Builds Examples 1-3, and a bilinear analogue of Example 1
/// P(a, b) = sin(a_1 + b_1) / ((1 + |a|^2 + |b|^2)^n log^kappa(2 + |a|^2 + |b|^2)).
inline KernelSpec example_kernel(ExampleId id, const ExampleParams& p, int n) {
  detail::check_dimension(n);
  const double kappa = p.kappa;
  std::ostringstream nm;
  switch (id) {
    case ExampleId::ex1:
    case ExampleId::ex3:
    case ExampleId::bex1: {
      if (p.profile_only) {
        if (!(kappa > 1.0)) throw ConstraintError("profile requires kappa > 1");
      } else if (!(kappa > 2.0)) {
        throw ConstraintError("example kernel requires kappa > 2");
      }
      const Modulus m = moduli::log_example(kappa);
      if (id == ExampleId::ex1) {
        nm << "ex1:kappa=" << kappa;
        auto k = convolution_kernel(nm.str(), n, example1_profile(kappa, n), m, m);
        k.params["kappa"] = kappa;
        return k;
      }
      if (id == ExampleId::ex3) {
        nm << "ex3:kappa=" << kappa;
        auto k = convolution_kernel(nm.str(), n, example3_profile(kappa, n), m, m);
        k.params["kappa"] = kappa;
        return k;
      }
      nm << "bex1:kappa=" << kappa;
      KernelSpec k;
      k.kind = KernelKind::bilinear;
      k.n = n;
      k.name = nm.str();
      k.w_mod = m;
      k.phi_mod = m;
      k.params["kappa"] = kappa;
      k.bilinear_profile = [kappa, n](const Point& a, const Point& b) {
        const double r2 = detail::sq_norm(a, n) + detail::sq_norm(b, n);
        return std::sin(a[0] + b[0]) /
               (std::pow(1.0 + r2, static_cast<double>(n)) * std::pow(std::log(2.0 + r2), kappa));
      };
      return k;
    }
    case ExampleId::ex2: {
      if (!p.beta) throw ConstraintError("ex2 requires beta");
      const double beta = *p.beta;
      if (!(kappa > 2.0)) throw ConstraintError("ex2 requires kappa > 2");
      if (!(beta > 1.0)) throw ConstraintError("ex2 requires beta > 1");
      if (!(kappa - beta > 1.0)) throw ConstraintError("ex2 requires kappa - beta > 1");
      auto pair = moduli::log_split(kappa, beta);
      nm << "ex2:kappa=" << kappa << ",beta=" << beta;
      auto k = convolution_kernel(nm.str(), n, example1_profile(kappa, n), pair.w, pair.phi);
      k.params["kappa"] = kappa;
      k.params["beta"] = beta;
      return k;
    }
  }
  throw ParameterError("unknown example kernel");
}

/// Profile 1_{[-1,1]}(x) / 2 (per axis product in 2D).
inline KernelSpec box_kernel(int n, Modulus w, Modulus phi) {
  return convolution_kernel(
      "box", n,
      [n](const Point& x) {
        double v = 1.0;
        for (int i = 0; i < n; ++i) v *= std::abs(x[i]) <= 1.0 ? 0.5 : 0.0;
        return v;
      },
      std::move(w), std::move(phi));
}

/// Convolution profile from (x, value) samples, linearly interpolated and
/// zero outside the sampled range. One-dimensional only.
inline KernelSpec table_kernel(std::vector<double> xs, std::vector<double> vs, Modulus w,
                               Modulus phi, std::string name = "table") {
  if (xs.size() != vs.size() || xs.size() < 2)
    throw ParameterError("profile table needs at least two matching rows");
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (!(xs[i] > xs[i - 1])) throw ParameterError("profile table abscissae must increase");
  auto xp = std::make_shared<const std::vector<double>>(std::move(xs));
  auto vp = std::make_shared<const std::vector<double>>(std::move(vs));
  return convolution_kernel(
      std::move(name), 1,
      [xp, vp](const Point& p) {
        const auto& X = *xp;
        const auto& V = *vp;
        const double x = p[0];
        if (x < X.front() || x > X.back()) return 0.0;
        auto it = std::upper_bound(X.begin(), X.end(), x);
        if (it == X.end()) return V.back();
        const std::size_t i = static_cast<std::size_t>(it - X.begin());
        const double s = (x - X[i - 1]) / (X[i] - X[i - 1]);
        return V[i - 1] + s * (V[i] - V[i - 1]);
      },
      std::move(w), std::move(phi));
}

// ---------------------------------------------------------------------------
// Condition checks

enum class ConditionMode { size, smooth_x, smooth_y, log_ratio };

/// One sampled configuration. For bilinear kernels y2 is the second slot;
/// `slot` selects which y is perturbed in smooth_y mode.
struct ConditionSample {
  Point x{};
  Point y{};
  Point y2{};
  Point h{};
  int slot = 0;
};

struct SamplePlan {
  double r_min = 1e-3;
  double r_max = 1e3;
  int radial = 64;            ///< log-spaced |x - y| values
  int increments = 12;        ///< log-spaced |h| values per (x, y)
  int base_points = 3;        ///< translations of x
  int directions = 4;         ///< angular samples in 2D
  int random_samples = 10000; ///< log_ratio mode
  double extension = 10.0;    ///< factor for the domain-extension rerun
  double growth_limit = 1.2;
  double threshold = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 1;
  std::vector<ConditionSample> explicit_samples;
};

struct ConditionReport {
  double max_ratio = 0.0;
  std::vector<Point> argmax;
  std::size_t samples_checked = 0;
  std::size_t infinite_ratios = 0;
  double extended_max_ratio = 0.0;
  double growth = 1.0;
  bool flagged = false;
  std::optional<double> transform_at_zero;
  double refined_max_ratio = 0.0;
};

namespace detail {

inline double log_ratio_quotient(const Point& x, const Point& h, int n, double gamma) {
  const double ax = norm(x, n);
  const double ah = norm(h, n);
  return std::min(1.0, std::pow(ah, gamma)) / std::log(2.0 + ax) *
         std::log(2.0 + (1.0 + ax) / ah);
}

struct Ratio {
  double num = 0.0;
  double den = 0.0;
};

}  // namespace detail

/// Numerator and right-hand side (with A = 1) of one condition at a sample.
/// Throws GeometryError when the sample violates the mode's admissibility.
inline detail::Ratio condition_terms(const KernelSpec& k, ConditionMode mode,
                                     const ConditionSample& s, double gamma = 0.5) {
  const int n = k.n;
  if (mode == ConditionMode::log_ratio) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ParameterError("log_ratio needs 0 < gamma <= 1");
    const double ah = norm(s.h, n);
    if (!(ah > 0.0) || ah > 0.5 * norm(s.x, n))
      throw GeometryError("log_ratio sample needs 0 < |h| <= |x|/2");
    return {detail::log_ratio_quotient(s.x, s.h, n, gamma), 1.0};
  }
  if (k.is_bilinear()) {
    const double r1 = norm(s.x - s.y, n);
    const double r2 = norm(s.x - s.y2, n);
    const double sum = 1.0 + r1 + r2;
    const double env = std::pow(sum, -2.0 * n) * k.w_mod(1.0 / sum);
    const double f0 = k(s.x, s.y, s.y2);
    const double hmax = 0.5 * std::max(r1, r2);
    switch (mode) {
      case ConditionMode::size: return {std::abs(f0), env};
      case ConditionMode::smooth_x: {
        if (!(norm(s.h, n) < hmax)) throw GeometryError("smooth_x sample needs |h| < max|x-y_j|/2");
        return {std::abs(f0 - k(s.x + s.h, s.y, s.y2)), env * k.phi_mod(norm(s.h, n) / sum)};
      }
      default: {
        if (!(norm(s.h, n) < hmax)) throw GeometryError("smooth_y sample needs |h| < max|x-y_j|/2");
        const double f1 = s.slot == 0 ? k(s.x, s.y + s.h, s.y2) : k(s.x, s.y, s.y2 + s.h);
        return {std::abs(f0 - f1), env * k.phi_mod(norm(s.h, n) / sum)};
      }
    }
  }
  const double r = norm(s.x - s.y, n);
  const double env = maximal_unit_cube(s.y - s.x, n) * k.w_mod(1.0 / (1.0 + r));
  const double f0 = k(s.x, s.y);
  switch (mode) {
    case ConditionMode::size: return {std::abs(f0), env};
    case ConditionMode::smooth_x: {
      if (!(norm(s.h, n) < 0.5 * r)) throw GeometryError("smooth_x sample needs |h| < |x-y|/2");
      return {std::abs(f0 - k(s.x + s.h, s.y)), env * k.phi_mod(norm(s.h, n) / (1.0 + r))};
    }
    default: {
      if (!(norm(s.h, n) < 0.5 * r)) throw GeometryError("smooth_y sample needs |h| < |x-y|/2");
      return {std::abs(f0 - k(s.x, s.y + s.h)), env * k.phi_mod(norm(s.h, n) / (1.0 + r))};
    }
  }
}

inline double condition_ratio(const KernelSpec& k, ConditionMode mode,
                              const ConditionSample& s, double gamma = 0.5) {
  const auto t = condition_terms(k, mode, s, gamma);
  if (t.num == 0.0) return 0.0;
  if (t.den == 0.0) return std::numeric_limits<double>::infinity();
  return t.num / t.den;
}

namespace detail {

inline std::vector<double> log_space(double lo, double hi, int count) {
  std::vector<double> v(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    v[static_cast<std::size_t>(i)] =
        count == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1));
  return v;
}

inline Point direction(int n, double angle, double sign) {
  if (n == 1) return {sign, 0.0};
  return {std::cos(angle), std::sin(angle)};
}

/// Deterministic sample generator for a plan and range [r_min, r_max].
inline std::vector<ConditionSample> generate_samples(const KernelSpec& k, ConditionMode mode,
                                                     const SamplePlan& plan, double r_max) {
  const int n = k.n;
  std::mt19937_64 rng(plan.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ConditionSample> out;
  if (mode == ConditionMode::log_ratio) {
    out.reserve(static_cast<std::size_t>(plan.random_samples));
    const double lx_lo = std::log(plan.r_min), lx_hi = std::log(r_max);
    for (int i = 0; i < plan.random_samples; ++i) {
      const double ax = std::exp(lx_lo + (lx_hi - lx_lo) * unit(rng));
      const double ah = 0.5 * ax * std::exp(std::log(1e-6) * unit(rng));
      const double th = 2.0 * std::numbers::pi * unit(rng);
      const double th2 = 2.0 * std::numbers::pi * unit(rng);
      ConditionSample s;
      s.x = ax * direction(n, th, unit(rng) < 0.5 ? -1.0 : 1.0);
      s.h = ah * direction(n, th2, unit(rng) < 0.5 ? -1.0 : 1.0);
      out.push_back(s);
    }
    return out;
  }
  const auto radii = log_space(plan.r_min, r_max, plan.radial);
  const int ndir = n == 1 ? 2 : plan.directions;
  std::vector<Point> bases{{0.0, 0.0}};
  for (int b = 1; b < plan.base_points; ++b)
    bases.push_back({10.0 * (unit(rng) - 0.5), n == 2 ? 10.0 * (unit(rng) - 0.5) : 0.0});
  auto dir_of = [&](int d) {
    const double ang = 2.0 * std::numbers::pi * (d + 0.25) / ndir;
    return direction(n, ang, d % 2 == 0 ? 1.0 : -1.0);
  };
  for (const auto& x : bases) {
    for (int d = 0; d < ndir; ++d) {
      for (std::size_t i = 0; i < radii.size(); ++i) {
        const double r1 = radii[i];
        ConditionSample s;
        s.x = x;
        s.y = x + r1 * dir_of(d);
        if (k.is_bilinear()) {
          // Pair each radius with a second radius from the same ladder.
          const double r2 = radii[(i * 7 + static_cast<std::size_t>(d) * 13) % radii.size()];
          s.y2 = x + r2 * dir_of((d + 1) % ndir);
        }
        if (mode == ConditionMode::size) {
          out.push_back(s);
          continue;
        }
        const double r = k.is_bilinear() ? std::max(norm(s.x - s.y, n), norm(s.x - s.y2, n))
                                         : norm(s.x - s.y, n);
        const auto hs = log_space(1e-6 * r, 0.499 * r, plan.increments);
        for (std::size_t j = 0; j < hs.size(); ++j) {
          const double ang = 2.0 * std::numbers::pi * unit(rng);
          ConditionSample t = s;
          t.h = hs[j] * direction(n, ang, j % 2 == 0 ? 1.0 : -1.0);
          t.slot = static_cast<int>(j % 2);
          out.push_back(t);
        }
      }
    }
  }
  return out;
}

inline void scan(const KernelSpec& k, ConditionMode mode, const std::vector<ConditionSample>& ss,
                 double gamma, ConditionReport& rep, double& max_ratio) {
  for (const auto& s : ss) {
    const double q = condition_ratio(k, mode, s, gamma);
    ++rep.samples_checked;
    if (std::isinf(q)) ++rep.infinite_ratios;
    if (q > max_ratio) {
      max_ratio = q;
      if (&max_ratio == &rep.max_ratio) rep.argmax = {s.x, s.y, s.h};
    }
  }
}

}  // namespace detail

/// Max over sampled configurations of |kernel expression| / right-hand side
/// (the fitted A), plus a rerun on the extended range to detect growth.
inline ConditionReport kernel_condition_check(const KernelSpec& k, ConditionMode mode,
                                              const SamplePlan& plan = {}, double gamma = 0.5) {
  ConditionReport rep;
  if (!plan.explicit_samples.empty()) {
    detail::scan(k, mode, plan.explicit_samples, gamma, rep, rep.max_ratio);
    rep.extended_max_ratio = rep.max_ratio;
  } else {
    detail::scan(k, mode, detail::generate_samples(k, mode, plan, plan.r_max), gamma, rep,
                 rep.max_ratio);
    double ext = 0.0;
    detail::scan(k, mode,
                 detail::generate_samples(k, mode, plan, plan.r_max * plan.extension), gamma,
                 rep, ext);
    rep.extended_max_ratio = std::max(ext, rep.max_ratio);
  }
  rep.growth = rep.max_ratio > 0.0 ? rep.extended_max_ratio / rep.max_ratio : 1.0;
  rep.flagged = rep.infinite_ratios > 0 || rep.max_ratio > plan.threshold ||
                !(rep.growth <= plan.growth_limit);
  return rep;
}

// ---------------------------------------------------------------------------
// Fourier decay

struct FourierGrid {
  std::size_t points = std::size_t{1} << 14;
  double spacing = 1.0 / 16.0;
};

struct FourierOptions {
  int l = 2;
  /// Exponent kappa in the log weight; defaults to the kernel's "kappa".
  std::optional<double> kappa;
  double growth_limit = 1.2;
  double alias_limit = 2.0;
};

namespace detail {

struct Spectrum {
  double max_weighted = 0.0;
  double argmax = 0.0;
  double at_zero = 0.0;
};

inline Spectrum weighted_spectrum(const KernelSpec::Profile& profile, std::size_t N, double dx,
                                  int l, double kappa) {
  if (N < 4 || N % 2 != 0) throw ParameterError("Fourier grid needs an even number of points");
  std::vector<double> v(N);
  const double L = 0.5 * static_cast<double>(N) * dx;
  for (std::size_t j = 0; j < N; ++j) {
    const double x = (static_cast<double>(j) - 0.5 * static_cast<double>(N)) * dx;
    v[j] = profile({x, 0.0});
  }
  // Periodic trapezoid: the unpaired endpoint carries the mean of both ends.
  v[0] = 0.5 * (profile({-L, 0.0}) + profile({L, 0.0}));
  const auto F = fft::forward(v, 1, N);
  const double scale = dx / std::sqrt(2.0 * std::numbers::pi);
  Spectrum s;
  s.at_zero = std::abs(F[0]) * scale;
  for (std::size_t k = 1; k < F.size(); ++k) {
    const double xi = 2.0 * std::numbers::pi * static_cast<double>(k) / (static_cast<double>(N) * dx);
    const double val = std::abs(F[k]) * scale * (1.0 + std::pow(xi, l)) *
                       std::pow(std::log(2.0 + 1.0 / xi), kappa - 1.0);
    if (val > s.max_weighted) {
      s.max_weighted = val;
      s.argmax = xi;
    }
  }
  return s;
}

}  // namespace detail

/// max over frequency bins of |F phi(xi)| (1 + |xi|^l) log^{kappa-1}(2 + 1/|xi|)
/// for a one-dimensional convolution profile.
///
/// The base grid is compared with the grid of twice as many points at the
/// same spacing (aliasing check, ResolutionError beyond `alias_limit`) and
/// with the grid of half the spacing (frequency-range extension; growth
/// beyond `growth_limit` sets `flagged`).
inline ConditionReport fourier_decay_profile(const KernelSpec& k, const FourierOptions& opt = {},
                                             const FourierGrid& grid = {}) {
  if (k.kind != KernelKind::convolution) throw ParameterError("Fourier profile needs a convolution kernel");
  if (k.n != 1) throw ParameterError("Fourier profile is implemented for n = 1");
  const double kappa = opt.kappa ? *opt.kappa : k.param("kappa");
  const auto base = detail::weighted_spectrum(k.profile, grid.points, grid.spacing, opt.l, kappa);
  const auto refined = detail::weighted_spectrum(k.profile, 2 * grid.points, grid.spacing, opt.l, kappa);
  const double change = std::max(base.max_weighted, refined.max_weighted) /
                        std::max(std::min(base.max_weighted, refined.max_weighted), 1e-300);
  if (change > opt.alias_limit) {
    std::ostringstream msg;
    msg << k.name << ": weighted transform changes by " << change
        << "x under grid refinement; use a finer spacing";
    throw ResolutionError(msg.str());
  }
  const auto extended =
      detail::weighted_spectrum(k.profile, 2 * grid.points, 0.5 * grid.spacing, opt.l, kappa);
  ConditionReport rep;
  rep.max_ratio = base.max_weighted;
  rep.refined_max_ratio = refined.max_weighted;
  rep.argmax = {{base.argmax, 0.0}};
  rep.samples_checked = grid.points / 2;
  rep.transform_at_zero = base.at_zero;
  rep.extended_max_ratio = extended.max_weighted;
  rep.growth = extended.max_weighted / std::max(refined.max_weighted, 1e-300);
  rep.flagged = !std::isfinite(rep.max_ratio) || rep.growth > opt.growth_limit;
  return rep;
}

}  // namespace lpdini
