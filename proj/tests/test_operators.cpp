#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <random>

#include "lpdini/operators.hpp"

using namespace lpdini;

namespace {

KernelSpec ex1(int n) { return example_kernel(ExampleId::ex1, {3.0, std::nullopt, false}, n); }

double max_abs_diff(const GridFunction& a, const GridFunction& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

// Independent triple sum: levels, stencil offsets and sources summed
// directly from the definitions.
std::vector<double> brute_square_sq(const KernelSpec& k, const GridFunction& f, double alpha,
                                    double t_min, double t_max, int q) {
  const int n = f.dimension();
  const double h = f.spacing();
  const long N = f.cells();
  const int K = static_cast<int>(std::lround(q * std::log2(t_max / t_min)));
  const double r = std::pow(t_max / t_min, 1.0 / K);
  std::vector<double> out(f.size(), 0.0);
  for (int lvl = 0; lvl < K; ++lvl) {
    const double t = t_min * std::pow(r, lvl + 0.5);
    const double wt = std::log(r) * std::pow(h / t, n);
    const long M = static_cast<long>(alpha * t / h) + 1;
    auto u = [&](long zi, long zj) {
      double s = 0.0;
      for (long yj = 0; yj < (n == 2 ? N : 1); ++yj)
        for (long yi = 0; yi < N; ++yi) {
          const Point d{(static_cast<double>(zi - yi)) * h / t, (static_cast<double>(zj - yj)) * h / t};
          s += k.profile(d) * f(yi, yj);
        }
      return s * std::pow(h / t, n);
    };
    for (long xj = 0; xj < (n == 2 ? N : 1); ++xj)
      for (long xi = 0; xi < N; ++xi) {
        double acc = 0.0;
        for (long mj = (n == 2 ? -M : 0); mj <= (n == 2 ? M : 0); ++mj)
          for (long mi = -M; mi <= M; ++mi) {
            const double rr = h * std::hypot(static_cast<double>(mi), static_cast<double>(mj));
            if (!(rr < alpha * t)) continue;
            const double v = u(xi + mi, xj + mj);
            acc += v * v;
          }
        out[f.index(xi, xj)] += wt * acc;
      }
  }
  return out;
}

// Hardy-Littlewood maximal function over all lattice intervals by direct
// enumeration.
std::vector<double> brute_hl(const GridFunction& f) {
  const long N = f.cells();
  std::vector<double> M(f.size(), 0.0);
  for (long a = -N; a < N; ++a)
    for (long b = a + 1; b <= a + N; ++b) {
      double s = 0.0;
      for (long i = std::max(0L, a); i < std::min(N, b); ++i) s += std::abs(f(i));
      const double avg = s / static_cast<double>(b - a);
      for (long i = std::max(0L, a); i < std::min(N, b); ++i) M[i] = std::max(M[i], avg);
    }
  return M;
}

}  // namespace

TEST(PsiT, ZeroInputAndLinearity) {
  const auto k = ex1(1);
  GridFunction z(1, 2.0, 1.0 / 16.0);
  EXPECT_EQ(psi_t_apply(k, z, 0.5).linf(), 0.0);
  const auto f = sample_function("gaussian", 1, 2.0, 1.0 / 16.0);
  const auto g = sample_function("hat:0.3,0.5", 1, 2.0, 1.0 / 16.0);
  const auto lhs = psi_t_apply(k, 2.0 * f + (-3.0) * g, 0.7);
  const auto rhs = 2.0 * psi_t_apply(k, f, 0.7) + (-3.0) * psi_t_apply(k, g, 0.7);
  EXPECT_LE(max_abs_diff(lhs, rhs), 1e-14);
  EXPECT_THROW(psi_t_apply(k, f, 0.0), ParameterError);
  EXPECT_THROW(psi_t_apply(ex1(2), f, 1.0), ShapeError);
}

TEST(PsiT, MatchesAdaptiveQuadrature) {
  // t^{-1} int P((x - y)/t) e^{-y^2} dy; the lattice sum is a midpoint rule
  // on a smooth, rapidly decaying integrand.
  const auto k = ex1(1);
  const double R = 8.0, h = 1.0 / 32.0, t = 1.0;
  const auto f = sample_function("gaussian", 1, R, h);
  const auto u = psi_t_apply(k, f, t);
  for (double x0 : {0.0, 0.5, -1.3}) {
    const long i = f.cell_of(x0);
    const double x = f.coord(i);
    const auto integrand = [&](double y) { return k.profile({(x - y) / t, 0.0}) * std::exp(-y * y) / t; };
    const double ref = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -R, R, 15, 1e-14);
    EXPECT_NEAR(u(i), ref, 1e-4 * std::abs(ref) + 1e-12) << "x=" << x;
  }
  // Odd profile against an even input: psi_t f vanishes at the symmetric
  // point between the two central cells.
  const long c = f.cells() / 2;
  EXPECT_NEAR(u(c) + u(c - 1), 0.0, 1e-14);
}

TEST(Square, MatchesBruteForceTripleSum1D) {
  const auto k = ex1(1);
  const double h = 1.0 / 32.0;
  const auto f = sample_function("hat:0.2,0.7", 1, 2.0, h);
  ASSERT_EQ(f.cells(), 128);
  const auto cone = build_cone(1.0, 1, h, 4.0 * h, 16.0 * h, 1, 2.0);
  ASSERT_EQ(cone.levels.size(), 2u);
  const auto ref = brute_square_sq(k, f, 1.0, 4.0 * h, 16.0 * h, 1);
  EvalOptions direct;
  direct.oracle = true;
  EvalOptions fast;
  fast.fast_threshold = 0;
  double scale = 0.0;
  for (double v : ref) scale = std::max(scale, v);
  for (const auto& opt : {direct, fast, EvalOptions{}}) {
    const auto s = square_function(k, f, cone, opt);
    for (std::size_t i = 0; i < ref.size(); ++i)
      EXPECT_NEAR(s.values()[i] * s.values()[i], ref[i], 1e-10 * scale);
  }
}

TEST(Square, MatchesBruteForceTripleSum2D) {
  const auto k = ex1(2);
  const double h = 1.0 / 8.0;
  const auto f = sample_function("gaussian:0.5", 2, 1.0, h);
  const auto cone = build_cone(1.5, 2, h, 2.0 * h, 8.0 * h, 1, 1.0);
  const auto ref = brute_square_sq(k, f, 1.5, 2.0 * h, 8.0 * h, 1);
  EvalOptions fast;
  fast.fast_threshold = 0;
  double scale = 0.0;
  for (double v : ref) scale = std::max(scale, v);
  const auto s = square_function(k, f, cone, fast);
  for (std::size_t i = 0; i < ref.size(); ++i)
    EXPECT_NEAR(s.values()[i] * s.values()[i], ref[i], 1e-10 * scale);
}

TEST(Square, ZeroInputAndHomogeneity) {
  const auto k = ex1(1);
  const double h = 1.0 / 16.0;
  const auto cone = default_cone(1.0, 1, h, 2.0);
  GridFunction z(1, 2.0, h);
  EXPECT_EQ(square_function(k, z, cone).linf(), 0.0);
  const auto f = sample_function("bump:0.3,0.8", 1, 2.0, h);
  const auto a = square_function(k, f, cone);
  const auto b = square_function(k, -2.5 * f, cone);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b.values()[i], 2.5 * a.values()[i], 1e-12);
}

TEST(Square, ApertureMonotone) {
  const auto k = ex1(1);
  const double h = 1.0 / 16.0;
  const auto f = sample_function("gaussian", 1, 4.0, h);
  const auto s1 = square_function(k, f, default_cone(1.0, 1, h, 4.0));
  const auto s2 = square_function(k, f, default_cone(2.0, 1, h, 4.0));
  for (std::size_t i = 0; i < s1.size(); ++i) EXPECT_GE(s2.values()[i], s1.values()[i]);
}

TEST(Square, ThreadCountDoesNotChangeResult) {
  const auto k = ex1(2);
  const double h = 1.0 / 8.0;
  const auto f = sample_function("bump:0.2,1.2", 2, 2.0, h);
  const auto cone = default_cone(1.0, 2, h, 2.0);
  EvalOptions one, many;
  one.threads = 1;
  many.threads = 4;
  const auto a = square_function(k, f, cone, one);
  const auto b = square_function(k, f, cone, many);
  EXPECT_EQ(a.values(), b.values());
}

TEST(Square, BilinearZeroWhenEitherInputVanishes) {
  const auto k = example_kernel(ExampleId::bex1, {3.0, std::nullopt, false}, 1);
  const double h = 1.0 / 16.0;
  const auto f = sample_function("gaussian", 1, 2.0, h);
  const GridFunction z(1, 2.0, h);
  const auto cone = default_cone(1.0, 1, h, 2.0);
  EXPECT_EQ(square_function(k, f, z, cone).linf(), 0.0);
  EXPECT_GT(square_function(k, f, f, cone).linf(), 0.0);
  EXPECT_THROW(square_function(k, f, cone), ShapeError);
}

TEST(Gate, FastPathAgreesWithDirectSum) {
  const auto& g = fast_path_gate();
  EXPECT_TRUE(g.passed);
  EXPECT_LE(g.worst, 1e-8);
  EXPECT_EQ(g.errors.size(), 10u);
}

TEST(GStar, BoundsAgainstConeSquareFunction) {
  // On the unit-aperture cone the weight (t/(t+|x-y|))^{n lambda} lies in
  // [2^{-n lambda}, 1], so 2^{-n lambda / 2} S_1 <= g* (wider cone) and
  // g* (unit cone) <= S_1.
  const auto k = ex1(1);
  const double h = 1.0 / 16.0, R = 2.0, lambda = 3.0;
  const auto f = sample_function("gaussian", 1, R, h);
  const auto unit = default_cone(1.0, 1, h, R);
  const auto wide = default_cone(8.0, 1, h, R);
  const auto s1 = square_function(k, f, unit);
  const auto g_unit = g_star(k, f, lambda, unit);
  const auto g_wide = g_star(k, f, lambda, wide);
  const double c = std::pow(2.0, -0.5 * lambda);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    EXPECT_LE(g_unit.values()[i], s1.values()[i] * (1.0 + 1e-12));
    EXPECT_GE(g_unit.values()[i], c * s1.values()[i] * (1.0 - 1e-12));
    EXPECT_GE(g_wide.values()[i], g_unit.values()[i] * (1.0 - 1e-12));
  }
  EvalOptions oracle;
  oracle.oracle = true;
  EvalOptions fast;
  fast.fast_threshold = 0;
  const auto a = g_star(k, f, lambda, wide, oracle);
  const auto b = g_star(k, f, lambda, wide, fast);
  EXPECT_LE(max_abs_diff(a, b), 1e-10 * a.linf());
}

TEST(GStar, LambdaRange) {
  const auto k = ex1(1);
  const auto f = sample_function("gaussian", 1, 2.0, 0.125);
  const auto cone = default_cone(2.0, 1, 0.125, 2.0);
  EXPECT_THROW(g_star(k, f, 2.0, cone), ParameterError);
  const auto b = example_kernel(ExampleId::bex1, {3.0, std::nullopt, false}, 1);
  EXPECT_THROW(g_star(b, f, f, 4.0, cone), ParameterError);
  EXPECT_NO_THROW(g_star(b, f, f, 4.5, cone));
}

TEST(Maximal, ConstantIsFixed) {
  for (int n : {1, 2}) {
    const auto c = sample_function("const:2", n, 1.0, 0.125);
    EXPECT_NEAR(max_abs_diff(maximal(c, MaximalVariant::hl), c), 0.0, 1e-14);
    EXPECT_NEAR(max_abs_diff(maximal(c, MaximalVariant::dyadic), c), 0.0, 1e-14);
    EXPECT_NEAR(max_abs_diff(maximal(c, MaximalVariant::powered, 2.0), c), 0.0, 1e-14);
  }
}

TEST(Maximal, HardyLittlewoodMatchesIntervalEnumeration) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  GridFunction f(1, 2.0, 1.0 / 16.0);
  for (double& v : f.values()) v = U(rng) * U(rng);
  const auto M = maximal(f, MaximalVariant::hl);
  const auto ref = brute_hl(f);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(M.values()[i], ref[i], 1e-14);
}

TEST(Maximal, IndicatorDecaysLikeOneOverDistance) {
  // M 1_[0,1)(x) = 1 / (x) for x > 1 on the continuum; on the lattice the
  // best interval is [0, cell end).
  const double h = 1.0 / 32.0;
  const auto f = sample_function("indicator:0,0.999", 1, 4.0, h);
  const auto M = maximal(f, MaximalVariant::hl);
  for (double x : {1.5, 2.0, 3.0}) {
    const long i = f.cell_of(x);
    EXPECT_NEAR(M(i), 1.0 / f.coord(i), h);
  }
}

TEST(Maximal, DyadicAnchoredAtOrigin) {
  const auto f = sample_function("indicator:0,0.999", 1, 2.0, 1.0 / 8.0);
  const auto M = maximal(f, MaximalVariant::dyadic);
  EXPECT_DOUBLE_EQ(M(f.cell_of(0.5)), 1.0);
  EXPECT_DOUBLE_EQ(M(f.cell_of(1.5)), 0.5);
  EXPECT_DOUBLE_EQ(M(f.cell_of(-0.5)), 0.0);
  GridFunction odd(1, 1.5, 0.5);
  EXPECT_THROW(maximal(odd, MaximalVariant::dyadic), ShapeError);
}

TEST(Maximal, UnitCubeClosedFormAgainstPlacementSearch) {
  // Brute force over side s and per-axis placements.
  auto overlap = [](double p, double s) { return std::max(0.0, std::min(p + s, 1.0) - std::max(p, -1.0)); };
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-4.0, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Point d{U(rng), U(rng)};
    double best = 0.0;
    for (int si = 1; si <= 1200; ++si) {
      const double s = 0.01 * si;
      double ov[2];
      for (int a = 0; a < 2; ++a) {
        ov[a] = 0.0;
        for (int pi = 0; pi <= 400; ++pi) {
          const double p = d[a] - s + s * pi / 400.0;
          ov[a] = std::max(ov[a], overlap(p, s));
        }
      }
      best = std::max(best, ov[0] * ov[1] / (s * s));
    }
    EXPECT_NEAR(maximal_unit_cube(d, 2), std::min(best, 1.0), 2e-3) << d[0] << "," << d[1];
  }
  EXPECT_DOUBLE_EQ(maximal_unit_cube({3.0, 0.0}, 1), 0.5);
}

TEST(Lerner, ZeroAndWholeGridCube) {
  const auto k = ex1(1);
  const double h = 1.0 / 16.0;
  const auto cone = default_cone(1.0, 1, h, 1.0);
  const GridFunction z(1, 1.0, h);
  const auto pool = default_lerner_pool(z);
  EXPECT_EQ(lerner_maximal(k, z, cone, LernerVariant::M_S, pool).linf(), 0.0);
  const auto f = sample_function("gaussian", 1, 1.0, h);
  PoolCube whole;
  whole.cells = f.box();
  whole.side = f.cells();
  EXPECT_EQ(lerner_maximal(k, f, cone, LernerVariant::N_S, {whole}).linf(), 0.0);
  EXPECT_THROW(lerner_maximal(k, f, cone, LernerVariant::N_S, {}), CoverageError);
  PoolCube part;
  part.cells = {{0, 0}, {4, 1}};
  part.side = 4;
  EXPECT_THROW(lerner_maximal(k, f, cone, LernerVariant::N_S, {part}), CoverageError);
}

TEST(Lerner, MSControlledByNSAndSquareFunction) {
  // |S^2(f) - S^2(f 1_{3Q})| <= N (N + 2 S) with N = S(f 1_{(3Q)^c}).
  const auto k = ex1(1);
  const double h = 1.0 / 16.0;
  const auto f = sample_function("bump:0.25,0.6", 1, 1.0, h);
  const auto cone = default_cone(1.0, 1, h, 1.0);
  const auto pool = default_lerner_pool(f);
  const auto M = lerner_maximal(k, f, cone, LernerVariant::M_S, pool);
  const auto N = lerner_maximal(k, f, cone, LernerVariant::N_S, pool);
  const auto S = square_function(k, f, cone);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double n = N.values()[i];
    EXPECT_LE(M.values()[i], std::sqrt(n * (n + 2.0 * S.values()[i])) + 1e-9);
  }
  EXPECT_GT(M.linf(), 0.0);
}

TEST(FarField, ZeroHomogeneityAndGeometry) {
  const auto k = ex1(1);
  const double h = 1.0 / 32.0;
  GridFunction z(1, 1.0, h);
  const Point c{0.0, 0.0}, x{80.0, 0.0};
  EXPECT_EQ(far_field_majorant(k, z, c, 1.0, x), 0.0);
  const auto b = sample_function("haar:-0.5,1", 1, 1.0, h);
  const double m1 = far_field_majorant(k, b, c, 1.0, x);
  const double m2 = far_field_majorant(k, 3.0 * b, c, 1.0, x);
  EXPECT_GT(m1, 0.0);
  EXPECT_NEAR(m2, 3.0 * m1, 1e-12 * m2);
  EXPECT_GT(far_field_majorant(k, b, c, 1.0, {70.0, 0.0}), m1);
  EXPECT_THROW(far_field_majorant(k, b, c, 1.0, {10.0, 0.0}), GeometryError);
  const auto g = sample_function("gaussian", 1, 1.0, h);
  EXPECT_THROW(far_field_majorant(k, g, c, 1.0, x), ParameterError);
}

TEST(FarField, SquareAtPointMatchesLatticeInsideGrid) {
  // The point evaluator agrees with the lattice operator up to y-quadrature
  // error.
  const auto k = ex1(1);
  const double h = 1.0 / 16.0, R = 4.0;
  const auto f = sample_function("haar:-0.5,1", 1, R, h);
  const auto cone = build_cone(1.0, 1, h, 0.5, 2.0, 8, R);
  const auto s = square_function(k, f, cone);
  const long i = f.cell_of(1.0);
  const double p = square_at_point(k, f, f.point(i), 1.0, 0.5, 2.0, 8, 64);
  EXPECT_NEAR(p, s(i), 0.05 * s(i));
}

TEST(FarField, MajorantBoundsPointSquareFunction) {
  // Haar b on [0,1), ex1 kappa=3. The majorant dominates S_1 b at every far
  // point; the ratio decays because the certified modulus is logarithmic
  // while the kernel is Lipschitz.
  const auto k = ex1(1);
  const auto b = sample_function("haar:0,1", 1, 1.0, 1.0 / 64.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double x : {150.0, 200.0, 400.0, 800.0}) {
    const double s = square_at_point(k, b, {x, 0.0}, 1.0, x / 64.0, 64.0 * x, 8, 16);
    const double m = far_field_majorant(k, b, {0.5, 0.0}, 1.0, {x, 0.0});
    ASSERT_TRUE(std::isfinite(m));
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s / m, 1.0);
    EXPECT_LT(s / m, prev);
    prev = s / m;
  }
}

TEST(Marcinkiewicz, Examples) {
  const auto w = moduli::power(1.0);
  EXPECT_EQ(marcinkiewicz_fw(w, {}, {0.0, 0.0}, 1), 0.0);
  const std::vector<WeightedCube> one{{{0.0, 0.0}, 1.0, 1.0}};
  EXPECT_DOUBLE_EQ(marcinkiewicz_fw(w, one, {0.0, 0.0}, 1), 1.0);
  // x = c + 3r: M 1_Q = 2/4, w(r/(r + 3r)) = 1/4.
  EXPECT_DOUBLE_EQ(marcinkiewicz_fw(w, one, {3.0, 0.0}, 1), 0.125);
  const std::vector<WeightedCube> two{{{0.0, 0.0}, 1.0, 1.0}, {{2.0, 0.0}, 1.0, 2.0}};
  EXPECT_NO_THROW(marcinkiewicz_fw(w, two, {0.0, 0.0}, 1));
  const std::vector<WeightedCube> bad{{{0.0, 0.0}, 1.0, 1.0}, {{1.5, 0.0}, 1.0, 2.0}};
  EXPECT_THROW(marcinkiewicz_fw(w, bad, {0.0, 0.0}, 1), DisjointnessError);
  const auto g = marcinkiewicz_grid(w, two, 1, 4.0, 0.25);
  EXPECT_NEAR(g(g.cell_of(0.1)), marcinkiewicz_fw(w, two, g.point(g.cell_of(0.1)), 1), 1e-15);
}
