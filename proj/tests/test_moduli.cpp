#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <random>

#include "lpdini/moduli.hpp"

using namespace lpdini;

namespace {

// Independent oracle: int_0^inf w(e^{-u}) du + w(1) by double-exponential
// quadrature. Only valid for moduli whose tail decays faster than e^{-u}
// reaches underflow.
double dini_oracle(const Modulus& w) {
  boost::math::quadrature::exp_sinh<double> q;
  const double v = q.integrate([&w](double u) { return w(std::exp(-u)); }, 1e-13);
  return v + w(1.0);
}

// Oracle for w(t) = log^{-s}(c + 1/t), written in u = log(1/t) so that the
// integrand is (u + log1p(c e^{-u}))^{-s}. Quadrature on [0, 60] plus the
// closed-form u^{-s} tail, whose relative error is O(e^{-60}).
double log_dini_oracle(double c, double s) {
  boost::math::quadrature::tanh_sinh<double> q;
  const auto g = [=](double u) { return std::pow(u + std::log1p(c * std::exp(-u)), -s); };
  const double u0 = 60.0;
  return q.integrate(g, 0.0, u0, 1e-14) + std::pow(u0, 1.0 - s) / (s - 1.0) + g(0.0);
}

}  // namespace

TEST(Dini, PowerModuliClosedForm) {
  EXPECT_NEAR(dini_constant(moduli::power(1.0), 1e-8).value, 2.0, 1e-9);
  EXPECT_NEAR(dini_constant(moduli::power(0.5), 1e-8).value, 3.0, 1e-9);
  EXPECT_NEAR(dini_constant(moduli::power(0.25), 1e-8).value, 5.0, 1e-8);
}

TEST(Dini, LogModulusMatchesDoubleExponentialOracle) {
  for (double kappa : {3.0, 4.0, 6.0}) {
    const Modulus w = moduli::log_example(kappa);
    const double ours = dini_constant(w, 1e-10).value;
    EXPECT_NEAR(ours, log_dini_oracle(2.0, kappa / 2.0), 1e-7 * ours) << "kappa=" << kappa;
    // Two refinement levels agree.
    EXPECT_NEAR(ours, dini_constant(w, 1e-7).value, 1e-6);
  }
}

TEST(Dini, LogSplitPairFinite) {
  const auto p = moduli::log_split(3.0, 1.5);
  const Modulus* ws[] = {&p.w, &p.phi};
  const double exps[] = {1.5, 1.5};
  for (int i = 0; i < 2; ++i) {
    const auto r = dini_constant(*ws[i], 1e-9);
    EXPECT_FALSE(r.divergent);
    EXPECT_NEAR(r.value, log_dini_oracle(1.0, exps[i]), 1e-6 * r.value);
  }
}

TEST(Dini, PowerModuliMatchExpSinhOracle) {
  for (double a : {0.3, 0.7, 1.0}) {
    const Modulus w = moduli::power(a);
    EXPECT_NEAR(dini_constant(w, 1e-10).value, dini_oracle(w), 1e-8);
  }
}

TEST(Dini, TableModulusLinearSegment) {
  // w(t) = t on (0, 1]: [w] = 1 + 1.
  EXPECT_NEAR(dini_constant(moduli::table({1.0}, {1.0}), 1e-9).value, 2.0, 1e-8);
}

TEST(Dini, DivergentModulusIsReported) {
  // log^{-1}(2 + 1/t): int du / log(2 + e^u) diverges like log u.
  const auto r = dini_constant(moduli::log_example(2.0), 1e-8);
  EXPECT_TRUE(r.divergent);
  EXPECT_TRUE(std::isinf(r.value));
}

TEST(Dini, RejectsDecreasingModulus) {
  const Modulus bad("decreasing", [](double t) { return 1.0 - 0.5 * t; });
  EXPECT_THROW(dini_constant(bad), MonotonicityError);
  const Modulus neg("negative", [](double t) { return t - 2.0; });
  EXPECT_THROW(dini_constant(neg), MonotonicityError);
}

TEST(Dini, RejectsBadParameters) {
  EXPECT_THROW(moduli::power(0.0), ConstraintError);
  EXPECT_THROW(moduli::log_split(3.0, 2.5), ConstraintError);
  EXPECT_THROW(dini_constant(moduli::power(1.0), 0.0), ParameterError);
  EXPECT_THROW(moduli::table({0.5, 0.25}, {1.0, 1.0}), ParameterError);
}

// Modulus invariants on seeded random pairs.
TEST(ModulusProperty, MonotoneNonnegativeAndConstantPastOne) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-12.0, 3.0);
  const std::vector<Modulus> ws{moduli::power(0.3), moduli::log_example(3.0), moduli::log_split(5.0, 2.0).w,
                                moduli::log_split(5.0, 2.0).phi, moduli::table({0.1, 0.5, 1.0}, {0.2, 0.3, 0.9})};
  for (const auto& w : ws)
    for (int i = 0; i < 500; ++i) {
      double a = std::exp(U(rng)), b = std::exp(U(rng));
      if (a > b) std::swap(a, b);
      EXPECT_LE(w(a), w(b) * (1.0 + 1e-14)) << w.name();
      EXPECT_GE(w(a), 0.0);
      if (b > 1.0) {
        EXPECT_EQ(w(b), w(1.0));
      }
      EXPECT_NEAR(w.at_log(-std::log(a)), w(a), 1e-14 * std::max(1.0, w(a)));
    }
}

TEST(InequalitySuite, ClosedFormItems) {
  InequalityOptions opt;
  opt.alpha = 1.0;
  const auto r1 = dini_inequality_suite(moduli::power(1.0), opt);
  EXPECT_NEAR(r1.at("c").lhs, 1.0, 1e-9);
  EXPECT_NEAR(r1.at("e").lhs, 2.0, 1e-9);
  EXPECT_NEAR(r1.at("e").reference, 9.0, 1e-8);
  EXPECT_TRUE(std::isfinite(r1.at("a").lhs));
  EXPECT_TRUE(r1.all_finite());
  opt.alpha = std::exp(1.0);
  EXPECT_NEAR(dini_inequality_suite(moduli::power(1.0), opt).at("d").lhs, 2.0, 1e-9);
}

TEST(InequalitySuite, ItemATwoLevelAgreement) {
  InequalityOptions a, b;
  a.tol = 1e-10;
  b.tol = 1e-7;
  const double va = dini_inequality_suite(moduli::power(1.0), a).at("a").lhs;
  const double vb = dini_inequality_suite(moduli::power(1.0), b).at("a").lhs;
  EXPECT_NEAR(va, vb, 1e-6);
}

TEST(InequalitySuite, RatiosFiniteForExampleModuli) {
  for (double alpha : {1.0, 4.0, 64.0})
    for (int n : {1, 2}) {
      InequalityOptions opt;
      opt.alpha = alpha;
      opt.dimension = n;
      EXPECT_TRUE(dini_inequality_suite(moduli::log_example(3.0), opt).all_finite());
    }
  EXPECT_THROW(dini_inequality_suite(moduli::log_example(2.0)), DivergenceError);
}
