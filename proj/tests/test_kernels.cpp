#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "lpdini/kernels.hpp"

using namespace lpdini;

namespace {

ExampleParams kp(double kappa, std::optional<double> beta = std::nullopt, bool profile_only = false) {
  return {kappa, beta, profile_only};
}

SamplePlan small_plan() {
  SamplePlan p;
  p.radial = 24;
  p.increments = 6;
  p.base_points = 2;
  p.directions = 3;
  p.random_samples = 2000;
  return p;
}

}  // namespace

TEST(Kernels, Example1OddAndVanishesAtOrigin) {
  for (int n : {1, 2}) {
    const auto k = example_kernel(ExampleId::ex1, kp(3.0), n);
    EXPECT_EQ(k.profile({0.0, 0.0}), 0.0);
    for (double x : {0.1, 0.7, 3.0, 40.0}) {
      const Point p{x, n == 2 ? 0.3 : 0.0};
      const Point m{-x, n == 2 ? -0.3 : 0.0};
      EXPECT_DOUBLE_EQ(k.profile(p), -k.profile(m));
    }
  }
}

TEST(Kernels, Example1ClosedFormValue) {
  const auto k = example_kernel(ExampleId::ex1, kp(3.0), 1);
  const double x = 1.5;
  const double expect = std::sin(x) / (std::sqrt(1.0 + x * x) * std::pow(std::log(2.0 + x * x), 3.0));
  EXPECT_NEAR(k.profile({x, 0.0}), expect, 1e-15);
}

TEST(Kernels, Example3IsDerivativeOfRadialProfile) {
  // Central difference of g(x) = (1+|x|^2)^{-(n-1)/2} log^{-kappa}(2+|x|^2).
  for (int n : {1, 2}) {
    const double kappa = 3.0;
    const auto g = [&](double a, double b) {
      const double r2 = a * a + (n == 2 ? b * b : 0.0);
      return std::pow(1.0 + r2, -0.5 * (n - 1)) * std::pow(std::log(2.0 + r2), -kappa);
    };
    const auto k = example_kernel(ExampleId::ex3, kp(kappa), n);
    for (double x : {-2.0, -0.3, 0.4, 1.7}) {
      const double y = n == 2 ? 0.6 : 0.0;
      const double d = 1e-5;
      const double fd = (g(x + d, y) - g(x - d, y)) / (2.0 * d);
      EXPECT_NEAR(k.profile({x, y}), fd, 1e-8);
    }
  }
}

TEST(Kernels, ParameterConstraints) {
  EXPECT_THROW(example_kernel(ExampleId::ex1, kp(2.0), 1), ConstraintError);
  EXPECT_NO_THROW(example_kernel(ExampleId::ex1, kp(2.0, std::nullopt, true), 1));
  EXPECT_THROW(example_kernel(ExampleId::ex1, kp(1.0, std::nullopt, true), 1), ConstraintError);
  EXPECT_THROW(example_kernel(ExampleId::ex2, kp(3.0), 1), ConstraintError);
  EXPECT_THROW(example_kernel(ExampleId::ex2, kp(3.0, 2.5), 1), ConstraintError);
  EXPECT_THROW(example_kernel(ExampleId::ex2, kp(3.0, 1.0), 1), ConstraintError);
  EXPECT_THROW(example_kernel(ExampleId::ex1, kp(3.0), 3), ParameterError);
  const auto b = example_kernel(ExampleId::bex1, kp(3.0), 1);
  EXPECT_THROW(b({0.0, 0.0}, {1.0, 0.0}), ParameterError);
  EXPECT_THROW(table_kernel({0.0, 0.0}, {1.0, 1.0}, moduli::power(1.0), moduli::power(1.0)),
               ParameterError);
}

TEST(Kernels, Example2ModuliFinite) {
  const auto k = example_kernel(ExampleId::ex2, kp(4.0, 1.5), 1);
  EXPECT_TRUE(std::isfinite(dini_constant(k.w_mod).value));
  EXPECT_TRUE(std::isfinite(dini_constant(k.phi_mod).value));
}

TEST(KernelConditions, ZeroKernelHasZeroRatio) {
  const auto k = convolution_kernel("zero", 1, [](const Point&) { return 0.0; }, moduli::power(1.0),
                                    moduli::power(1.0));
  for (auto mode : {ConditionMode::size, ConditionMode::smooth_x, ConditionMode::smooth_y}) {
    const auto r = kernel_condition_check(k, mode, small_plan());
    EXPECT_EQ(r.max_ratio, 0.0);
    EXPECT_FALSE(r.flagged);
    EXPECT_GT(r.samples_checked, 0u);
  }
}

TEST(KernelConditions, ConstantKernelFailsSizeCondition) {
  // |psi| = 1 against an envelope decaying like (1 + r)^{-2}: ratio grows
  // under domain extension.
  const auto k = convolution_kernel("one", 1, [](const Point&) { return 1.0; }, moduli::power(1.0),
                                    moduli::power(1.0));
  const auto r = kernel_condition_check(k, ConditionMode::size, small_plan());
  EXPECT_TRUE(r.flagged);
  EXPECT_GT(r.growth, 1.2);
}

TEST(KernelConditions, ExampleKernelsSizeNotFlagged) {
  for (int n : {1, 2}) {
    const auto k1 = example_kernel(ExampleId::ex1, kp(3.0), n);
    const auto r1 = kernel_condition_check(k1, ConditionMode::size, small_plan());
    EXPECT_FALSE(r1.flagged) << "n=" << n << " growth=" << r1.growth;
    EXPECT_TRUE(std::isfinite(r1.max_ratio));
  }
  const auto k2 = example_kernel(ExampleId::ex2, kp(4.0, 1.5), 1);
  EXPECT_FALSE(kernel_condition_check(k2, ConditionMode::size, small_plan()).flagged);
}

TEST(KernelConditions, SmoothnessRatiosFinite) {
  const auto k = example_kernel(ExampleId::ex1, kp(3.0), 1);
  for (auto mode : {ConditionMode::smooth_x, ConditionMode::smooth_y}) {
    const auto r = kernel_condition_check(k, mode, small_plan());
    EXPECT_TRUE(std::isfinite(r.max_ratio));
    EXPECT_EQ(r.infinite_ratios, 0u);
  }
}

TEST(KernelConditions, LogRatioFiniteAndGeometryChecked) {
  const auto k = example_kernel(ExampleId::ex1, kp(3.0), 1);
  const auto r = kernel_condition_check(k, ConditionMode::log_ratio, small_plan());
  EXPECT_TRUE(std::isfinite(r.max_ratio));
  EXPECT_GT(r.max_ratio, 0.0);
  ConditionSample bad;
  bad.x = {1.0, 0.0};
  bad.h = {0.9, 0.0};
  EXPECT_THROW(condition_ratio(k, ConditionMode::log_ratio, bad), GeometryError);
  ConditionSample near;
  near.x = {1.0, 0.0};
  near.y = {1.1, 0.0};
  near.h = {0.2, 0.0};
  EXPECT_THROW(condition_ratio(k, ConditionMode::smooth_x, near), GeometryError);
}

TEST(KernelConditions, ExplicitSampleMatchesHandComputation) {
  // psi(x, y) = e^{-|x-y|}, w = phi = t: size ratio at x = 0, y = 2.
  const auto k = convolution_kernel("exp", 1, [](const Point& z) { return std::exp(-std::abs(z[0])); },
                                    moduli::power(1.0), moduli::power(1.0));
  ConditionSample s;
  s.x = {0.0, 0.0};
  s.y = {2.0, 0.0};
  const auto t = condition_terms(k, ConditionMode::size, s);
  EXPECT_NEAR(t.num, std::exp(-2.0), 1e-15);
  EXPECT_GT(t.den, 0.0);
}

TEST(Fourier, Example1TransformVanishesAtZero) {
  const auto k = example_kernel(ExampleId::ex1, kp(2.0, std::nullopt, true), 1);
  const auto r = fourier_decay_profile(k);
  ASSERT_TRUE(r.transform_at_zero.has_value());
  EXPECT_LE(*r.transform_at_zero, 1e-8);
  EXPECT_TRUE(std::isfinite(r.max_ratio));
  EXPECT_FALSE(r.flagged);
}

TEST(Fourier, GaussianMatchesClosedForm) {
  // F[e^{-x^2/2}] = e^{-xi^2/2}; with kappa = 1 the weight is 1 + xi^2 and
  // the supremum is 2 e^{-1/2} at xi = 1.
  const auto k = convolution_kernel("gauss", 1, [](const Point& p) { return std::exp(-0.5 * p[0] * p[0]); },
                                    moduli::power(1.0), moduli::power(1.0));
  FourierOptions fo;
  fo.kappa = 1.0;
  const auto r = fourier_decay_profile(k, fo);
  EXPECT_NEAR(r.max_ratio, 2.0 * std::exp(-0.5), 1e-4);
  EXPECT_NEAR(*r.transform_at_zero, 1.0, 1e-10);
}

TEST(Fourier, BoxKernelFlagged) {
  const auto k = box_kernel(1, moduli::power(1.0), moduli::power(1.0));
  FourierOptions fo;
  fo.kappa = 3.0;
  bool flagged = false;
  try {
    flagged = fourier_decay_profile(k, fo).flagged;
  } catch (const ResolutionError&) {
    flagged = true;
  }
  EXPECT_TRUE(flagged);
}
