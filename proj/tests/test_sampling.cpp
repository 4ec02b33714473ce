#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <random>

#include "lpdini/sampling.hpp"

using namespace lpdini;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("lpdini_test_" + name)).string();
}

// Brute-force count of lattice offsets m with |m| h < a.
std::size_t brute_cone_count(double a, int n, double h) {
  const long M = static_cast<long>(a / h) + 2;
  std::size_t c = 0;
  for (long j = (n == 2 ? -M : 0); j <= (n == 2 ? M : 0); ++j)
    for (long i = -M; i <= M; ++i) {
      const double r2 = (static_cast<double>(i) * h) * (static_cast<double>(i) * h) +
                        (static_cast<double>(j) * h) * (static_cast<double>(j) * h);
      if (r2 < a * a) ++c;
    }
  return c;
}

}  // namespace

TEST(Grid, CellCentersAndShape) {
  GridFunction g(1, 2.0, 0.5);
  EXPECT_EQ(g.cells(), 8);
  EXPECT_DOUBLE_EQ(g.coord(0), -1.75);
  EXPECT_DOUBLE_EQ(g.coord(7), 1.75);
  EXPECT_EQ(g.cell_of(0.1), 4);
  GridFunction g2(2, 1.0, 0.25);
  EXPECT_EQ(g2.size(), 64u);
  EXPECT_DOUBLE_EQ(g2.cell_measure(), 0.0625);
  EXPECT_EQ(g.at(-1), 0.0);
  EXPECT_EQ(g.at(8), 0.0);
}

TEST(Grid, ShapeErrors) {
  EXPECT_THROW(GridFunction(3, 1.0, 0.1), ShapeError);
  EXPECT_THROW(GridFunction(1, 1.0, 0.3), ShapeError);
  EXPECT_THROW(GridFunction(1, -1.0, 0.25), ShapeError);
  GridFunction a(1, 1.0, 0.25), b(1, 1.0, 0.125);
  EXPECT_THROW(a += b, ShapeError);
}

TEST(Sampling, IndicatorL1) {
  for (double h : {0.25, 0.125, 1.0 / 64.0}) {
    const auto g = sample_function("indicator", 1, 4.0, h);
    EXPECT_NEAR(g.l1(), 2.0, h);
  }
  const auto g2 = sample_function("indicator:0,1", 2, 2.0, 0.125);
  EXPECT_NEAR(g2.l1(), 1.0, 2 * 0.125);
}

TEST(Sampling, GaussianIntegral) {
  const auto g = sample_function("gaussian", 1, 8.0, 1.0 / 64.0);
  EXPECT_NEAR(g.l1(), std::sqrt(std::numbers::pi), 1e-6);
  const auto g2 = sample_function("gaussian", 2, 6.0, 1.0 / 16.0);
  EXPECT_NEAR(g2.integral(), std::numbers::pi, 1e-6);
}

TEST(Sampling, NamedFunctionValues) {
  const auto hat = sample_function("hat:0.5,1", 1, 2.0, 0.25);
  EXPECT_NEAR(hat(hat.cell_of(0.625)), 1.0 - 0.125, 1e-15);
  const auto haar = sample_function("haar:0,1", 1, 2.0, 0.125);
  EXPECT_NEAR(haar.integral(), 0.0, 1e-15);
  EXPECT_NEAR(haar.l1(), 1.0, 1e-15);
  const auto c = sample_function("const:2.5", 2, 1.0, 0.5);
  EXPECT_EQ(c.linf(), 2.5);
  const auto bump = sample_function("bump:0,1", 1, 2.0, 1.0 / 32.0);
  EXPECT_NEAR(bump.linf(), 1.0, 1e-3);
  EXPECT_EQ(bump(bump.cell_of(1.5)), 0.0);
}

TEST(Sampling, UnknownAndBadInputs) {
  EXPECT_THROW(sample_function("nope", 1, 1.0, 0.25), ConfigError);
  EXPECT_THROW(sample_function("gaussian:abc", 1, 1.0, 0.25), ParameterError);
  EXPECT_THROW(sample_function([](const Point&) { return std::nan(""); }, 1, 1.0, 0.25),
               EvaluationError);
}

TEST(Sampling, CsvRoundTripBitExact) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> N01;
  for (int n : {1, 2}) {
    GridFunction g(n, 1.5, 0.25);
    for (double& v : g.values()) v = N01(rng) * 1e3;
    const auto p = temp_path("rt" + std::to_string(n) + ".csv");
    write_grid_csv(g, p);
    const auto r = read_grid_csv(p);
    ASSERT_TRUE(r.same_grid(g));
    EXPECT_EQ(std::memcmp(r.values().data(), g.values().data(), g.size() * sizeof(double)), 0);
    const auto via = sample_function("csv:" + p, n, 1.5, 0.25);
    EXPECT_EQ(via.values(), g.values());
    EXPECT_THROW(sample_function("csv:" + p, n, 1.5, 0.125), ShapeError);
    std::filesystem::remove(p);
  }
}

TEST(Sampling, BinaryRoundTripBitExact) {
  GridFunction g(2, 2.0, 0.5);
  for (std::size_t k = 0; k < g.size(); ++k) g.values()[k] = std::sin(1.0 + static_cast<double>(k)) / 3.0;
  const auto p = temp_path("rt.bin");
  write_grid_binary(g, p);
  const auto r = read_grid_binary(p);
  EXPECT_EQ(std::memcmp(r.values().data(), g.values().data(), g.size() * sizeof(double)), 0);
  std::filesystem::remove(p);
  EXPECT_THROW(read_grid_binary(temp_path("missing.bin")), IoError);
}

TEST(Cone, StencilExamples) {
  const auto a = cone_stencil(1.0, 1, 1.0, 2.0);
  EXPECT_EQ(a.reach, 1);
  EXPECT_EQ(a.count, 3u);
  EXPECT_TRUE(a.contains(-1) && a.contains(0) && a.contains(1));
  EXPECT_FALSE(a.contains(2));
  // Strict: |m| h = 2 is excluded when alpha t = 2.
  EXPECT_FALSE(a.contains(2));
  const auto b = cone_stencil(2.0, 1, 1.0, 2.0);
  for (long m = -1; m <= 1; ++m) EXPECT_TRUE(b.contains(m));
  const double h = 1.0 / 16.0;
  const auto c = cone_stencil(4.0, 1, h, 64.0 * h);
  EXPECT_GE(static_cast<double>(c.count), 256.0);
  EXPECT_LE(static_cast<double>(c.count), 1024.0);
}

TEST(Cone, StrictnessAndCardinalityProperty) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ua(1.0, 6.0), ut(1.0, 20.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 2;
    const double h = 0.25;
    const double alpha = trial % 7 == 0 ? 2.0 : ua(rng);
    // Some t values put alpha t exactly on a lattice radius.
    const double t = trial % 5 == 0 ? 3.0 * h : ut(rng) * h;
    const auto lv = cone_stencil(alpha, n, h, t);
    EXPECT_EQ(lv.count, brute_cone_count(alpha * t, n, h)) << alpha << " " << t;
    const long R = lv.reach + 1;
    for (long j = (n == 2 ? -R : 0); j <= (n == 2 ? R : 0); ++j)
      for (long i = -R; i <= R; ++i) {
        const double r = std::hypot(static_cast<double>(i) * h, static_cast<double>(j) * h);
        EXPECT_EQ(lv.contains(i, j), r < alpha * t);
      }
  }
}

TEST(Cone, MonotoneInAperture) {
  for (int n : {1, 2}) {
    const auto a = cone_stencil(1.0, n, 0.125, 1.0);
    const auto b = cone_stencil(2.0, n, 0.125, 1.0);
    for (long j = -a.reach; j <= a.reach; ++j)
      for (long i = -a.reach; i <= a.reach; ++i)
        if (a.contains(i, n == 2 ? j : 0)) {
          EXPECT_TRUE(b.contains(i, n == 2 ? j : 0));
        }
    EXPECT_GT(b.count, a.count);
  }
}

TEST(Cone, LevelsAndErrors) {
  const auto c = build_cone(1.0, 1, 0.125, 0.25, 4.0, 4);
  EXPECT_EQ(c.levels.size(), 16u);
  EXPECT_NEAR(c.ratio, std::pow(2.0, 0.25), 1e-14);
  EXPECT_NEAR(c.levels[0].t, 0.25 * std::pow(2.0, 0.125), 1e-14);
  EXPECT_NEAR(c.levels[0].weight, std::log(c.ratio), 1e-15);
  std::size_t total = 0;
  for (const auto& l : c.levels) total += l.count;
  EXPECT_EQ(total, c.total_points);
  EXPECT_THROW(build_cone(0.5, 1, 0.125, 0.25, 4.0, 4), ParameterError);
  EXPECT_THROW(build_cone(1.0, 1, 0.125, 0.0625, 4.0, 4), ParameterError);
  EXPECT_THROW(build_cone(1.0, 1, 0.125, 0.25, 0.125, 4), ParameterError);
  EXPECT_THROW(build_cone(1.0, 1, 0.125, 0.25, 100.0, 4, 2.0), ParameterError);
  EXPECT_THROW(cone_stencil(1.0, 1, 1.0, 0.0), ResolutionError);
  const auto d = default_cone(1.0, 2, 1.0 / 16.0, 2.0);
  EXPECT_DOUBLE_EQ(d.t_min, 0.125);
  EXPECT_DOUBLE_EQ(d.t_max, 4.0);
}
