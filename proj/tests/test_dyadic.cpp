#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "lpdini/config.hpp"
#include "lpdini/harness.hpp"

using namespace lpdini;

namespace {

Cube unit_root(int n) {
  Cube q;
  q.n = n;
  q.base = 1.0;
  return q;
}

// Independent CZ selection: a generation >= 1 cube inside the grid is
// selected when its |f| average exceeds rho and no strict ancestor of
// generation >= 1 has that property. Averages by direct summation.
std::set<std::pair<int, long>> brute_cz_1d(const GridFunction& f, double rho) {
  const long N = f.cells();
  std::map<std::pair<int, long>, double> avg;
  for (long L = N / 2, g = 1; L >= 1; L /= 2, ++g)
    for (long a = 0; a < N / L; ++a) {
      double s = 0.0;
      for (long i = a * L; i < a * L + L; ++i) s += std::abs(f(i));
      avg[{static_cast<int>(g), a}] = s / static_cast<double>(L);
    }
  std::set<std::pair<int, long>> out;
  for (const auto& [key, v] : avg) {
    if (!(v > rho)) continue;
    bool ancestor = false;
    long a = key.second;
    for (int g = key.first - 1; g >= 1; --g) {
      a /= 2;
      if (avg.at({g, a}) > rho) ancestor = true;
    }
    if (!ancestor) out.insert(key);
  }
  return out;
}

}  // namespace

TEST(Cube, ParentChildrenAndContainment) {
  Cube c = unit_root(2);
  c.generation = 3;
  c.anchor = {-3, 5};
  const Cube p = c.parent();
  EXPECT_EQ(p.generation, 2);
  EXPECT_EQ(p.anchor[0], -2);
  EXPECT_EQ(p.anchor[1], 2);
  EXPECT_TRUE(p.contains(c));
  EXPECT_FALSE(c.contains(p));
  const auto kids = c.children();
  ASSERT_EQ(kids.size(), 4u);
  for (const auto& k : kids) {
    EXPECT_EQ(k.parent(), c);
    EXPECT_DOUBLE_EQ(k.measure(), c.measure() / 4.0);
  }
  EXPECT_DOUBLE_EQ(c.side(), 0.125);
  EXPECT_DOUBLE_EQ(c.lower(0), -0.375);
}

TEST(Cube, LatticeCells) {
  GridFunction g(1, 2.0, 0.125);
  const Cube c = grid_cube(g, 2, 0);  // [0, 1)
  const IndexBox b = c.cells(g);
  EXPECT_EQ(b.lo[0], 16);
  EXPECT_EQ(b.hi[0], 24);
  const IndexBox b3 = c.cells3(g);
  EXPECT_EQ(b3.lo[0], 8);
  EXPECT_EQ(b3.hi[0], 32);
  Cube fine = grid_cube(g, 8, 0);
  EXPECT_THROW(fine.cells(g), ShapeError);
}

TEST(CZ, WorkedExamples) {
  const auto f = sample_function("indicator:0,0.999", 1, 4.0, 1.0 / 16.0).map([](double v) { return 4.0 * v; });
  const auto cz = cz_decompose(f, 1.0);
  ASSERT_EQ(cz.bad.size(), 1u);
  EXPECT_DOUBLE_EQ(cz.bad[0].cube.lower(0), 0.0);
  EXPECT_DOUBLE_EQ(cz.bad[0].cube.side(), 2.0);
  EXPECT_DOUBLE_EQ(cz.good(cz.good.cell_of(0.5)), 2.0);
  EXPECT_DOUBLE_EQ(cz.good(cz.good.cell_of(1.5)), 2.0);
  EXPECT_DOUBLE_EQ(cz.good(cz.good.cell_of(-0.5)), 0.0);
  EXPECT_TRUE(cz_decompose(f, 5.0).bad.empty());
  EXPECT_THROW(cz_decompose(f, 0.25), ParameterError);
  EXPECT_THROW(cz_decompose(f, 0.0), ParameterError);
}

TEST(CZ, RandomInvariantsAndSelectionOracle) {
  std::mt19937_64 rng(17);
  for (int run = 0; run < 12; ++run) {
    const auto f = random_cz_input(1, 1.0, 1.0 / 128.0, rng);
    const auto sums = detail::dyadic_sums(f);
    double top = 0.0;
    for (auto s : sums.abs_sum[1]) top = std::max(top, static_cast<double>(s) / 256.0);
    for (double mult : {1.01, 3.0, 20.0}) {
      const double rho = top * mult;
      const auto cz = cz_decompose(f, rho);
      EXPECT_EQ(check_cz(f, cz).total(), 0u);
      std::set<std::pair<int, long>> got;
      for (const auto& b : cz.bad) got.insert({b.cube.generation, b.cells.lo[0] >> (8 - b.cube.generation)});
      EXPECT_EQ(got, brute_cz_1d(f, rho)) << "run " << run << " rho " << rho;
    }
  }
  std::mt19937_64 rng2(18);
  const auto f2 = random_cz_input(2, 1.0, 1.0 / 32.0, rng2);
  const auto cz2 = cz_decompose(f2, 4.0 * f2.l1());
  EXPECT_EQ(check_cz(f2, cz2).total(), 0u);
}

TEST(Shifted, GeneratorsAndClosure) {
  for (int k = 1; k <= 3; ++k) {
    const auto F = shifted_family_1d(k, -2, 2, -8.0, 8.0);
    bool has_generator = false;
    std::set<std::pair<int, double>> members;
    for (const auto& I : F) members.insert({I.generation, I.lo()});
    for (const auto& I : F) {
      if (I.generation == 0 && I.lo() == static_cast<double>(k - 1)) has_generator = true;
      // Closed under the neighbour moves that stay in range and window.
      const double l = I.length();
      const std::pair<int, double> moves[] = {{I.generation - 1, I.hi()}, {I.generation - 1, I.lo() - 2.0 * l},
                                              {I.generation + 1, I.hi()}, {I.generation + 1, I.lo() - 0.5 * l}};
      for (const auto& [g, lo] : moves) {
        if (g < -2 || g > 2) continue;
        const double hi = lo + std::ldexp(1.0, -g);
        if (lo > 8.0 || hi < -8.0) continue;
        EXPECT_TRUE(members.count({g, lo})) << "k=" << k << " missing g=" << g << " lo=" << lo;
      }
    }
    EXPECT_TRUE(has_generator);
  }
  // Families are translates of each other by 1.
  const auto A = shifted_family_1d(1, -1, 1, -4.0, 4.0);
  const auto B = shifted_family_1d(2, -1, 1, -3.0, 5.0);
  std::set<std::pair<int, double>> a, b;
  for (const auto& I : A) a.insert({I.generation, I.lo() + 1.0});
  for (const auto& I : B) b.insert({I.generation, I.lo()});
  EXPECT_EQ(a, b);
}

TEST(Shifted, CoveringAndBudget) {
  const auto rep = shifted_covering_check(-4.0, 4.0, 0.125, 1.0, 6.0);
  EXPECT_GT(rep.checked, 0u);
  EXPECT_EQ(rep.failures, 0u);
  EXPECT_EQ(rep.relative_failures, 0u);
  EXPECT_LE(rep.worst_relative, 6.0);
  try {
    shifted_family_1d(1, -6, 6, -50.0, 50.0, 10);
    FAIL() << "expected budget error";
  } catch (const ShiftedBudgetError& e) {
    EXPECT_FALSE(e.family().empty());
  }
  EXPECT_THROW(shifted_family_1d(4, -1, 1, 0.0, 1.0), ParameterError);
  const auto cubes = shifted_family({1, 2}, 2, -1, 1, -2.0, 2.0);
  for (const auto& c : cubes) EXPECT_EQ(c.sides[0].generation, c.sides[1].generation);
}

TEST(Sparse, VerifyExamples) {
  SparseFamily fam;
  fam.root = unit_root(1);
  const auto kids = fam.root.children();
  fam.cubes = {fam.root, kids[0]};
  EXPECT_TRUE(verify_sparse(fam, 0.5).ok);
  EXPECT_DOUBLE_EQ(verify_sparse(fam, 0.5).worst_ratio, 0.5);
  fam.cubes = {fam.root, kids[0], kids[1]};
  EXPECT_FALSE(verify_sparse(fam, 0.5).ok);
  // A grandchild under a member counts toward that member only.
  fam.cubes = {fam.root, kids[0], kids[0].children()[1]};
  const auto r = verify_sparse(fam, 0.5);
  EXPECT_TRUE(r.ok);
  EXPECT_DOUBLE_EQ(r.worst_ratio, 0.5);
  Cube out = unit_root(1);
  out.anchor = {3, 0};
  fam.cubes = {fam.root, out};
  EXPECT_THROW(verify_sparse(fam, 0.5), ContainmentError);
  EXPECT_THROW(verify_sparse(fam, 1.0), ParameterError);
}

TEST(Sparse, RhsEvaluation) {
  GridFunction f(1, 2.0, 0.125);
  SparseFamily fam;
  fam.root = unit_root(1);
  fam.cubes = {fam.root};
  const IndexBox q = fam.root.cells(f);
  for (long i = q.lo[0]; i < q.hi[0]; ++i) f(i) = 1.0;
  const auto r1 = sparse_rhs_eval(fam, f, 1);
  const auto r3 = sparse_rhs_eval(fam, f, 3);
  EXPECT_DOUBLE_EQ(r1(f.cell_of(0.5)), 1.0);
  EXPECT_DOUBLE_EQ(r1(f.cell_of(1.5)), 0.0);
  EXPECT_NEAR(r3(f.cell_of(0.5)), 1.0 / 3.0, 1e-15);
  fam.cubes.push_back(fam.root.children()[0]);
  EXPECT_NEAR(sparse_rhs_eval(fam, f, 1)(f.cell_of(0.25)), std::sqrt(2.0), 1e-15);
  EXPECT_THROW(sparse_rhs_eval(fam, f, 2), ParameterError);
}

TEST(Sparse, ConstructionZeroAndBump) {
  const auto k = example_kernel(ExampleId::ex1, {3.0, std::nullopt, false}, 1);
  const double h = 1.0 / 32.0, R = 2.0;
  const auto cone = default_cone(1.0, 1, h, R);
  const Cube Q0 = unit_root(1);
  const GridFunction z(1, R, h);
  const auto fz = sparse_construct(k, z, Q0, cone);
  ASSERT_EQ(fz.cubes.size(), 1u);
  EXPECT_EQ(fz.cubes[0], Q0);
  const auto f = sample_function("bump:0.5,0.6", 1, R, h);
  const auto run = sparse_domination_run(k, f, Q0, cone);
  EXPECT_TRUE(run.check.ok);
  EXPECT_TRUE(std::isfinite(run.fitted_c));
  EXPECT_GT(run.fitted_c, 0.0);
  const auto far = sample_function("bump:-1.5,0.3", 1, R, h);
  EXPECT_THROW(sparse_construct(k, far, Q0, cone), ContainmentError);
}

TEST(Sparse, RandomFamiliesAreSparseAndNested) {
  const auto k = example_kernel(ExampleId::ex1, {3.0, std::nullopt, false}, 1);
  const double h = 1.0 / 64.0, R = 2.0;
  const auto cone = default_cone(1.0, 1, h, R);
  const Cube Q0 = unit_root(1);
  SparseOptions opt;
  opt.gamma_start = 1e-3;
  std::mt19937_64 rng(21);
  std::size_t nontrivial = 0;
  for (int run = 0; run < 20; ++run) {
    auto f = random_sparse_input(1, R, h, rng);
    f(f.cell_of(0.3 + 0.02 * run)) += 20.0;
    const auto fam = sparse_construct(k, f, Q0, cone, opt);
    EXPECT_TRUE(verify_sparse(fam, 0.5).ok);
    ASSERT_EQ(fam.parent.size(), fam.cubes.size());
    EXPECT_EQ(fam.parent[0], -1);
    for (std::size_t i = 1; i < fam.cubes.size(); ++i) {
      const auto& P = fam.cubes[static_cast<std::size_t>(fam.parent[i])];
      EXPECT_TRUE(P.contains(fam.cubes[i]));
      EXPECT_GT(fam.cubes[i].generation, P.generation);
      // Depth bound: nothing below one lattice cell.
      EXPECT_GE(fam.cubes[i].side(), h * (1.0 - 1e-12));
    }
    EXPECT_GE(fam.gamma, opt.gamma_start);
    if (fam.cubes.size() > 1) ++nontrivial;
  }
  EXPECT_GT(nontrivial, 0u);
}

TEST(Sparse, FamilyJsonRoundTrip) {
  SparseFamily fam;
  fam.root = unit_root(2);
  const auto kids = fam.root.children();
  fam.cubes = {fam.root, kids[3], kids[3].children()[0]};
  fam.parent = {-1, 0, 1};
  fam.gamma = 0.125;
  fam.threshold_constant = 13.5;
  const auto back = sparse_family_from_json(to_json(fam));
  ASSERT_EQ(back.cubes.size(), fam.cubes.size());
  for (std::size_t i = 0; i < fam.cubes.size(); ++i) EXPECT_EQ(back.cubes[i], fam.cubes[i]);
  EXPECT_EQ(back.parent, fam.parent);
  EXPECT_EQ(back.root, fam.root);
  EXPECT_DOUBLE_EQ(back.gamma, fam.gamma);
}
