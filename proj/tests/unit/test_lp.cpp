#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "tractnet/lp.hpp"
#include "tractnet/rng.hpp"

using namespace tractnet;

namespace {

SparseRow row(std::initializer_list<std::pair<std::size_t, double>> entries) {
  SparseRow r;
  for (auto [j, v] : entries) r.add(j, v);
  return r;
}

void expect_kkt(const LinearProgram& lp, const LpSolution& s) {
  const auto r = kkt_residuals(lp, s);
  EXPECT_LE(r.primal, 1e-9);
  EXPECT_LE(r.dual_sign, 1e-8);
  EXPECT_LE(r.complementarity, 1e-8);
  EXPECT_LE(r.duality_gap, 1e-8);
  for (double mu : s.ineq_duals) EXPECT_GE(mu, 0.0);
}

// Brute-force optimum of a 2-variable LP by enumerating intersections of
// pairs of constraint lines (bounds included).
double brute_force_2d(const LinearProgram& lp) {
  struct Line { double a, b, c; };  // a x + b y <= c
  std::vector<Line> lines;
  for (std::size_t i = 0; i < lp.ineq_rows.size(); ++i) {
    double a = 0, b = 0;
    const auto& r = lp.ineq_rows[i];
    for (std::size_t k = 0; k < r.index.size(); ++k) (r.index[k] == 0 ? a : b) += r.value[k];
    lines.push_back({a, b, lp.ineq_rhs[i]});
  }
  lines.push_back({-1, 0, -lp.lower[0]});
  lines.push_back({1, 0, lp.upper[0]});
  lines.push_back({0, -1, -lp.lower[1]});
  lines.push_back({0, 1, lp.upper[1]});
  double best = lp.sense == Sense::Minimize ? kInf : -kInf;
  for (std::size_t i = 0; i < lines.size(); ++i)
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      const double det = lines[i].a * lines[j].b - lines[i].b * lines[j].a;
      if (std::fabs(det) < 1e-12) continue;
      const double x = (lines[i].c * lines[j].b - lines[i].b * lines[j].c) / det;
      const double y = (lines[i].a * lines[j].c - lines[i].c * lines[j].a) / det;
      bool ok = true;
      for (const auto& l : lines) ok = ok && l.a * x + l.b * y <= l.c + 1e-9;
      if (!ok) continue;
      const double v = lp.objective[0] * x + lp.objective[1] * y;
      best = lp.sense == Sense::Minimize ? std::min(best, v) : std::max(best, v);
    }
  return best;
}

}  // namespace

TEST(Lp, BoundOnly) {
  LinearProgram lp;
  lp.add_var(1, kInf, 1.0);
  const auto s = solve_lp(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_EQ(s.value, 1.0);
  EXPECT_EQ(s.reduced_costs[0], 1.0);
  EXPECT_EQ(s.fingerprint, (std::vector<std::int64_t>{0}));
  expect_kkt(lp, s);
}

TEST(Lp, TwoVariableEqualityDual) {
  LinearProgram lp;
  lp.add_var(0, kInf, 1.0);
  lp.add_var(0, kInf, 1.0);
  lp.add_eq(row({{0, 1}, {1, 1}}), 1.0);
  const auto s = solve_lp(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.value, 1.0, 1e-12);
  EXPECT_NEAR(s.eq_duals[0], 1.0, 1e-12);
  expect_kkt(lp, s);
}

TEST(Lp, RedundantEqualityIsHandled) {
  LinearProgram lp;
  lp.add_var(0, kInf, 1.0);
  lp.add_var(0, kInf, 2.0);
  lp.add_eq(row({{0, 1}, {1, 1}}), 1.0);
  lp.add_eq(row({{0, 2}, {1, 2}}), 2.0);
  const auto s = solve_lp(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.value, 1.0, 1e-12);
  expect_kkt(lp, s);
}

TEST(Lp, InfeasibleAndUnbounded) {
  LinearProgram a;
  a.add_var(0, 1, 1.0);
  a.add_le(row({{0, -1}}), -2.0);
  EXPECT_EQ(solve_lp(a).status, LpStatus::Infeasible);

  LinearProgram b;
  b.add_var(-kInf, kInf, 1.0);
  b.add_var(0, kInf, 0.0);
  b.add_le(row({{0, 1}, {1, -1}}), 0.0);
  EXPECT_EQ(solve_lp(b).status, LpStatus::Unbounded);
}

TEST(Lp, IterationLimitIsReported) {
  Rng rng(3);
  LinearProgram lp;
  for (int j = 0; j < 10; ++j) lp.add_var(0, 10, -rng.uniform(0.1, 1));
  for (int i = 0; i < 10; ++i) {
    SparseRow r;
    for (int j = 0; j < 10; ++j) r.add(j, rng.uniform(0.1, 1));
    lp.add_le(r, 1.0);
  }
  LpLimits lim;
  lim.max_iterations = 1;
  EXPECT_EQ(solve_lp(lp, lim).status, LpStatus::IterationLimit);
}

TEST(Lp, MaxSenseDuals) {
  // max x + y  s.t. x + 2y <= 4, x <= 3  -> x=3, y=0.5, V=3.5
  LinearProgram lp;
  lp.sense = Sense::Maximize;
  lp.add_var(0, kInf, 1.0);
  lp.add_var(0, kInf, 1.0);
  lp.add_le(row({{0, 1}, {1, 2}}), 4.0);
  lp.add_le(row({{0, 1}}), 3.0);
  const auto s = solve_lp(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.value, 3.5, 1e-12);
  // dV/dh = (0.5, 0.5)
  EXPECT_NEAR(s.ineq_duals[0], 0.5, 1e-12);
  EXPECT_NEAR(s.ineq_duals[1], 0.5, 1e-12);
  expect_kkt(lp, s);

  // the negated min problem has V = -3.5 and the same |dV/dh|
  LinearProgram neg = lp;
  neg.sense = Sense::Minimize;
  for (double& c : neg.objective) c = -c;
  const auto t = solve_lp(neg);
  EXPECT_NEAR(t.value, -3.5, 1e-12);
  EXPECT_NEAR(t.ineq_duals[0], 0.5, 1e-12);
}

TEST(Lp, EqualityDualIsSensitivity) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    LinearProgram lp;
    const int n = 6;
    for (int j = 0; j < n; ++j) lp.add_var(-rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(-1, 1));
    SparseRow r;
    for (int j = 0; j < n; ++j) r.add(j, rng.uniform(-1, 1));
    lp.add_eq(r, rng.uniform(-0.2, 0.2));
    for (int i = 0; i < 3; ++i) {
      SparseRow g;
      for (int j = 0; j < n; ++j) g.add(j, rng.uniform(-1, 1));
      lp.add_le(g, rng.uniform(0.5, 1.5));
    }
    const auto s = solve_lp(lp);
    ASSERT_TRUE(s.optimal());
    expect_kkt(lp, s);
    auto p = lp, m = lp;
    p.eq_rhs[0] += 1e-5;
    m.eq_rhs[0] -= 1e-5;
    const auto sp = solve_lp(p), sm = solve_lp(m);
    if (sp.fingerprint != s.fingerprint || sm.fingerprint != s.fingerprint) continue;
    EXPECT_NEAR((sp.value - sm.value) / 2e-5, s.eq_duals[0], 1e-6);
  }
}

TEST(Lp, RandomTwoDimensionalAgainstVertexEnumeration) {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    LinearProgram lp;
    lp.sense = trial % 2 ? Sense::Maximize : Sense::Minimize;
    lp.add_var(-rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(-1, 1));
    lp.add_var(-rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(-1, 1));
    for (int i = 0; i < 4; ++i) lp.add_le(row({{0, rng.uniform(-1, 1)}, {1, rng.uniform(-1, 1)}}), rng.uniform(0, 1));
    const auto s = solve_lp(lp);
    ASSERT_TRUE(s.optimal()) << trial;
    EXPECT_NEAR(s.value, brute_force_2d(lp), 1e-9) << trial;
    expect_kkt(lp, s);
  }
}

TEST(Lp, DegenerateCyclingProneInstance) {
  // Beale's classic cycling example (max form) with bounds.
  LinearProgram lp;
  lp.sense = Sense::Minimize;
  lp.add_var(0, kInf, -0.75);
  lp.add_var(0, kInf, 150);
  lp.add_var(0, kInf, -0.02);
  lp.add_var(0, kInf, 6);
  lp.add_le(row({{0, 0.25}, {1, -60}, {2, -0.04}, {3, 9}}), 0);
  lp.add_le(row({{0, 0.5}, {1, -90}, {2, -0.02}, {3, 3}}), 0);
  lp.add_le(row({{2, 1}}), 1);
  const auto s = solve_lp(lp);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.value, -0.05, 1e-12);
  expect_kkt(lp, s);
}

TEST(Lp, BlandFallbackStillSolves) {
  Rng rng(4);
  LinearProgram lp;
  for (int j = 0; j < 8; ++j) lp.add_var(0, kInf, -rng.uniform(0, 1));
  for (int i = 0; i < 8; ++i) {
    SparseRow r;
    for (int j = 0; j < 8; ++j) r.add(j, rng.uniform(0, 1));
    lp.add_le(r, i < 4 ? 0.0 : 1.0);
  }
  LpLimits lim;
  lim.bland_after = 0;
  const auto a = solve_lp(lp, lim);
  const auto b = solve_lp(lp);
  ASSERT_TRUE(a.optimal());
  EXPECT_TRUE(a.used_bland);
  EXPECT_NEAR(a.value, b.value, 1e-12);
  expect_kkt(lp, a);
}

TEST(Lp, FreeVariablesAndDeterminism) {
  LinearProgram lp;
  lp.add_var(-kInf, kInf, 0.0);
  lp.add_var(-kInf, kInf, 1.0);
  lp.add_le(row({{0, 1}, {1, -1}}), 1);
  lp.add_le(row({{0, -1}, {1, -1}}), 1);
  const auto a = solve_lp(lp), b = solve_lp(lp);
  ASSERT_TRUE(a.optimal());
  EXPECT_NEAR(a.value, -1.0, 1e-12);
  EXPECT_EQ(a.primal, b.primal);
  EXPECT_EQ(a.eq_duals, b.eq_duals);
  expect_kkt(lp, a);
}

TEST(Lp, ExportsLpFormat) {
  LinearProgram lp;
  lp.add_var(0, 1, 2.0);
  lp.add_var(-kInf, kInf, -1.0);
  lp.add_eq(row({{0, 1}, {1, 1}}), 1);
  const std::string s = lp.to_lp_format();
  EXPECT_NE(s.find("Minimize"), std::string::npos);
  EXPECT_NE(s.find("y1 free"), std::string::npos);
  EXPECT_NE(s.find("e0:"), std::string::npos);
}
