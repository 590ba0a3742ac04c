#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace penpath;
using penpath::testing::random_sized_problem;

TEST(Oracle, ToyEnumeration) {
  const QpProblem p = penpath::testing::toy_problem();
  const auto o = oracle::solve_constrained_enumeration(p);
  EXPECT_NEAR(o.x(0), 0.3787, 1e-4);
  EXPECT_NEAR(o.x(1), 0.6213, 1e-4);
  EXPECT_EQ(o.active_set, (std::vector<Index>{2}));
  EXPECT_LE(oracle::kkt_residual(p, o), 1e-9);
  for (Index j = 0; j < 3; ++j) EXPECT_GE(o.multipliers(j), -1e-10);
}

TEST(Oracle, StrictlyFeasibleUnconstrained) {
  MatrixXd W(1, 2);
  W << 1, 1;
  const QpProblem p = make_problem(MatrixXd::Identity(2, 2), Eigen::Vector2d(-0.2, -0.3), 0.0, MatrixXd(0, 2),
                                   VectorXd(0), W, VectorXd::Ones(1));
  const auto o = oracle::solve_constrained_enumeration(p);
  EXPECT_TRUE(o.active_set.empty());
  EXPECT_LE(max_abs(o.x - Eigen::Vector2d(0.2, 0.3)), 1e-14);
}

TEST(Oracle, InfeasibleSystem) {
  MatrixXd W(2, 1);
  W << 1, -1;
  const QpProblem p =
      make_problem(MatrixXd::Identity(1, 1), VectorXd::Zero(1), 0.0, MatrixXd(0, 1), VectorXd(0), W,
                   Eigen::Vector2d(-1, -1));
  try {
    oracle::solve_constrained_enumeration(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Infeasible);
  }
}

TEST(Oracle, Pava) {
  const VectorXd fit = oracle::pava_isotone(penpath::testing::fish_y(), VectorXd::Ones(5));
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(fit(i), 1.2772 / 4.0, 1e-12);
  EXPECT_NEAR(fit(4), 0.5327, 1e-15);
  const VectorXd sorted = Eigen::Vector3d(1, 2, 3);
  EXPECT_EQ(oracle::pava_isotone(sorted, VectorXd::Ones(3)), sorted);
  const VectorXd rev = Eigen::Vector3d(3, 2, 1);
  const VectorXd w = Eigen::Vector3d(1, 2, 3);
  const VectorXd pooled = oracle::pava_isotone(rev, w);
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(pooled(i), 10.0 / 6.0, 1e-15);
  EXPECT_THROW(oracle::pava_isotone(rev, Eigen::Vector3d(1, -1, 1)), Error);
}

TEST(Oracle, PavaMatchesEnumerationOnIsotoneProblems) {
  std::mt19937_64 rng(67);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 3 + static_cast<Index>(rng() % 6);
    const VectorXd y = penpath::testing::random_matrix(rng, n, 1).col(0);
    const VectorXd w = penpath::testing::random_matrix(rng, n, 1).col(0).cwiseAbs().array() + 0.1;
    const QpProblem p = weighted_mean_fit_problem(y, w, ShapeSpec{});
    const auto o = oracle::solve_constrained_enumeration(p);
    EXPECT_LE(max_abs(o.x - oracle::pava_isotone(y, w)), 1e-9);
  }
}

TEST(Oracle, PenalizedAtZero) {
  const QpProblem p = penpath::testing::toy_problem();
  const VectorXd x = oracle::minimize_penalized_grid(p, 0.0, VectorXd::Zero(2));
  EXPECT_LE(max_abs(p.A() * x + p.b()), 1e-12);
}

TEST(Oracle, PenalizedToyMatchesPath) {
  const QpProblem p = penpath::testing::toy_problem();
  const SolutionPath path = solve_path(p);
  const VectorXd x = oracle::minimize_penalized_grid(p, 0.1, VectorXd::Zero(2));
  EXPECT_LE(max_abs(x - eval_at(path, 0.1)), 1e-5);
}

TEST(Oracle, LargeRhoMatchesConstrained) {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const QpProblem p = random_sized_problem(rng);
    const auto o = oracle::solve_constrained_enumeration(p);
    const double rho = 10.0 * (1.0 + max_abs(o.multipliers));
    const VectorXd x = oracle::minimize_penalized_grid(p, rho, VectorXd::Zero(p.m()));
    EXPECT_LE(max_abs(x - o.x), 1e-5);
  }
}

TEST(Oracle, AgreesWithPathOnRandomProblems) {
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const QpProblem p = random_sized_problem(rng);
    const SolutionPath path = solve_path(p);
    const auto o = oracle::solve_constrained_enumeration(p);
    EXPECT_LE(max_abs(path.terminal_x - o.x), 1e-6);
    EXPECT_LE(oracle::kkt_residual(p, o), 1e-8 * (1.0 + max_abs(p.A()) + max_abs(p.b())));
    for (int k = 0; k < 5; ++k) {
      const double rho = U(rng) * 1.2 * std::max(path.terminal_rho, 0.1);
      const VectorXd xp = eval_at(path, rho);
      EXPECT_LE(max_abs(xp - oracle::minimize_penalized_grid(p, rho, VectorXd::Zero(p.m()))), 1e-5);
    }
  }
}
