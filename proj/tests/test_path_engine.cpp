#include <gtest/gtest.h>

#include <optional>
#include <random>

#include "test_support.hpp"

using namespace penpath;
using penpath::testing::random_matrix;
using penpath::testing::random_sized_problem;
using penpath::testing::toy_problem;

namespace {

MatrixXd none(Index m) { return MatrixXd(0, m); }

double bisect(auto&& f, double lo, double hi) {
  double flo = f(lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Path invariants shared by fixture and random problems.
void check_path_structure(const QpProblem& p, const SolutionPath& path) {
  ASSERT_FALSE(path.segments.empty());
  const double xs = penpath::testing::rel_scale(path.terminal_x);
  for (std::size_t k = 0; k + 1 < path.segments.size(); ++k) {
    const auto& seg = path.segments[k];
    const auto& next = path.segments[k + 1];
    EXPECT_EQ(seg.rho_end, next.rho_start);
    EXPECT_LE(max_abs(seg.x_end() - next.x_start), 1e-8 * (1.0 + max_abs(seg.x_end())));
    const double mid = 0.5 * (seg.rho_start + seg.rho_end);
    const VectorXd avg = 0.5 * (eval_at(path, seg.rho_start) + seg.x_end());
    EXPECT_LE(max_abs(eval_at(path, mid) - avg), 1e-10 * xs);
    if (seg.event && seg.event->moves.size() == 1) {
      EXPECT_EQ(std::abs(next.df - seg.df), 1);
    }
  }
  EXPECT_TRUE(path.segments.back().terminal());
  EXPECT_LE(p.max_violation(path.terminal_x), 1e-8);
  EXPECT_LE(path.max_junction_drift, 1e-9 * xs);
}

}  // namespace

TEST(PathEngine, InitialTableauLayout) {
  const QpProblem p = toy_problem();
  const MatrixXd T = build_initial_tableau(p).to_matrix();
  ASSERT_EQ(T.rows(), 6);
  MatrixXd want(6, 6);
  want << -4, -2.05, 1, 0, -1, -3,  //
      -2.05, -1.2025, 0, 1, -1, -1.735,  //
      1, 0, 0, 0, 0, 0,                  //
      0, 1, 0, 0, 0, 0,                  //
      -1, -1, 0, 0, 0, -1,               //
      -3, -1.735, 0, 0, -1, 0;
  EXPECT_LE(max_abs(T - want), 1e-12);
}

TEST(PathEngine, UnconstrainedTableau) {
  MatrixXd A(2, 2);
  A << 2, 1, 1, 3;
  const QpProblem p = make_problem(A, Eigen::Vector2d(1, -1), 0.0, none(2), VectorXd(0), none(2), VectorXd(0));
  const MatrixXd T = build_initial_tableau(p).to_matrix();
  ASSERT_EQ(T.rows(), 3);
  EXPECT_TRUE(T.topLeftCorner(2, 2).isApprox(-A));
  EXPECT_EQ(T(2, 0), 1.0);
  EXPECT_EQ(T(2, 1), -1.0);
  EXPECT_EQ(T(2, 2), 0.0);
}

TEST(PathEngine, InitialTableauRoundTripsInputs) {
  std::mt19937_64 rng(1);
  const QpProblem p = penpath::testing::random_problem(rng, 4, 2, 3);
  const MatrixXd T = build_initial_tableau(p).to_matrix();
  EXPECT_EQ(max_abs(T.topLeftCorner(4, 4) + p.A()), 0.0);
  EXPECT_EQ(max_abs(T.block(4, 0, 5, 4) + p.U()), 0.0);
  EXPECT_EQ(max_abs(T.block(9, 0, 1, 4).transpose() - p.b()), 0.0);
  EXPECT_EQ(max_abs(T.block(9, 4, 1, 5).transpose() + p.rhs()), 0.0);
  EXPECT_EQ(max_abs(T.block(4, 4, 5, 5)), 0.0);
}

TEST(PathEngine, ToyInitialState) {
  const PathState st = initialize_path(toy_problem());
  EXPECT_NEAR(st.x(0), 0.0835, 1e-4);
  EXPECT_NEAR(st.x(1), 1.3004, 1e-4);
  const SegmentGeometry g = segment_geometry(st);
  EXPECT_NEAR(g.level(0), -0.0835, 1e-4);
  EXPECT_NEAR(g.level(1), -1.3004, 1e-4);
  EXPECT_NEAR(g.level(2), 0.3840, 1e-4);
  const IndexSets sets = st.sets();
  EXPECT_EQ(sets.N_I, (std::vector<Index>{0, 1}));
  EXPECT_TRUE(sets.Z_I.empty());
  EXPECT_EQ(sets.P_I, (std::vector<Index>{2}));
  // x(rho) = x(0) - rho * (-1.3951, 3.2099)
  EXPECT_NEAR(g.slope(0), 1.3951, 1e-4);
  EXPECT_NEAR(g.slope(1), -3.2099, 1e-4);
}

TEST(PathEngine, ToyHittingTimes) {
  const PathState st = initialize_path(toy_problem());
  const SegmentGeometry g = segment_geometry(st);
  const double want[] = {-0.0599, 0.4051, 0.2116};
  for (Index j = 0; j < 3; ++j) {
    const auto raw = hitting_time_raw(st, j, g);
    ASSERT_TRUE(raw.has_value());
    EXPECT_NEAR(*raw, want[j], 1e-4);
  }
  EXPECT_FALSE(hitting_time(st, 0).has_value());
  EXPECT_NEAR(*hitting_time(st, 1), 0.4051, 1e-4);
  EXPECT_NEAR(*hitting_time(st, 2), 0.2116, 1e-4);
}

TEST(PathEngine, ToyFirstAdvance) {
  PathState st = initialize_path(toy_problem());
  const PathSegment seg = advance_segment(st);
  EXPECT_NEAR(seg.rho_end, 0.2116, 1e-4);
  ASSERT_TRUE(seg.event.has_value());
  EXPECT_EQ(seg.event->kind, PathEvent::Kind::Hit);
  ASSERT_EQ(seg.event->moves.size(), 1u);
  EXPECT_EQ(seg.event->moves[0].constraint, 2);
  EXPECT_NEAR(st.x(0), 0.3787, 1e-4);
  EXPECT_NEAR(st.x(1), 0.6213, 1e-4);
  EXPECT_TRUE(st.terminal());
  const SegmentGeometry g = segment_geometry(st);
  EXPECT_TRUE(escape_times(st, 2, g).empty());
  EXPECT_THROW(advance_segment(st), Error);
}

TEST(PathEngine, ToySolvePath) {
  const QpProblem p = toy_problem();
  const SolutionPath path = solve_path(p);
  ASSERT_EQ(path.segments.size(), 2u);
  EXPECT_NEAR(path.terminal_rho, 0.2116, 1e-4);
  EXPECT_NEAR(path.terminal_x(0), 0.3787, 1e-4);
  EXPECT_NEAR(path.terminal_x(1), 0.6213, 1e-4);
  EXPECT_EQ(path.segments[0].df, 2);
  EXPECT_EQ(path.segments[1].df, 1);
  EXPECT_TRUE(path.anomaly_log.empty());
  check_path_structure(p, path);
}

TEST(PathEngine, ToyEvalAt) {
  const SolutionPath path = solve_path(toy_problem());
  const VectorXd x0 = eval_at(path, 0.0);
  EXPECT_NEAR(x0(0), 0.0835, 1e-4);
  EXPECT_NEAR(x0(1), 1.3004, 1e-4);
  const VectorXd x1 = eval_at(path, 0.1);
  EXPECT_NEAR(x1(0), 0.2230, 1e-4);
  EXPECT_NEAR(x1(1), 0.9794, 1e-4);
  const VectorXd x10 = eval_at(path, 10.0);
  EXPECT_NEAR(x10(0), 0.3787, 1e-4);
  EXPECT_NEAR(x10(1), 0.6213, 1e-4);
  EXPECT_THROW(eval_at(path, -1.0), Error);
}

TEST(PathEngine, StrictlyFeasibleStart) {
  MatrixXd W(1, 2);
  W << 1, 1;
  const QpProblem p = make_problem(MatrixXd::Identity(2, 2), Eigen::Vector2d(-0.1, -0.2), 0.0, none(2),
                                   VectorXd(0), W, VectorXd::Ones(1));
  PathState st = initialize_path(p);
  EXPECT_TRUE(st.terminal());
  EXPECT_FALSE(hitting_time(st, 0).has_value());
  try {
    advance_segment(st);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoFurtherEvents);
  }
  const SolutionPath path = solve_path(p);
  ASSERT_EQ(path.segments.size(), 1u);
  EXPECT_TRUE(path.terminal_x.isApprox(Eigen::Vector2d(0.1, 0.2)));
}

TEST(PathEngine, EqualityAlreadySatisfied) {
  MatrixXd V(1, 2);
  V << 1, -1;
  const QpProblem p = make_problem(MatrixXd::Identity(2, 2), Eigen::Vector2d(-1, -2), 0.0, V,
                                   VectorXd::Constant(1, -1.0), none(2), VectorXd(0));
  const SolutionPath path = solve_path(p);
  ASSERT_EQ(path.segments.size(), 1u);
  EXPECT_LE(max_abs(path.terminal_x - Eigen::Vector2d(1, 2)), 1e-12);
}

TEST(PathEngine, UnitUbarHasNoHittingTime) {
  MatrixXd W(2, 2);
  W << 1, 0, 0, 1;
  const QpProblem p = make_problem(MatrixXd::Identity(2, 2), Eigen::Vector2d(1, 1), 0.0, none(2), VectorXd(0), W,
                                   VectorXd::Ones(2));
  const PathState st = initialize_path(p);
  const SegmentGeometry g = segment_geometry(st);
  EXPECT_EQ(max_abs(g.slope), 0.0);
  EXPECT_FALSE(hitting_time(st, 0, g).has_value());
  EXPECT_FALSE(hitting_time(st, 1, g).has_value());
}

TEST(PathEngine, HittingTimesMatchBisection) {
  std::mt19937_64 rng(31);
  int checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const QpProblem p = random_sized_problem(rng);
    PathState st = initialize_path(p);
    for (int step = 0; step < 3 && !st.terminal(); ++step) {
      const SegmentGeometry g = segment_geometry(st);
      for (Index j = 0; j < st.num_constraints(); ++j) {
        if (st.status[static_cast<std::size_t>(j)] == ConstraintStatus::Zero) continue;
        const auto t = hitting_time(st, j, g);
        if (!t) continue;
        auto residual = [&](double rho) {
          const VectorXd x = g.intercept + rho * g.slope;
          return p.U().row(j).dot(x) - p.rhs()(j);
        };
        const double root = bisect(residual, st.rho, *t * 2.0 + 1.0);
        EXPECT_NEAR(root, *t, 1e-8 * (1.0 + *t));
        ++checked;
      }
      try {
        advance_segment(st);
      } catch (const Error&) {
        break;
      }
    }
  }
  EXPECT_GT(checked, 20);
}

TEST(PathEngine, EscapeTimesMatchBisectionAndClosedForm) {
  std::mt19937_64 rng(37);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const QpProblem p = random_sized_problem(rng);
    PathState st = initialize_path(p);
    for (int step = 0; step < 8 && !st.terminal(); ++step) {
      const SegmentGeometry g = segment_geometry(st);
      const auto z = st.active();
      if (st.rho > 0.0 && !z.empty()) {
        const double rho_new = st.rho * 1.3;
        EXPECT_LE(max_abs(coefficient_update(st, rho_new, g) - coefficients_at(st, rho_new, g)), 1e-10);
        EXPECT_LE(max_abs(coefficient_update(st, st.rho, g) - st.r_Z()), 1e-9);
      }
      for (std::size_t k = 0; k < z.size(); ++k) {
        const Index j = z[k];
        for (double t : escape_times(st, j, g)) {
          const double target = g.level(j) < 0.0 ? st.upper(j) : st.lower(j);
          auto gap = [&](double rho) { return coefficients_at(st, rho, g)(static_cast<Index>(k)) - target; };
          const double lo = std::max(st.rho, 1e-12);
          const double root = bisect(gap, lo, t * 4.0 + 1.0);
          EXPECT_NEAR(root, t, 1e-8 * (1.0 + t));
          ++checked;
        }
      }
      try {
        advance_segment(st);
      } catch (const Error&) {
        break;
      }
    }
  }
  EXPECT_GT(checked, 5);
}

TEST(PathEngine, CoefficientUpdateLimits) {
  const QpProblem p = toy_problem();
  PathState st = initialize_path(p);
  advance_segment(st);
  const SegmentGeometry g = segment_geometry(st);
  EXPECT_LE(max_abs(coefficient_update(st, st.rho, g) - st.r_Z()), 1e-12);
  const VectorXd far = coefficient_update(st, 1e12, g);
  EXPECT_NEAR(far(0), -g.rate(2), 1e-10);
}

TEST(PathEngine, TightAtStartMatchesPenalizedOracle) {
  // x(0) = (1, 1); the first constraint passes exactly through it.
  MatrixXd A(2, 2);
  A << 2, 0.5, 0.5, 1;
  const VectorXd b = -A * Eigen::Vector2d(1, 1);
  MatrixXd W(2, 2);
  W << 1, 1, -1, 2;
  const QpProblem p = make_problem(A, b, 0.0, none(2), VectorXd(0), W, Eigen::Vector2d(2, 0.5));
  const SolutionPath path = solve_path(p);
  ASSERT_FALSE(path.anomaly_log.empty());
  for (double rho : {1e-4, 0.05, 0.5, 3.0}) {
    const VectorXd x = eval_at(path, rho);
    const VectorXd xo = oracle::minimize_penalized_grid(p, rho, x);
    EXPECT_LE(max_abs(x - xo), 1e-7) << rho;
  }
  const auto o = oracle::solve_constrained_enumeration(p);
  EXPECT_LE(max_abs(path.terminal_x - o.x), 1e-8);
}

TEST(PathEngine, TightEqualityAtStart) {
  MatrixXd V(1, 2);
  V << 1, 2;
  MatrixXd W(1, 2);
  W << 1, 0;
  const QpProblem p = make_problem(MatrixXd::Identity(2, 2), Eigen::Vector2d(-1, -1), 0.0, V,
                                   VectorXd::Constant(1, 3.0), W, VectorXd::Constant(1, 0.5));
  const SolutionPath path = solve_path(p);
  for (double rho : {1e-4, 0.3, 2.0}) {
    const VectorXd x = eval_at(path, rho);
    EXPECT_LE(max_abs(x - oracle::minimize_penalized_grid(p, rho, x)), 1e-7) << rho;
  }
  EXPECT_LE(max_abs(path.terminal_x - oracle::solve_constrained_enumeration(p).x), 1e-8);
}

TEST(PathEngine, SymmetricTieIsResolved) {
  MatrixXd W(2, 2);
  W << 1, 0, 0, 1;
  const QpProblem p = make_problem(MatrixXd::Identity(2, 2), Eigen::Vector2d(-2, -2), 0.0, none(2), VectorXd(0), W,
                                   VectorXd::Ones(2));
  const SolutionPath path = solve_path(p);
  ASSERT_EQ(path.segments.size(), 2u);
  EXPECT_NEAR(path.segments[0].rho_end, 1.0, 1e-12);
  ASSERT_TRUE(path.segments[0].event.has_value());
  EXPECT_EQ(path.segments[0].event->moves.size(), 2u);
  EXPECT_EQ(path.segments[1].df, 0);
  EXPECT_FALSE(path.anomaly_log.empty());
  for (double rho : {0.5, 1.0 + 1e-6, 2.0}) {
    const VectorXd x = eval_at(path, rho);
    EXPECT_LE(max_abs(x - oracle::minimize_penalized_grid(p, rho, x)), 1e-9) << rho;
  }
}

TEST(PathEngine, EscapeEventOccurs) {
  std::mt19937_64 rng(41);
  int escapes = 0;
  for (int trial = 0; trial < 200 && escapes == 0; ++trial) {
    const QpProblem p = random_sized_problem(rng);
    const SolutionPath path = solve_path(p);
    for (const auto& seg : path.segments) {
      if (seg.event && seg.event->kind == PathEvent::Kind::Escape) ++escapes;
    }
    check_path_structure(p, path);
  }
  EXPECT_GT(escapes, 0);
}

TEST(PathEngine, MaxSegments) {
  PathOptions opts;
  opts.max_segments = 0;
  try {
    solve_path(toy_problem(), opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MaxSegmentsExceeded);
  }
}

TEST(PathEngine, RandomProblemInvariants) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const QpProblem p = random_sized_problem(rng, 8, 8);
    const SolutionPath path = solve_path(p);
    check_path_structure(p, path);
    EXPECT_LE(max_abs(path.terminal_x - oracle::solve_constrained_enumeration(p).x), 1e-6);

    const double scale = 1.0 + max_abs(p.A()) + max_abs(p.b());
    const double rho_hi = std::max(path.terminal_rho * 1.5, 1.0);
    for (int k = 0; k < 50; ++k) {
      const double rho = 1e-6 + U(rng) * rho_hi;
      const VectorXd x = eval_at(path, rho);
      const auto coef = recover_coefficients(p, x, rho, 1e-9 * (1.0 + max_abs(p.rhs())));
      const VectorXd res = stationarity_residual(p, x, rho, coef, 1e-7);
      EXPECT_LE(res.norm(), 1e-7 * scale) << "rho=" << rho;
      if (k < 2) {
        const double fx = penalized_objective(p, x, rho);
        for (int q = 0; q < 100; ++q) {
          VectorXd z = x;
          for (Index i = 0; i < z.size(); ++i) z(i) += 1e-2 * N(rng);
          EXPECT_LE(fx, penalized_objective(p, z, rho) + 1e-7);
        }
      }
    }
  }
}

TEST(PathEngine, DegenerateIntegerProblems) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> I(-2, 2);
  int solved = 0;
  for (int t = 0; t < 1500; ++t) {
    const Index m = 2 + static_cast<Index>(rng() % 4);
    Index r = static_cast<Index>(rng() % 2);
    const Index s = static_cast<Index>(rng() % 7);
    if (r >= m) r = m - 1;
    auto draw = [&](Index rows, Index cols) {
      MatrixXd M(rows, cols);
      for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) M(i, j) = I(rng);
      return M;
    };
    const MatrixXd G = draw(m, m);
    const MatrixXd A = G.transpose() * G + MatrixXd::Identity(m, m);
    const VectorXd b = draw(m, 1);
    const MatrixXd V = draw(r, m);
    const MatrixXd W = draw(s, m);
    const VectorXd d = draw(r, 1);
    const VectorXd e = draw(s, 1).array() + 2.0;
    std::optional<QpProblem> p;
    oracle::OracleSolution o;
    try {
      p.emplace(make_problem(A, b, 0.0, V, d, W, e));
      o = oracle::solve_constrained_enumeration(*p);
    } catch (const Error&) {
      continue;
    }
    const SolutionPath path = solve_path(*p);
    EXPECT_LE(max_abs(path.terminal_x - o.x), 1e-8) << "trial " << t;
    const double rho = 0.5 * std::max(path.terminal_rho, 0.1);
    const VectorXd x = eval_at(path, rho);
    EXPECT_LE(max_abs(x - oracle::minimize_penalized_grid(*p, rho, x)), 1e-7) << "trial " << t;
    ++solved;
  }
  EXPECT_GT(solved, 1000);
}
