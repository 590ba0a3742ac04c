#pragma once

// Brute-force reference solvers for verification. None of them touch the
// sweep tableau: linear algebra goes through Eigen factorizations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "penpath/errors.hpp"
#include "penpath/qp_model.hpp"

namespace penpath::oracle {

struct OracleSolution {
  VectorXd x;
  std::vector<Index> active_set;  // global constraint indices
  VectorXd multipliers;           // one per constraint, zero when inactive
  double objective = 0.0;
};

/// Constrained minimizer by enumerating every subset of inequality
/// constraints held at equality. Each subset gives an equality-constrained
/// KKT system; the answer is the cheapest feasible KKT point with
/// nonnegative inequality multipliers.
inline OracleSolution solve_constrained_enumeration(const QpProblem& p, double feas_tol = 1e-9) {
  const Index m = p.m();
  const Index r = p.r();
  const Index s = p.s();
  if (s > 20) throw Error(ErrorCode::InvalidArgument, "enumeration limited to 20 inequalities");

  OracleSolution best;
  best.objective = std::numeric_limits<double>::infinity();
  const double xscale = 1.0 + max_abs(p.rhs());

  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << s); ++mask) {
    std::vector<Index> rows;
    for (Index i = 0; i < r; ++i) rows.push_back(i);
    for (Index j = 0; j < s; ++j) {
      if ((mask >> j) & 1u) rows.push_back(r + j);
    }
    const Index k = static_cast<Index>(rows.size());
    if (k > m) continue;
    MatrixXd Uk(k, m);
    VectorXd ck(k);
    for (Index a = 0; a < k; ++a) {
      Uk.row(a) = p.U().row(rows[static_cast<std::size_t>(a)]);
      ck(a) = p.rhs()(rows[static_cast<std::size_t>(a)]);
    }
    if (k > 0) {
      Eigen::FullPivLU<MatrixXd> lu(Uk);
      lu.setThreshold(1e-10);
      if (lu.rank() < k) continue;
    }
    MatrixXd K = MatrixXd::Zero(m + k, m + k);
    K.topLeftCorner(m, m) = p.A();
    K.topRightCorner(m, k) = Uk.transpose();
    K.bottomLeftCorner(k, m) = Uk;
    VectorXd rhs(m + k);
    rhs << -p.b(), ck;
    const VectorXd sol = K.fullPivLu().solve(rhs);
    const VectorXd x = sol.head(m);
    const VectorXd lam = sol.tail(k);

    bool ok = p.max_violation(x) <= feas_tol * xscale;
    for (Index a = r; a < k && ok; ++a) ok = lam(a) >= -1e-10 * (1.0 + max_abs(lam));
    if (!ok) continue;
    const double obj = p.objective(x);
    if (obj < best.objective) {
      best.objective = obj;
      best.x = x;
      best.active_set = rows;
      best.multipliers = VectorXd::Zero(p.num_constraints());
      for (Index a = 0; a < k; ++a) best.multipliers(rows[static_cast<std::size_t>(a)]) = lam(a);
    }
  }
  if (!std::isfinite(best.objective)) {
    throw Error(ErrorCode::Infeasible, "no subset of constraints yields a feasible KKT point");
  }
  return best;
}

/// Minimizer of the penalized objective E_rho at fixed rho. Solved through
/// its dual, a concave quadratic over the box mu_i in [-rho, rho]
/// (equalities) and mu_j in [0, rho] (inequalities), by exact cyclic
/// coordinate ascent; x = -A^{-1}(b + U'mu). The starting multipliers are
/// recovered from x0 by least squares and clipped to the box.
inline VectorXd minimize_penalized_grid(const QpProblem& p, double rho, const VectorXd& x0,
                                   double tol = 1e-13, int max_sweeps = 200000) {
  const Index n = p.num_constraints();
  const Eigen::LDLT<MatrixXd> chol(p.A());
  if (n == 0 || rho == 0.0) return chol.solve(-p.b());

  const MatrixXd AinvUt = chol.solve(p.U().transpose());
  const MatrixXd H = p.U() * AinvUt;                   // dual Hessian (negated)
  const VectorXd g0 = p.U() * chol.solve(-p.b()) - p.rhs();  // dual gradient at mu = 0

  VectorXd mu = VectorXd::Zero(n);
  if (x0.size() == p.m()) {
    const MatrixXd& U = p.U();
    mu = (U * U.transpose()).ldlt().solve(-(U * (p.A() * x0 + p.b())));
  }
  auto lo = [&](Index i) { return p.is_equality(i) ? -rho : 0.0; };
  for (Index i = 0; i < n; ++i) mu(i) = std::clamp(mu(i), lo(i), rho);

  // grad_i = g0_i - (H mu)_i ; maximize over coordinate i exactly.
  VectorXd grad = g0 - H * mu;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double biggest = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double step = grad(i) / H(i, i);
      const double next = std::clamp(mu(i) + step, lo(i), rho);
      const double delta = next - mu(i);
      if (delta != 0.0) {
        grad -= H.col(i) * delta;
        mu(i) = next;
        biggest = std::max(biggest, std::abs(delta));
      }
    }
    if (biggest <= tol * (1.0 + rho)) return -AinvUt * mu + chol.solve(-p.b());
  }
  throw Error(ErrorCode::NonConvergence, "dual coordinate ascent hit its sweep limit");
}

/// Weighted isotone regression by pooling adjacent violators.
inline VectorXd pava_isotone(const VectorXd& y, const VectorXd& weights) {
  const Index n = y.size();
  if (weights.size() != n) throw Error(ErrorCode::DimensionMismatch, "weights length differs from y");
  for (Index i = 0; i < n; ++i) {
    if (!(weights(i) > 0.0)) throw Error(ErrorCode::NonpositiveWeight, "PAVA weights must be positive");
  }
  struct Block {
    double mean;
    double weight;
    Index count;
  };
  std::vector<Block> blocks;
  for (Index i = 0; i < n; ++i) {
    blocks.push_back({y(i), weights(i), 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
      Block top = blocks.back();
      blocks.pop_back();
      Block& prev = blocks.back();
      const double w = prev.weight + top.weight;
      prev.mean = (prev.mean * prev.weight + top.mean * top.weight) / w;
      prev.weight = w;
      prev.count += top.count;
    }
  }
  VectorXd out(n);
  Index pos = 0;
  for (const auto& b : blocks) {
    for (Index k = 0; k < b.count; ++k) out(pos++) = b.mean;
  }
  return out;
}

/// Norm of the KKT residual of a candidate solution (stationarity,
/// primal feasibility, complementarity).
inline double kkt_residual(const QpProblem& p, const OracleSolution& sol) {
  const VectorXd grad = p.A() * sol.x + p.b() + p.U().transpose() * sol.multipliers;
  const VectorXd res = p.residuals(sol.x);
  double comp = 0.0;
  for (Index j = p.r(); j < p.num_constraints(); ++j) comp = std::max(comp, std::abs(sol.multipliers(j) * res(j)));
  return std::max({max_abs(grad), p.max_violation(sol.x), comp});
}

}  // namespace penpath::oracle
