#pragma once

// Strictly convex quadratic programs
//
//   minimize   f(x) = 1/2 x'Ax + b'x + c
//   subject to Vx = d,  Wx <= e
//
// together with the exact penalty objective
//
//   E_rho(x) = f(x) + rho * sum_i |v_i'x - d_i| + rho * sum_j (w_j'x - e_j)_+
//
// whose minimizers x(rho) the path engine follows.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "penpath/errors.hpp"
#include "penpath/sym_sweep.hpp"

namespace penpath {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Least-squares origin of a problem: A = X'diag(w)X, b = -X'diag(w)y.
struct Provenance {
  MatrixXd X;
  VectorXd y;
  VectorXd weights;

  Index n() const { return X.rows(); }
};

struct ProblemOptions {
  /// Reject constraint systems whose stacked rows [V; W] have rank below
  /// min(r + s, m), or that contain two rows on the same hyperplane. More
  /// than m rows are accepted as long as they span R^m. Grid partial orders
  /// are dependent by construction and turn this off; the path engine never
  /// sweeps a row that is redundant given the active set.
  bool require_independent_constraints = true;
  double rank_tolerance = 1e-10;
  double pivot_tolerance = kDefaultPivotTolerance;
};

class QpProblem {
 public:
  const MatrixXd& A() const noexcept { return A_; }
  const VectorXd& b() const noexcept { return b_; }
  double c() const noexcept { return c_; }
  const MatrixXd& V() const noexcept { return V_; }
  const VectorXd& d() const noexcept { return d_; }
  const MatrixXd& W() const noexcept { return W_; }
  const VectorXd& e() const noexcept { return e_; }

  /// Stacked constraint rows [V; W] and right-hand sides [d; e].
  const MatrixXd& U() const noexcept { return U_; }
  const VectorXd& rhs() const noexcept { return rhs_; }

  Index m() const noexcept { return A_.rows(); }
  Index r() const noexcept { return V_.rows(); }
  Index s() const noexcept { return W_.rows(); }
  Index num_constraints() const noexcept { return U_.rows(); }
  bool is_equality(Index constraint) const noexcept { return constraint < r(); }

  bool has_provenance() const noexcept { return provenance_.has_value(); }
  const Provenance& provenance() const {
    if (!provenance_) {
      throw Error(ErrorCode::MissingProvenance, "problem was not built from a design matrix");
    }
    return *provenance_;
  }

  bool constraints_independent() const noexcept { return independent_; }

  /// Quadratic objective f(x) without penalty terms.
  double objective(const VectorXd& x) const { return 0.5 * x.dot(A_ * x) + b_.dot(x) + c_; }

  /// Constraint residuals Ux - [d; e].
  VectorXd residuals(const VectorXd& x) const { return U_ * x - rhs_; }

  /// Largest violation of the constraint set at x (zero when feasible).
  double max_violation(const VectorXd& x) const {
    double worst = 0.0;
    const VectorXd res = residuals(x);
    for (Index i = 0; i < res.size(); ++i) {
      worst = std::max(worst, is_equality(i) ? std::abs(res(i)) : res(i));
    }
    return worst;
  }

 private:
  friend QpProblem make_problem(MatrixXd, VectorXd, double, MatrixXd, VectorXd, MatrixXd,
                                VectorXd, const ProblemOptions&);
  friend QpProblem least_squares_problem(const MatrixXd&, const VectorXd&,
                                         const std::optional<VectorXd>&, MatrixXd, VectorXd,
                                         MatrixXd, VectorXd, const ProblemOptions&);

  MatrixXd A_;
  VectorXd b_;
  double c_ = 0.0;
  MatrixXd V_;
  VectorXd d_;
  MatrixXd W_;
  VectorXd e_;
  MatrixXd U_;
  VectorXd rhs_;
  std::optional<Provenance> provenance_;
  bool independent_ = true;
};

namespace detail {

inline void require(bool ok, ErrorCode code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

// Numerical rank of the rows of M by column-pivoted QR of M'.
inline Index row_rank(const MatrixXd& M, double rel_tol) {
  if (M.rows() == 0) return 0;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(M.transpose());
  qr.setThreshold(rel_tol);
  return qr.rank();
}

// First pair of rows (u_i, c_i), (u_j, c_j) that are scalar multiples of
// each other, i.e. constraints on the same hyperplane.
inline std::optional<std::pair<Index, Index>> find_coincident_rows(const MatrixXd& U,
                                                                   const VectorXd& rhs,
                                                                   double rel_tol) {
  const Index n = U.rows();
  MatrixXd aug(n, U.cols() + 1);
  aug << U, rhs;
  for (Index i = 0; i < n; ++i) {
    const double ni = aug.row(i).norm();
    if (ni == 0.0) return std::pair<Index, Index>{i, i};
    for (Index j = i + 1; j < n; ++j) {
      const double nj = aug.row(j).norm();
      if (nj == 0.0) continue;
      const double cosine = std::abs(aug.row(i).dot(aug.row(j))) / (ni * nj);
      if (1.0 - cosine <= rel_tol) return std::pair<Index, Index>{i, j};
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Validates and assembles a problem. Empty constraint blocks are passed as
/// 0 x m matrices with empty right-hand sides.
inline QpProblem make_problem(MatrixXd A, VectorXd b, double c, MatrixXd V, VectorXd d,
                              MatrixXd W, VectorXd e, const ProblemOptions& options = {}) {
  using detail::require;
  const Index m = A.rows();
  require(m > 0 && A.cols() == m, ErrorCode::DimensionMismatch, "A must be square and non-empty");
  require(b.size() == m, ErrorCode::DimensionMismatch, "b length differs from A");
  if (V.size() == 0) V.resize(V.rows(), m);
  if (W.size() == 0) W.resize(W.rows(), m);
  require(V.cols() == m, ErrorCode::DimensionMismatch, "V column count differs from A");
  require(W.cols() == m, ErrorCode::DimensionMismatch, "W column count differs from A");
  require(d.size() == V.rows(), ErrorCode::DimensionMismatch, "d length differs from V rows");
  require(e.size() == W.rows(), ErrorCode::DimensionMismatch, "e length differs from W rows");
  require(A.allFinite() && b.allFinite() && std::isfinite(c) && V.allFinite() && d.allFinite() &&
              W.allFinite() && e.allFinite(),
          ErrorCode::InvalidArgument, "non-finite problem data");

  const double scale = std::max(1.0, max_abs(A));
  require(max_abs(A - A.transpose()) <= 1e-12 * scale, ErrorCode::InvalidArgument,
          "A is not symmetric");
  A = 0.5 * (A + A.transpose());

  // Positive definiteness by trial sweep.
  (void)full_sweep_inverse(A, options.pivot_tolerance);

  QpProblem p;
  p.U_.resize(V.rows() + W.rows(), m);
  p.U_ << V, W;
  p.rhs_.resize(d.size() + e.size());
  p.rhs_ << d, e;

  const Index n_con = p.U_.rows();
  const Index rank = detail::row_rank(p.U_, options.rank_tolerance);
  p.independent_ = rank == n_con;
  if (options.require_independent_constraints) {
    if (rank < std::min(n_con, m)) {
      throw Error(ErrorCode::DependentConstraints,
                  "the " + std::to_string(n_con) + " stacked constraint rows have rank " +
                      std::to_string(rank));
    }
    if (auto dup = detail::find_coincident_rows(p.U_, p.rhs_, options.rank_tolerance)) {
      throw Error(ErrorCode::DependentConstraints,
                  "constraint rows " + std::to_string(dup->first) + " and " +
                      std::to_string(dup->second) + " describe the same hyperplane");
    }
  }

  p.A_ = std::move(A);
  p.b_ = std::move(b);
  p.c_ = c;
  p.V_ = std::move(V);
  p.d_ = std::move(d);
  p.W_ = std::move(W);
  p.e_ = std::move(e);
  return p;
}

/// Weighted least squares  1/2 sum_k w_k (y_k - x_k'beta)^2  under affine
/// constraints. Unit weights when none are given.
inline QpProblem least_squares_problem(const MatrixXd& X, const VectorXd& y,
                                       const std::optional<VectorXd>& weights, MatrixXd V,
                                       VectorXd d, MatrixXd W, VectorXd e,
                                       const ProblemOptions& options = {}) {
  using detail::require;
  const Index n = X.rows();
  const Index m = X.cols();
  require(y.size() == n, ErrorCode::DimensionMismatch, "y length differs from X rows");
  VectorXd w = weights.value_or(VectorXd::Ones(n));
  require(w.size() == n, ErrorCode::DimensionMismatch, "weights length differs from X rows");
  for (Index k = 0; k < n; ++k) {
    require(w(k) > 0.0 && std::isfinite(w(k)), ErrorCode::NonpositiveWeight,
            "weight " + std::to_string(k) + " is not positive");
  }
  require(n >= m && m > 0, ErrorCode::RankDeficientDesign, "design has fewer rows than columns");
  {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
    qr.setThreshold(options.rank_tolerance);
    require(qr.rank() == m, ErrorCode::RankDeficientDesign, "design lacks full column rank");
  }

  const MatrixXd WX = w.asDiagonal() * X;
  MatrixXd A = X.transpose() * WX;
  A = 0.5 * (A + A.transpose());
  VectorXd b = -(WX.transpose() * y);
  const double c = 0.5 * y.dot(w.asDiagonal() * y);

  QpProblem p = make_problem(std::move(A), std::move(b), c, std::move(V), std::move(d),
                             std::move(W), std::move(e), options);
  p.provenance_ = Provenance{X, y, std::move(w)};
  return p;
}

/// E_rho(x).
inline double penalized_objective(const QpProblem& p, const VectorXd& x, double rho) {
  const VectorXd res = p.residuals(x);
  double penalty = 0.0;
  for (Index i = 0; i < res.size(); ++i) {
    penalty += p.is_equality(i) ? std::abs(res(i)) : std::max(0.0, res(i));
  }
  return p.objective(x) + rho * penalty;
}

/// Subgradient coefficients: s for |.| terms, t for hinge terms.
struct SubgradientCoefficients {
  VectorXd s;
  VectorXd t;

  VectorXd stacked() const {
    VectorXd out(s.size() + t.size());
    out << s, t;
    return out;
  }
};

inline constexpr double kDefaultCoeffTolerance = 1e-8;

/// Residual tolerance used when classifying the sign of v'x - d.
inline double default_residual_tolerance(const QpProblem& p) {
  const double scale = max_abs(p.rhs());
  return 1e-9 * (1.0 + scale);
}

/// Ax + b + rho (V's + W't). Coefficients must belong to the subdifferential
/// sets dictated by the signs of the residuals at x.
inline VectorXd stationarity_residual(const QpProblem& p, const VectorXd& x, double rho,
                                      const SubgradientCoefficients& coeffs,
                                      double coeff_tolerance = kDefaultCoeffTolerance,
                                      std::optional<double> residual_tolerance = std::nullopt) {
  detail::require(coeffs.s.size() == p.r() && coeffs.t.size() == p.s() && x.size() == p.m(),
                  ErrorCode::DimensionMismatch, "coefficient or point dimensions");
  const double rtol = residual_tolerance.value_or(default_residual_tolerance(p));
  const VectorXd res = p.residuals(x);
  const VectorXd coef = coeffs.stacked();
  for (Index i = 0; i < res.size(); ++i) {
    const double lo = p.is_equality(i) ? -1.0 : 0.0;
    const double hi = 1.0;
    double want_lo = lo;
    double want_hi = hi;
    if (res(i) < -rtol) want_hi = lo;
    if (res(i) > rtol) want_lo = hi;
    if (coef(i) < want_lo - coeff_tolerance || coef(i) > want_hi + coeff_tolerance) {
      throw Error(ErrorCode::InconsistentCoefficients,
                  "coefficient " + std::to_string(i) + " = " + std::to_string(coef(i)) +
                      " outside its subdifferential for residual " + std::to_string(res(i)));
    }
  }
  return p.A() * x + p.b() + rho * (p.U().transpose() * coef);
}

/// Recovers the coefficients from stationarity. Constraints with a nonzero
/// residual take the value fixed by its sign; the remaining (tight) ones
/// solve rho U_Z' r_Z = -(Ax + b) - rho U_Zbar' r_Zbar in the least-squares
/// sense. Requires rho > 0.
inline SubgradientCoefficients recover_coefficients(
    const QpProblem& p, const VectorXd& x, double rho,
    std::optional<double> residual_tolerance = std::nullopt) {
  detail::require(rho > 0.0, ErrorCode::InvalidArgument, "coefficient recovery needs rho > 0");
  const double rtol = residual_tolerance.value_or(default_residual_tolerance(p));
  const VectorXd res = p.residuals(x);
  const Index n = p.num_constraints();
  VectorXd coef = VectorXd::Zero(n);
  std::vector<Index> tight;
  for (Index i = 0; i < n; ++i) {
    if (res(i) > rtol) {
      coef(i) = 1.0;
    } else if (res(i) < -rtol) {
      coef(i) = p.is_equality(i) ? -1.0 : 0.0;
    } else {
      tight.push_back(i);
    }
  }
  if (!tight.empty()) {
    const VectorXd target = -(p.A() * x + p.b()) / rho - p.U().transpose() * coef;
    MatrixXd UZt(p.m(), static_cast<Index>(tight.size()));
    for (std::size_t k = 0; k < tight.size(); ++k) UZt.col(static_cast<Index>(k)) = p.U().row(tight[k]).transpose();
    const VectorXd rz = UZt.completeOrthogonalDecomposition().solve(target);
    for (std::size_t k = 0; k < tight.size(); ++k) coef(tight[k]) = rz(static_cast<Index>(k));
  }
  return {coef.head(p.r()), coef.tail(p.s())};
}

}  // namespace penpath
