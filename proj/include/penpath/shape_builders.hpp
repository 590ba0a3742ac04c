#pragma once

// Constraint systems W theta <= e for shape-restricted regression.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "penpath/errors.hpp"
#include "penpath/qp_model.hpp"

namespace penpath {

struct InequalitySystem {
  MatrixXd W;
  VectorXd e;
};

enum class ShapeKind {
  Isotone,
  Antitone,
  Concave,
  Convex,
  Nonnegative,
  MatrixPartialOrder,
  BoundSum,
};

inline std::optional<ShapeKind> parse_shape_kind(std::string_view name) {
  if (name == "isotone") return ShapeKind::Isotone;
  if (name == "antitone") return ShapeKind::Antitone;
  if (name == "concave") return ShapeKind::Concave;
  if (name == "convex") return ShapeKind::Convex;
  if (name == "nonnegative") return ShapeKind::Nonnegative;
  if (name == "matrix-partial-order") return ShapeKind::MatrixPartialOrder;
  if (name == "bound-sum") return ShapeKind::BoundSum;
  return std::nullopt;
}

struct ShapeSpec {
  ShapeKind kind = ShapeKind::Isotone;
  std::optional<VectorXd> knots;                    // curvature abscissae
  std::optional<std::pair<Index, Index>> grid_shape;  // rows, cols
  bool nonneg_corner = false;  // theta_1 >= 0 (orders) or theta_11 >= 0 (grids)
  double bound = 1.0;          // bound-sum: sum(theta) <= bound
};

/// beta_i - beta_{i+1} <= 0 for i = 1..m-1.
inline InequalitySystem isotone_constraints(Index m) {
  if (m < 2) throw Error(ErrorCode::InvalidArgument, "isotone constraints need m >= 2");
  InequalitySystem sys{MatrixXd::Zero(m - 1, m), VectorXd::Zero(m - 1)};
  for (Index i = 0; i + 1 < m; ++i) {
    sys.W(i, i) = 1.0;
    sys.W(i, i + 1) = -1.0;
  }
  return sys;
}

inline InequalitySystem antitone_constraints(Index m) {
  auto sys = isotone_constraints(m);
  sys.W = -sys.W;
  return sys;
}

/// Concavity at knots x_1 < ... < x_n: the slope on [x_{i-1}, x_i] is at
/// least the slope on [x_i, x_{i+1}]. Each row is multiplied by
/// h_{i-1} h_i (h = knot spacing), which gives
///   h_i theta_{i-1} - (h_{i-1} + h_i) theta_i + h_{i-1} theta_{i+1} <= 0.
inline InequalitySystem concavity_constraints(const VectorXd& x) {
  const Index n = x.size();
  if (n < 3) throw Error(ErrorCode::InvalidArgument, "curvature constraints need at least 3 knots");
  for (Index i = 0; i + 1 < n; ++i) {
    if (!(x(i + 1) > x(i))) {
      throw Error(ErrorCode::NonIncreasingAbscissae,
                  "knot " + std::to_string(i + 1) + " does not exceed its predecessor");
    }
  }
  InequalitySystem sys{MatrixXd::Zero(n - 2, n), VectorXd::Zero(n - 2)};
  for (Index i = 1; i + 1 < n; ++i) {
    const double left = x(i) - x(i - 1);
    const double right = x(i + 1) - x(i);
    sys.W(i - 1, i - 1) = right;
    sys.W(i - 1, i) = -(left + right);
    sys.W(i - 1, i + 1) = left;
  }
  return sys;
}

inline InequalitySystem convexity_constraints(const VectorXd& x) {
  auto sys = concavity_constraints(x);
  sys.W = -sys.W;
  return sys;
}

inline InequalitySystem nonnegativity_constraints(Index m) {
  return {-MatrixXd::Identity(m, m), VectorXd::Zero(m)};
}

/// theta_ij <= theta_{i,j+1} and theta_ij <= theta_{i+1,j} on a rows x cols
/// grid vectorized row-major (theta_ij at i * cols + j). Row order: all
/// within-row comparisons, then all within-column comparisons, then the
/// optional theta_11 >= 0.
inline InequalitySystem matrix_partial_order(Index rows, Index cols, bool nonneg_corner) {
  if (rows < 1 || cols < 1) throw Error(ErrorCode::InvalidArgument, "grid must be at least 1 x 1");
  const Index m = rows * cols;
  const Index count = rows * (cols - 1) + (rows - 1) * cols + (nonneg_corner ? 1 : 0);
  InequalitySystem sys{MatrixXd::Zero(count, m), VectorXd::Zero(count)};
  Index k = 0;
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j + 1 < cols; ++j, ++k) {
      sys.W(k, i * cols + j) = 1.0;
      sys.W(k, i * cols + j + 1) = -1.0;
    }
  }
  for (Index i = 0; i + 1 < rows; ++i) {
    for (Index j = 0; j < cols; ++j, ++k) {
      sys.W(k, i * cols + j) = 1.0;
      sys.W(k, (i + 1) * cols + j) = -1.0;
    }
  }
  if (nonneg_corner) sys.W(k, 0) = -1.0;
  return sys;
}

inline InequalitySystem shape_constraints(const ShapeSpec& shape, Index m) {
  auto with_corner = [&](InequalitySystem sys) {
    if (!shape.nonneg_corner) return sys;
    InequalitySystem out{MatrixXd::Zero(sys.W.rows() + 1, m), VectorXd::Zero(sys.W.rows() + 1)};
    out.W.topRows(sys.W.rows()) = sys.W;
    out.e.head(sys.W.rows()) = sys.e;
    out.W(sys.W.rows(), 0) = -1.0;
    return out;
  };
  auto knots = [&]() -> VectorXd {
    if (shape.knots) {
      if (shape.knots->size() != m) {
        throw Error(ErrorCode::DimensionMismatch, "knot count differs from the number of parameters");
      }
      return *shape.knots;
    }
    return VectorXd::LinSpaced(m, 1.0, static_cast<double>(m));
  };
  switch (shape.kind) {
    case ShapeKind::Isotone: return with_corner(isotone_constraints(m));
    case ShapeKind::Antitone: return with_corner(antitone_constraints(m));
    case ShapeKind::Concave: return concavity_constraints(knots());
    case ShapeKind::Convex: return convexity_constraints(knots());
    case ShapeKind::Nonnegative: return nonnegativity_constraints(m);
    case ShapeKind::MatrixPartialOrder: {
      if (!shape.grid_shape) throw Error(ErrorCode::InvalidArgument, "grid_shape is required");
      const auto [rows, cols] = *shape.grid_shape;
      if (rows * cols != m) {
        throw Error(ErrorCode::DimensionMismatch, "grid_shape does not match the parameter count");
      }
      return matrix_partial_order(rows, cols, shape.nonneg_corner);
    }
    case ShapeKind::BoundSum:
      return {MatrixXd::Ones(1, m), VectorXd::Constant(1, shape.bound)};
  }
  throw Error(ErrorCode::InvalidArgument, "unknown shape kind");
}

/// Weighted fit of one parameter per observation (identity design) under a
/// shape restriction: minimize 1/2 sum_k w_k (y_k - theta_k)^2.
inline QpProblem weighted_mean_fit_problem(const VectorXd& y, const VectorXd& weights,
                                           const ShapeSpec& shape) {
  const Index n = y.size();
  if (weights.size() != n) throw Error(ErrorCode::DimensionMismatch, "weights length differs from y");
  for (Index k = 0; k < n; ++k) {
    if (!(weights(k) > 0.0)) {
      throw Error(ErrorCode::NonpositiveWeight, "weight " + std::to_string(k) + " is not positive");
    }
  }
  InequalitySystem sys = shape_constraints(shape, n);
  ProblemOptions opts;
  opts.require_independent_constraints = shape.kind != ShapeKind::MatrixPartialOrder;
  return least_squares_problem(MatrixXd::Identity(n, n), y, weights, MatrixXd(0, n), VectorXd(0),
                               std::move(sys.W), std::move(sys.e), opts);
}

}  // namespace penpath
