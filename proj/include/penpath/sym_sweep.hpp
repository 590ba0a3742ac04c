#pragma once

// Dense symmetric tableau with the sweep and inverse-sweep pivots of
// regression analysis. Only the lower triangle is stored.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "penpath/errors.hpp"

namespace penpath {

using Index = Eigen::Index;

inline constexpr double kDefaultPivotTolerance = 1e-12;

/// Largest absolute entry; 0 for an empty expression.
template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& v) {
  return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0;
}

class SymmetricTableau {
 public:
  SymmetricTableau() = default;

  explicit SymmetricTableau(Index dim)
      : dim_(dim),
        entries_(static_cast<std::size_t>(dim * (dim + 1) / 2), 0.0),
        swept_(static_cast<std::size_t>(dim), false) {
    if (dim < 0) throw Error(ErrorCode::InvalidArgument, "negative tableau dimension");
  }

  /// Builds a tableau from a full symmetric matrix. The matrix must be
  /// symmetric to within 1e-12 relative to its largest entry.
  static SymmetricTableau from_matrix(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "tableau source matrix is not square");
    }
    const double scale = std::max(1.0, max_abs(a));
    if (max_abs(a - a.transpose()) > 1e-12 * scale) {
      throw Error(ErrorCode::InvalidArgument, "tableau source matrix is not symmetric");
    }
    SymmetricTableau t(a.rows());
    for (Index i = 0; i < a.rows(); ++i) {
      for (Index j = 0; j <= i; ++j) t.at(i, j) = a(i, j);
    }
    t.reset_scale();
    return t;
  }

  Index dim() const noexcept { return dim_; }

  double operator()(Index i, Index j) const { return entries_[offset(i, j)]; }
  double& at(Index i, Index j) { return entries_[offset(i, j)]; }

  bool is_swept(Index k) const { return swept_[static_cast<std::size_t>(k)]; }

  std::vector<Index> swept_indices() const {
    std::vector<Index> out;
    for (Index k = 0; k < dim_; ++k) {
      if (swept_[static_cast<std::size_t>(k)]) out.push_back(k);
    }
    return out;
  }

  /// Relative pivot tolerance; the absolute threshold is
  /// rel * max(1, largest |diagonal| at construction).
  void set_pivot_tolerance(double rel) { pivot_rel_ = rel; }
  double pivot_threshold() const noexcept { return pivot_rel_ * scale_; }

  /// Recomputes the diagonal scale used by pivot_threshold().
  void reset_scale() {
    double s = 1.0;
    for (Index k = 0; k < dim_; ++k) s = std::max(s, std::abs((*this)(k, k)));
    scale_ = s;
  }

  void sweep(Index k) { pivot(k, +1.0); }
  void inverse_sweep(Index k) { pivot(k, -1.0); }

  void sweep(std::initializer_list<Index> ks) {
    for (Index k : ks) sweep(k);
  }
  void inverse_sweep(std::initializer_list<Index> ks) {
    for (Index k : ks) inverse_sweep(k);
  }

  Eigen::MatrixXd to_matrix() const {
    Eigen::MatrixXd out(dim_, dim_);
    for (Index i = 0; i < dim_; ++i) {
      for (Index j = 0; j <= i; ++j) {
        out(i, j) = (*this)(i, j);
        out(j, i) = out(i, j);
      }
    }
    return out;
  }

  /// Dense copy of the sub-block with the given row and column indices.
  Eigen::MatrixXd block(std::span<const Index> rows, std::span<const Index> cols) const {
    Eigen::MatrixXd out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < cols.size(); ++j) {
        out(static_cast<Index>(i), static_cast<Index>(j)) = (*this)(rows[i], cols[j]);
      }
    }
    return out;
  }

 private:
  std::size_t offset(Index i, Index j) const {
    if (i < j) std::swap(i, j);
    return static_cast<std::size_t>(i * (i + 1) / 2 + j);
  }

  // sign = +1 sweeps, sign = -1 inverse-sweeps. The two maps differ only in
  // the sign applied to row/column k.
  void pivot(Index k, double sign) {
    if (k < 0 || k >= dim_) {
      throw Error(ErrorCode::InvalidArgument, "pivot index " + std::to_string(k) + " out of range");
    }
    const double a = (*this)(k, k);
    if (!(std::abs(a) > pivot_threshold()) || !std::isfinite(a)) {
      throw Error(ErrorCode::PivotTooSmall,
                  "pivot " + std::to_string(k) + " has value " + std::to_string(a));
    }
    column_.resize(static_cast<std::size_t>(dim_));
    for (Index i = 0; i < dim_; ++i) column_[static_cast<std::size_t>(i)] = (*this)(i, k);

    const double inv = 1.0 / a;
    for (Index i = 0; i < dim_; ++i) {
      if (i == k) continue;
      const double cik = column_[static_cast<std::size_t>(i)] * inv;
      if (cik == 0.0) continue;
      double* row = &entries_[static_cast<std::size_t>(i * (i + 1) / 2)];
      for (Index j = 0; j <= i; ++j) {
        row[j] -= cik * column_[static_cast<std::size_t>(j)];
      }
    }
    // The update loop above also touched column k; overwrite it.
    for (Index i = 0; i < dim_; ++i) {
      if (i != k) at(i, k) = sign * column_[static_cast<std::size_t>(i)] * inv;
    }
    at(k, k) = -inv;
    swept_[static_cast<std::size_t>(k)] = !swept_[static_cast<std::size_t>(k)];
  }

  Index dim_ = 0;
  std::vector<double> entries_;
  std::vector<bool> swept_;
  std::vector<double> column_;
  double pivot_rel_ = kDefaultPivotTolerance;
  double scale_ = 1.0;
};

/// Value-semantics wrappers around the in-place pivots.
inline SymmetricTableau sweep(SymmetricTableau tab, Index k) {
  tab.sweep(k);
  return tab;
}

inline SymmetricTableau inverse_sweep(SymmetricTableau tab, Index k) {
  tab.inverse_sweep(k);
  return tab;
}

/// Inverts a symmetric positive definite matrix by sweeping every diagonal
/// entry. Each diagonal entry must stay positive until it is swept; a
/// failure is reported as NotPositiveDefinite.
inline Eigen::MatrixXd full_sweep_inverse(const Eigen::MatrixXd& a,
                                          double pivot_tolerance = kDefaultPivotTolerance) {
  SymmetricTableau t = SymmetricTableau::from_matrix(a);
  t.set_pivot_tolerance(pivot_tolerance);
  for (Index k = 0; k < t.dim(); ++k) {
    const double d = t(k, k);
    if (!(d > t.pivot_threshold())) {
      throw Error(ErrorCode::NotPositiveDefinite,
                  "diagonal " + std::to_string(k) + " is " + std::to_string(d) + " before sweeping");
    }
    t.sweep(k);
  }
  return -t.to_matrix();
}

}  // namespace penpath
