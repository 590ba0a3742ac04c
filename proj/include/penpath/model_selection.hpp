#pragma once

// Degrees of freedom and Mallows' C_p along a least-squares solution path.
// For a full-column-rank design and independent constraints the fitted
// values have divergence tr(X P X') = m - |Z| on every segment.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "penpath/errors.hpp"
#include "penpath/path_engine.hpp"
#include "penpath/qp_model.hpp"

namespace penpath {

struct ProfileRecord {
  double rho = 0.0;
  double rss = 0.0;
  Index df = 0;
  double cp = 0.0;
};

struct SegmentDiagnostics {
  double rho_start = 0.0;
  double rho_end = 0.0;
  Index df = 0;
  double rss = 0.0;  // at rho_start
  double cp = 0.0;   // at rho_start
};

struct PathDiagnostics {
  std::vector<SegmentDiagnostics> segments;
  double sigma2 = 0.0;
};

inline Index degrees_of_freedom(const QpProblem& p, const PathSegment& segment) {
  (void)p.provenance();
  return p.m() - static_cast<Index>(segment.active.size());
}

/// Weighted residual sum of squares sum_k w_k (y_k - x_k'beta)^2.
inline double residual_sum_of_squares(const QpProblem& p, const VectorXd& x) {
  const Provenance& prov = p.provenance();
  const VectorXd res = prov.y - prov.X * x;
  return res.dot(prov.weights.asDiagonal() * res);
}

/// (1/n) RSS + (2/n) sigma^2 df.
inline double cp_statistic(const QpProblem& p, const VectorXd& x, Index df, double sigma2) {
  if (sigma2 < 0.0) throw Error(ErrorCode::InvalidArgument, "sigma2 must be nonnegative");
  const double n = static_cast<double>(p.provenance().n());
  return residual_sum_of_squares(p, x) / n + 2.0 / n * sigma2 * static_cast<double>(df);
}

/// Noise variance estimate RSS/(n - m) at the unconstrained fit. Needs n > m.
inline double estimate_sigma2(const QpProblem& p) {
  const Provenance& prov = p.provenance();
  if (prov.n() <= p.m()) {
    throw Error(ErrorCode::InvalidArgument,
                "sigma2 cannot be estimated with n <= m; supply it explicitly");
  }
  const VectorXd x0 = p.A().ldlt().solve(-p.b());
  return residual_sum_of_squares(p, x0) / static_cast<double>(prov.n() - p.m());
}

/// RSS, df and C_p at each grid value of rho.
inline std::vector<ProfileRecord> rss_profile(const SolutionPath& path, const QpProblem& p,
                                              const std::vector<double>& grid,
                                              std::optional<double> sigma2 = std::nullopt) {
  (void)p.provenance();
  const double s2 = sigma2.has_value() ? *sigma2 : estimate_sigma2(p);
  std::vector<ProfileRecord> out;
  out.reserve(grid.size());
  for (double rho : grid) {
    const VectorXd x = eval_at(path, rho);
    const Index df = degrees_of_freedom(p, segment_at(path, rho));
    ProfileRecord rec;
    rec.rho = rho;
    rec.rss = residual_sum_of_squares(p, x);
    rec.df = df;
    rec.cp = cp_statistic(p, x, df, s2);
    out.push_back(rec);
  }
  return out;
}

inline PathDiagnostics path_diagnostics(const SolutionPath& path, const QpProblem& p,
                                        std::optional<double> sigma2 = std::nullopt) {
  PathDiagnostics out;
  out.sigma2 = sigma2.has_value() ? *sigma2 : estimate_sigma2(p);
  for (const auto& seg : path.segments) {
    SegmentDiagnostics d;
    d.rho_start = seg.rho_start;
    d.rho_end = seg.rho_end;
    d.df = degrees_of_freedom(p, seg);
    d.rss = residual_sum_of_squares(p, seg.x_start);
    d.cp = cp_statistic(p, seg.x_start, d.df, out.sigma2);
    out.segments.push_back(d);
  }
  return out;
}

/// Grid of `count` evenly spaced values on [0, rho_max] merged with every
/// breakpoint of the path, sorted and deduplicated.
inline std::vector<double> profile_grid(const SolutionPath& path, std::vector<double> grid) {
  for (const auto& seg : path.segments) grid.push_back(seg.rho_start);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(),
                         [](double a, double b) { return std::abs(b - a) <= 1e-12 * (1.0 + std::abs(a)); }),
             grid.end());
  return grid;
}

inline std::vector<double> uniform_grid(double rho_max, std::size_t count) {
  std::vector<double> grid;
  if (count == 0) return grid;
  if (count == 1 || rho_max <= 0.0) return {0.0};
  for (std::size_t k = 0; k < count; ++k) {
    grid.push_back(rho_max * static_cast<double>(k) / static_cast<double>(count - 1));
  }
  grid.back() = rho_max;
  return grid;
}

}  // namespace penpath
