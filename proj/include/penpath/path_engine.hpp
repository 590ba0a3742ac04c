#pragma once

// Exact-penalty path following for strictly convex QPs.
//
// The path x(rho) is piecewise linear in rho. All quantities needed to follow
// it are read off a single bordered tableau
//
//     [ -A   -U'   b ]
//     [ -U    0   -c ]
//     [  b'  -c'   0 ]
//
// that is kept swept on the variable block and on the currently active
// constraints Z. With the KKT inverse [[P, Q], [Q', R]] of [[A, U_Z'], [U_Z, 0]]
// the swept tableau holds -Pb + Qc_Z (segment intercept), P U_Zbar' (slope
// columns), U_Zbar (-Pb + Qc_Z) - c_Zbar (inactive residual levels),
// U_Zbar P U_Zbar' (residual rates), -Q'b + R c_Z (multiplier levels) and
// Q' U_Zbar' (coefficient asymptotes).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "penpath/errors.hpp"
#include "penpath/qp_model.hpp"
#include "penpath/sym_sweep.hpp"

namespace penpath {

/// Status of one constraint relative to the current point: residual
/// negative (N), zero and active (Z), or positive (P).
enum class ConstraintStatus : std::uint8_t { Negative, Zero, Positive };

inline const char* to_string(ConstraintStatus s) {
  switch (s) {
    case ConstraintStatus::Negative: return "N";
    case ConstraintStatus::Zero: return "Z";
    case ConstraintStatus::Positive: return "P";
  }
  return "?";
}

struct PathTolerances {
  double residual = 1e-9;  // scaled by 1 + max|[d; e]|
  double time = 1e-9;      // scaled by 1 + rho
  double denom = 1e-12;    // hitting-time denominators
  double pivot = kDefaultPivotTolerance;
  double coeff = kDefaultCoeffTolerance;
};

struct PathOptions {
  PathTolerances tol;
  /// Cap on the number of finite segments; 50 (r + s) when unset.
  std::optional<std::size_t> max_segments;
  /// Largest number of constraints handed to one configuration search.
  std::size_t max_configuration_size = 16;
};

/// Constraint indices are global: equality i is i, inequality j is r + j.
struct IndexSets {
  std::vector<Index> N_E, Z_E, P_E;
  std::vector<Index> N_I, Z_I, P_I;
};

struct ActiveEntry {
  Index constraint;
  double coefficient;
};

struct ConstraintMove {
  Index constraint;
  ConstraintStatus from;
  ConstraintStatus to;
};

struct PathEvent {
  enum class Kind { Hit, Escape, Configuration };
  Kind kind = Kind::Hit;
  std::vector<ConstraintMove> moves;

  std::string describe() const {
    std::ostringstream os;
    os << (kind == Kind::Hit ? "hit" : kind == Kind::Escape ? "escape" : "configuration");
    for (const auto& mv : moves) {
      os << ' ' << mv.constraint << ':' << to_string(mv.from) << "->" << to_string(mv.to);
    }
    return os.str();
  }
};

/// x(rho) = x_start + (rho - rho_start) slope on [rho_start, rho_end).
struct PathSegment {
  double rho_start = 0.0;
  double rho_end = std::numeric_limits<double>::infinity();
  VectorXd x_start;
  VectorXd slope;
  std::vector<ActiveEntry> active;  // coefficients at rho_start
  std::optional<PathEvent> event;   // empty for the terminal segment
  Index df = 0;

  bool terminal() const noexcept { return std::isinf(rho_end); }
  VectorXd x_at(double rho) const { return x_start + (rho - rho_start) * slope; }
  VectorXd x_end() const { return terminal() ? x_start : x_at(rho_end); }
};

struct AnomalyRecord {
  double rho = 0.0;
  std::string reason;
  std::vector<Index> candidates;
  std::size_t configurations_tried = 0;
  std::size_t configurations_passed = 0;
  std::vector<ConstraintMove> chosen;
};

struct SolutionPath {
  Index m = 0, r = 0, s = 0;
  std::vector<PathSegment> segments;
  VectorXd terminal_x;
  double terminal_rho = 0.0;
  std::vector<AnomalyRecord> anomaly_log;
  PathTolerances tolerances;
  /// Largest discrepancy between the pre-event extrapolation and the
  /// tableau-recomputed point at any junction.
  double max_junction_drift = 0.0;
};

/// Mutable state of a path solve. Owns the tableau.
struct PathState {
  Index m = 0, r = 0, s = 0;
  double rho = 0.0;
  VectorXd x;
  std::vector<ConstraintStatus> status;  // per constraint
  VectorXd coeff;                        // s_i / t_j per constraint
  SymmetricTableau tableau;
  PathTolerances tol;
  double residual_tol = 1e-9;

  Index num_constraints() const noexcept { return r + s; }
  Index column(Index constraint) const noexcept { return m + constraint; }
  Index rhs_column() const noexcept { return m + r + s; }
  bool is_equality(Index constraint) const noexcept { return constraint < r; }

  double lower(Index constraint) const noexcept { return is_equality(constraint) ? -1.0 : 0.0; }
  double upper(Index) const noexcept { return 1.0; }

  /// Fixed coefficient of an inactive constraint on the given side.
  double side_value(Index constraint, ConstraintStatus side) const noexcept {
    return side == ConstraintStatus::Positive ? 1.0 : lower(constraint);
  }

  std::vector<Index> active() const {
    std::vector<Index> out;
    for (Index j = 0; j < num_constraints(); ++j) {
      if (status[static_cast<std::size_t>(j)] == ConstraintStatus::Zero) out.push_back(j);
    }
    return out;
  }

  /// Coefficients of the active constraints, in increasing constraint order.
  VectorXd r_Z() const {
    const auto z = active();
    VectorXd out(static_cast<Index>(z.size()));
    for (std::size_t k = 0; k < z.size(); ++k) out(static_cast<Index>(k)) = coeff(z[k]);
    return out;
  }

  IndexSets sets() const {
    IndexSets out;
    for (Index j = 0; j < num_constraints(); ++j) {
      const auto st = status[static_cast<std::size_t>(j)];
      if (is_equality(j)) {
        (st == ConstraintStatus::Negative ? out.N_E : st == ConstraintStatus::Zero ? out.Z_E : out.P_E)
            .push_back(j);
      } else {
        (st == ConstraintStatus::Negative ? out.N_I : st == ConstraintStatus::Zero ? out.Z_I : out.P_I)
            .push_back(j);
      }
    }
    return out;
  }

  /// Algorithm stopping rule: no equality off its target and no violated
  /// inequality, i.e. u_Zbar = 0.
  bool terminal() const {
    for (Index j = 0; j < num_constraints(); ++j) {
      const auto st = status[static_cast<std::size_t>(j)];
      if (st == ConstraintStatus::Positive) return false;
      if (st == ConstraintStatus::Negative && is_equality(j)) return false;
    }
    return true;
  }

  Index df() const { return m - static_cast<Index>(active().size()); }

  /// P block of the swept tableau.
  MatrixXd P() const {
    MatrixXd out(m, m);
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j <= i; ++j) out(i, j) = out(j, i) = tableau(i, j);
    }
    return out;
  }
};

/// Tableau read-out for the current configuration.
///   inactive j: residual_j(rho) = level_j - rho * rate_j
///   active j:   coefficient_j(rho) = level_j / rho - rate_j
struct SegmentGeometry {
  VectorXd intercept;  // -Pb + Qc_Z
  VectorXd slope;      // -P u_Zbar
  VectorXd level;
  VectorXd rate;
};

inline SegmentGeometry segment_geometry(const PathState& st) {
  const Index m = st.m;
  const Index n = st.num_constraints();
  const Index L = st.rhs_column();
  const SymmetricTableau& T = st.tableau;

  std::vector<std::pair<Index, double>> drivers;  // inactive constraints with nonzero r_Zbar
  for (Index k = 0; k < n; ++k) {
    if (st.status[static_cast<std::size_t>(k)] == ConstraintStatus::Zero) continue;
    const double rk = st.coeff(k);
    if (rk != 0.0) drivers.emplace_back(k, rk);
  }

  SegmentGeometry g;
  g.intercept.resize(m);
  g.slope.resize(m);
  for (Index i = 0; i < m; ++i) {
    g.intercept(i) = T(i, L);
    double acc = 0.0;
    for (const auto& [k, rk] : drivers) acc += T(i, m + k) * rk;
    g.slope(i) = -acc;
  }
  g.level.resize(n);
  g.rate.resize(n);
  for (Index j = 0; j < n; ++j) {
    g.level(j) = T(m + j, L);
    double acc = 0.0;
    for (const auto& [k, rk] : drivers) acc += T(m + j, m + k) * rk;
    g.rate(j) = acc;
  }
  return g;
}

/// Tableau with blocks -A, -U', b / 0, -[d; e] / 0.
inline SymmetricTableau build_initial_tableau(const QpProblem& p) {
  const Index m = p.m();
  const Index n = p.num_constraints();
  const Index L = m + n;
  SymmetricTableau t(m + n + 1);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j <= i; ++j) t.at(i, j) = -p.A()(i, j);
  }
  for (Index k = 0; k < n; ++k) {
    for (Index i = 0; i < m; ++i) t.at(m + k, i) = -p.U()(k, i);
    t.at(L, m + k) = -p.rhs()(k);
  }
  for (Index i = 0; i < m; ++i) t.at(L, i) = p.b()(i);
  t.reset_scale();
  return t;
}

// ---------------------------------------------------------------------------
// Event times

/// Unfiltered hitting time level/rate of an inactive constraint, or nothing
/// when its residual does not move along the segment.
inline std::optional<double> hitting_time_raw(const PathState& st, Index constraint,
                                              const SegmentGeometry& g) {
  const double den = g.rate(constraint);
  if (std::abs(den) < st.tol.denom) return std::nullopt;
  return g.level(constraint) / den;
}

/// Hitting time of an inactive constraint if it lies strictly after the
/// current rho.
inline std::optional<double> hitting_time(const PathState& st, Index constraint,
                                          const SegmentGeometry& g) {
  if (st.status[static_cast<std::size_t>(constraint)] == ConstraintStatus::Zero) {
    throw Error(ErrorCode::InvalidArgument, "hitting time requested for an active constraint");
  }
  const auto t = hitting_time_raw(st, constraint, g);
  if (!t || !std::isfinite(*t) || *t <= st.rho + st.tol.time * (1.0 + st.rho)) return std::nullopt;
  return t;
}

inline std::optional<double> hitting_time(const PathState& st, Index constraint) {
  return hitting_time(st, constraint, segment_geometry(st));
}

/// Escape time of an active coefficient through the boundary it is heading
/// for. The coefficient moves monotonically from its current value towards
/// the asymptote -[Q'u_Zbar]; it increases when level < 0 and decreases
/// when level > 0.
inline std::vector<double> escape_times(const PathState& st, Index constraint,
                                        const SegmentGeometry& g) {
  if (st.status[static_cast<std::size_t>(constraint)] != ConstraintStatus::Zero) {
    throw Error(ErrorCode::InvalidArgument, "escape time requested for an inactive constraint");
  }
  const double level = g.level(constraint);
  const double q = g.rate(constraint);
  std::vector<double> out;
  if (level == 0.0) return out;
  const double bound = level < 0.0 ? st.upper(constraint) : st.lower(constraint);
  const double den = bound + q;
  if (std::abs(den) < st.tol.denom) return out;
  const double t = level / den;
  if (std::isfinite(t) && t > st.rho + st.tol.time * (1.0 + st.rho)) out.push_back(t);
  return out;
}

inline std::vector<double> escape_times(const PathState& st, Index constraint) {
  return escape_times(st, constraint, segment_geometry(st));
}

/// Active coefficients at rho_new from their values at the segment start:
/// r(rho) = (rho0/rho) r(rho0) - (1 - rho0/rho) Q'u_Zbar.
inline VectorXd coefficient_update(const PathState& st, double rho_new, const SegmentGeometry& g) {
  if (!(rho_new > 0.0) && st.rho > 0.0) {
    throw Error(ErrorCode::InvalidArgument, "coefficient update needs rho > 0");
  }
  const auto z = st.active();
  VectorXd out(static_cast<Index>(z.size()));
  const double ratio = rho_new > 0.0 ? st.rho / rho_new : 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const Index j = z[k];
    out(static_cast<Index>(k)) = ratio * st.coeff(j) - (1.0 - ratio) * g.rate(j);
  }
  return out;
}

inline VectorXd coefficient_update(const PathState& st, double rho_new) {
  return coefficient_update(st, rho_new, segment_geometry(st));
}

/// Active coefficients evaluated directly from the multiplier block:
/// r(rho) = (-Q'b + R c_Z) / rho - Q'u_Zbar.
inline VectorXd coefficients_at(const PathState& st, double rho, const SegmentGeometry& g) {
  const auto z = st.active();
  VectorXd out(static_cast<Index>(z.size()));
  for (std::size_t k = 0; k < z.size(); ++k) {
    const Index j = z[k];
    out(static_cast<Index>(k)) = (rho > 0.0 ? g.level(j) / rho : 0.0) - g.rate(j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration search

namespace detail {

struct ConfigurationCheck {
  bool pass = true;
  double margin = std::numeric_limits<double>::infinity();
};

// Whether the current (status, coeff, tableau) of `st` defines a valid
// forward segment at st.rho. `candidates` are the constraints whose
// residual sits at zero and whose forward direction must be checked.
inline ConfigurationCheck check_configuration(const PathState& st, const SegmentGeometry& g,
                                              const std::vector<Index>& candidates) {
  ConfigurationCheck out;
  const double rho = st.rho;
  const double ct = st.tol.coeff;
  const double rate_scale = 1.0 + max_abs(g.rate);
  const double dtol = 1e-10 * rate_scale;
  auto need = [&](double slack, double tol, double scale) {
    if (slack < -tol) out.pass = false;
    out.margin = std::min(out.margin, slack / scale);
  };

  for (Index j = 0; j < st.num_constraints(); ++j) {
    const auto stj = st.status[static_cast<std::size_t>(j)];
    const double lo = st.lower(j);
    const double hi = st.upper(j);
    if (stj == ConstraintStatus::Zero) {
      const double asym = -g.rate(j);
      double v = asym;
      if (rho > 0.0) {
        v = g.level(j) / rho - g.rate(j);
      } else {
        need(st.residual_tol - std::abs(g.level(j)), 0.0, 1.0);
      }
      need(v - lo, ct, 1.0);
      need(hi - v, ct, 1.0);
      if (v - lo <= ct) need(asym - lo, ct, 1.0);
      if (hi - v <= ct) need(hi - asym, ct, 1.0);
    } else {
      const double res = g.level(j) - rho * g.rate(j);
      const double sign = stj == ConstraintStatus::Positive ? 1.0 : -1.0;
      need(sign * res, st.residual_tol, 1.0 + std::abs(g.level(j)));
    }
  }
  for (Index j : candidates) {
    const auto stj = st.status[static_cast<std::size_t>(j)];
    if (stj == ConstraintStatus::Zero) continue;
    // d residual / d rho = -rate must point to the assigned side.
    const double sign = stj == ConstraintStatus::Positive ? 1.0 : -1.0;
    need(-sign * g.rate(j), dtol, rate_scale);
  }
  return out;
}

inline void set_membership(PathState& st, Index j, bool active) {
  const Index col = st.column(j);
  if (st.tableau.is_swept(col) == active) return;
  if (active) {
    st.tableau.sweep(col);
  } else {
    st.tableau.inverse_sweep(col);
  }
}

}  // namespace detail

/// Decides which of the candidate constraints are active on the segment
/// starting at st.rho, by walking the subsets of candidates in Gray-code
/// order (one sweep or inverse sweep per step). Inactive candidates try both
/// sides.
/// The accepted configuration is written into `st`.
inline AnomalyRecord resolve_configuration(PathState& st, const std::vector<Index>& candidates,
                                           std::size_t max_size = 16) {
  const std::size_t a = candidates.size();
  if (a > max_size || a >= 63) {
    throw Error(ErrorCode::NoValidConfiguration,
                std::to_string(a) + " simultaneous candidates exceed the search limit");
  }

  // Inactive candidates may take either side: with dependent tight rows the
  // coefficients are not unique and need not be continuous. Any passing
  // configuration satisfies the optimality conditions at rho, so the
  // uniqueness of x(rho) keeps this safe.
  const std::vector<std::vector<ConstraintStatus>> sides(
      a, std::vector<ConstraintStatus>{ConstraintStatus::Negative, ConstraintStatus::Positive});

  std::vector<ConstraintStatus> original_status(a);
  std::vector<bool> base(a);
  for (std::size_t c = 0; c < a; ++c) {
    original_status[c] = st.status[static_cast<std::size_t>(candidates[c])];
    base[c] = st.tableau.is_swept(st.column(candidates[c]));
  }

  struct Passing {
    std::vector<ConstraintStatus> status;
    VectorXd slope;
    double margin;
  };
  std::vector<Passing> passing;
  std::size_t tried = 0;

  const std::uint64_t total = std::uint64_t{1} << a;
  for (std::uint64_t step = 0; step < total; ++step) {
    const std::uint64_t gray = step ^ (step >> 1);
    std::vector<bool> want(a);
    bool reachable = true;
    for (std::size_t c = 0; c < a; ++c) {
      want[c] = base[c] != (((gray >> c) & 1u) != 0);
      if (!want[c] && sides[c].empty()) reachable = false;
    }
    bool swept_ok = true;
    for (bool adding : {false, true}) {
      for (std::size_t c = 0; c < a; ++c) {
        if (want[c] != adding) continue;
        try {
          detail::set_membership(st, candidates[c], want[c]);
        } catch (const Error& err) {
          if (err.code() != ErrorCode::PivotTooSmall) throw;
          swept_ok = false;
        }
      }
    }
    if (!swept_ok || !reachable) continue;

    // Enumerate side choices for the inactive candidates.
    std::vector<std::size_t> inactive;
    for (std::size_t c = 0; c < a; ++c) {
      if (!want[c]) inactive.push_back(c);
    }
    std::vector<std::size_t> pick(inactive.size(), 0);
    while (true) {
      for (std::size_t c = 0; c < a; ++c) {
        const Index j = candidates[c];
        if (want[c]) {
          st.status[static_cast<std::size_t>(j)] = ConstraintStatus::Zero;
        }
      }
      for (std::size_t k = 0; k < inactive.size(); ++k) {
        const std::size_t c = inactive[k];
        const Index j = candidates[c];
        const ConstraintStatus side = sides[c][pick[k]];
        st.status[static_cast<std::size_t>(j)] = side;
        st.coeff(j) = st.side_value(j, side);
      }
      const SegmentGeometry g = segment_geometry(st);
      const auto check = detail::check_configuration(st, g, candidates);
      ++tried;
      if (check.pass) {
        std::vector<ConstraintStatus> chosen(a);
        for (std::size_t c = 0; c < a; ++c) chosen[c] = st.status[static_cast<std::size_t>(candidates[c])];
        passing.push_back({std::move(chosen), g.slope, check.margin});
      }
      // next side combination
      std::size_t k = 0;
      while (k < pick.size() && ++pick[k] == sides[inactive[k]].size()) pick[k++] = 0;
      if (k == pick.size()) break;
    }
  }

  AnomalyRecord rec;
  rec.rho = st.rho;
  rec.candidates = candidates;
  rec.configurations_tried = tried;
  rec.configurations_passed = passing.size();

  if (passing.empty()) {
    std::ostringstream os;
    os << "no admissible configuration at rho=" << st.rho << " among " << tried
       << " tried; candidates:";
    for (Index j : candidates) os << ' ' << j;
    throw Error(ErrorCode::NoValidConfiguration, os.str());
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < passing.size(); ++k) {
    const double scale = 1.0 + max_abs(passing[0].slope);
    if (max_abs(passing[k].slope - passing[0].slope) > 1e-8 * scale) {
      throw Error(ErrorCode::AmbiguousConfiguration,
                  std::to_string(passing.size()) + " configurations with different directions at rho=" +
                      std::to_string(st.rho));
    }
    if (passing[k].margin > passing[best].margin) best = k;
  }

  // Install the chosen configuration.
  const auto& choice = passing[best].status;
  for (bool adding : {false, true}) {
    for (std::size_t c = 0; c < a; ++c) {
      const bool want = choice[c] == ConstraintStatus::Zero;
      if (want == adding) detail::set_membership(st, candidates[c], want);
    }
  }
  for (std::size_t c = 0; c < a; ++c) {
    const Index j = candidates[c];
    st.status[static_cast<std::size_t>(j)] = choice[c];
    if (choice[c] != ConstraintStatus::Zero) st.coeff(j) = st.side_value(j, choice[c]);
    if (choice[c] != original_status[c]) rec.chosen.push_back({j, original_status[c], choice[c]});
  }
  const SegmentGeometry g = segment_geometry(st);
  for (Index j : st.active()) {
    const double v = (st.rho > 0.0 ? g.level(j) / st.rho : 0.0) - g.rate(j);
    st.coeff(j) = std::clamp(v, st.lower(j), st.upper(j));
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Path driver

inline PathState initialize_path(const QpProblem& p, const PathOptions& options = {},
                                 std::vector<AnomalyRecord>* log = nullptr) {
  PathState st;
  st.m = p.m();
  st.r = p.r();
  st.s = p.s();
  st.tol = options.tol;
  const double rhs_scale = max_abs(p.rhs());
  st.residual_tol = options.tol.residual * (1.0 + rhs_scale);
  st.tableau = build_initial_tableau(p);
  st.tableau.set_pivot_tolerance(options.tol.pivot);

  for (Index k = 0; k < st.m; ++k) {
    const double d = st.tableau(k, k);
    if (!(d < -st.tableau.pivot_threshold())) {
      throw Error(ErrorCode::NotPositiveDefinite,
                  "quadratic block pivot " + std::to_string(k) + " is " + std::to_string(-d));
    }
    st.tableau.sweep(k);
  }

  const Index n = st.num_constraints();
  st.status.assign(static_cast<std::size_t>(n), ConstraintStatus::Negative);
  st.coeff = VectorXd::Zero(n);
  std::vector<Index> tight;
  const Index L = st.rhs_column();
  for (Index j = 0; j < n; ++j) {
    const double res = st.tableau(st.column(j), L);
    ConstraintStatus side = ConstraintStatus::Negative;
    if (std::abs(res) <= st.residual_tol) {
      tight.push_back(j);
    } else if (res > 0.0) {
      side = ConstraintStatus::Positive;
    }
    st.status[static_cast<std::size_t>(j)] = side;
    st.coeff(j) = st.side_value(j, side);
  }
  if (!tight.empty()) {
    auto rec = resolve_configuration(st, tight, options.max_configuration_size);
    rec.reason = "constraints tight at the unconstrained minimum";
    if (log) log->push_back(std::move(rec));
  }
  const SegmentGeometry g = segment_geometry(st);
  st.x = g.intercept;
  return st;
}

namespace detail {

struct PendingEvent {
  Index constraint;
  double time;
  bool hit;
};

}  // namespace detail

/// Follows the path from st.rho to the next event, applies the event and
/// returns the finished segment. The state is updated in place. Throws
/// NoFurtherEvents when the current segment never ends.
inline PathSegment advance_segment(PathState& st, std::vector<AnomalyRecord>* log = nullptr,
                                   double* junction_drift = nullptr,
                                   std::size_t max_configuration_size = 16) {
  const SegmentGeometry g = segment_geometry(st);
  const Index n = st.num_constraints();

  std::vector<detail::PendingEvent> events;
  for (Index j = 0; j < n; ++j) {
    if (st.status[static_cast<std::size_t>(j)] == ConstraintStatus::Zero) {
      for (double t : escape_times(st, j, g)) events.push_back({j, t, false});
    } else if (auto t = hitting_time(st, j, g)) {
      events.push_back({j, *t, true});
    }
  }
  if (events.empty()) {
    throw Error(ErrorCode::NoFurtherEvents, "segment starting at rho=" + std::to_string(st.rho) +
                                                " has no further events");
  }
  double rho_next = std::numeric_limits<double>::infinity();
  for (const auto& ev : events) rho_next = std::min(rho_next, ev.time);
  const double tie_tol = st.tol.time * (1.0 + rho_next);
  std::vector<detail::PendingEvent> group;
  for (const auto& ev : events) {
    if (ev.time <= rho_next + tie_tol) group.push_back(ev);
  }

  PathSegment seg;
  seg.rho_start = st.rho;
  seg.rho_end = rho_next;
  seg.x_start = st.x;
  seg.slope = g.slope;
  seg.df = st.df();
  for (Index j : st.active()) seg.active.push_back({j, st.coeff(j)});

  // Move to the end of the segment.
  const VectorXd x_end = g.intercept + rho_next * g.slope;
  st.rho = rho_next;
  for (Index j : st.active()) {
    st.coeff(j) = std::clamp(g.level(j) / rho_next - g.rate(j), st.lower(j) - st.tol.coeff,
                             st.upper(j) + st.tol.coeff);
  }

  std::vector<Index> candidates;
  std::vector<ConstraintStatus> before(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) before[static_cast<std::size_t>(j)] = st.status[static_cast<std::size_t>(j)];
  for (const auto& ev : group) {
    candidates.push_back(ev.constraint);
    if (!ev.hit) {
      // Pin the escaping coefficient to the boundary it reached.
      const Index j = ev.constraint;
      const double lo = st.lower(j);
      const double hi = st.upper(j);
      st.coeff(j) = std::abs(st.coeff(j) - lo) <= std::abs(st.coeff(j) - hi) ? lo : hi;
    }
  }
  // Inactive constraints sitting at zero residual are decided as well.
  for (Index j = 0; j < n; ++j) {
    if (st.status[static_cast<std::size_t>(j)] == ConstraintStatus::Zero) continue;
    if (std::find(candidates.begin(), candidates.end(), j) != candidates.end()) continue;
    if (std::abs(g.level(j) - rho_next * g.rate(j)) <= st.residual_tol) candidates.push_back(j);
  }
  // Active coefficients parked on a boundary take part in the decision too.
  for (Index j : st.active()) {
    if (std::find(candidates.begin(), candidates.end(), j) != candidates.end()) continue;
    const double v = st.coeff(j);
    if (std::abs(v - st.lower(j)) <= st.tol.coeff || std::abs(v - st.upper(j)) <= st.tol.coeff) {
      candidates.push_back(j);
    }
  }

  bool resolved = false;
  if (group.size() == 1 && candidates.size() == 1) {
    const Index j = group.front().constraint;
    try {
      if (group.front().hit) {
        detail::set_membership(st, j, true);
        st.coeff(j) = st.side_value(j, st.status[static_cast<std::size_t>(j)]);
        st.status[static_cast<std::size_t>(j)] = ConstraintStatus::Zero;
      } else {
        const ConstraintStatus side = st.coeff(j) == st.upper(j) ? ConstraintStatus::Positive
                                                                  : ConstraintStatus::Negative;
        detail::set_membership(st, j, false);
        st.status[static_cast<std::size_t>(j)] = side;
        st.coeff(j) = st.side_value(j, side);
      }
      const SegmentGeometry g_new = segment_geometry(st);
      resolved = detail::check_configuration(st, g_new, candidates).pass;
    } catch (const Error& err) {
      if (err.code() != ErrorCode::PivotTooSmall) throw;
    }
    if (!resolved) {
      // Restore the pre-event status before searching.
      st.status[static_cast<std::size_t>(j)] = before[static_cast<std::size_t>(j)];
      if (before[static_cast<std::size_t>(j)] != ConstraintStatus::Zero) {
        st.coeff(j) = st.side_value(j, before[static_cast<std::size_t>(j)]);
      }
    }
  }
  if (!resolved) {
    auto rec = resolve_configuration(st, candidates, max_configuration_size);
    rec.reason = group.size() > 1 ? "coincident event times" : "boundary coefficients";
    if (log) log->push_back(std::move(rec));
  } else {
    // Refresh the active coefficients under the new tableau.
    const SegmentGeometry g_new = segment_geometry(st);
    for (Index j : st.active()) {
      st.coeff(j) = std::clamp(g_new.level(j) / st.rho - g_new.rate(j), st.lower(j), st.upper(j));
    }
  }

  PathEvent ev;
  bool any_hit = false;
  bool any_escape = false;
  for (Index j = 0; j < n; ++j) {
    const auto from = before[static_cast<std::size_t>(j)];
    const auto to = st.status[static_cast<std::size_t>(j)];
    if (from == to) continue;
    ev.moves.push_back({j, from, to});
    (to == ConstraintStatus::Zero ? any_hit : any_escape) = true;
  }
  ev.kind = (any_hit && any_escape) || ev.moves.empty() || group.size() > 1
                ? PathEvent::Kind::Configuration
                : any_hit ? PathEvent::Kind::Hit : PathEvent::Kind::Escape;
  seg.event = std::move(ev);

  const SegmentGeometry g_new = segment_geometry(st);
  st.x = g_new.intercept + st.rho * g_new.slope;
  if (junction_drift) {
    *junction_drift = std::max(*junction_drift, max_abs(st.x - x_end));
  }
  return seg;
}

/// Evaluates the path at rho; points beyond the terminal breakpoint return
/// the constrained solution.
inline VectorXd eval_at(const SolutionPath& path, double rho) {
  if (!(rho >= 0.0)) throw Error(ErrorCode::InvalidArgument, "rho must be nonnegative");
  const auto& segs = path.segments;
  auto it = std::upper_bound(segs.begin(), segs.end(), rho,
                             [](double v, const PathSegment& s) { return v < s.rho_start; });
  if (it == segs.begin()) return segs.front().x_start;
  --it;
  if (it->terminal()) return path.terminal_x;
  return it->x_at(rho);
}

/// Segment governing rho (the one that starts at rho at a breakpoint).
inline const PathSegment& segment_at(const SolutionPath& path, double rho) {
  const auto& segs = path.segments;
  auto it = std::upper_bound(segs.begin(), segs.end(), rho,
                             [](double v, const PathSegment& s) { return v < s.rho_start; });
  if (it != segs.begin()) --it;
  return *it;
}

inline SolutionPath solve_path(const QpProblem& p, const PathOptions& options = {}) {
  SolutionPath path;
  path.m = p.m();
  path.r = p.r();
  path.s = p.s();
  path.tolerances = options.tol;
  PathState st = initialize_path(p, options, &path.anomaly_log);
  const std::size_t cap =
      options.max_segments.value_or(50 * static_cast<std::size_t>(std::max<Index>(1, p.num_constraints())));

  auto close = [&]() {
    PathSegment last;
    last.rho_start = st.rho;
    last.x_start = st.x;
    last.slope = VectorXd::Zero(st.m);
    last.df = st.df();
    for (Index j : st.active()) last.active.push_back({j, st.coeff(j)});
    path.segments.push_back(std::move(last));
    path.terminal_x = st.x;
    path.terminal_rho = st.rho;
  };

  while (true) {
    if (st.terminal()) {
      // u_Zbar = 0 makes the slope vanish identically.
      if (max_abs(segment_geometry(st).slope) != 0.0) {
        throw Error(ErrorCode::NoValidConfiguration, "terminal configuration with nonzero slope");
      }
      close();
      break;
    }
    if (path.segments.size() >= cap) {
      throw Error(ErrorCode::MaxSegmentsExceeded,
                  "path exceeded " + std::to_string(cap) + " segments at rho=" + std::to_string(st.rho));
    }
    try {
      path.segments.push_back(advance_segment(st, &path.anomaly_log, &path.max_junction_drift,
                                              options.max_configuration_size));
    } catch (const Error& err) {
      if (err.code() != ErrorCode::NoFurtherEvents) throw;
      // Redundant constraints can sit on the positive side with a residual
      // pinned at zero; the path is still finished once x stops moving and
      // the point is feasible.
      const SegmentGeometry g = segment_geometry(st);
      const double xs = 1.0 + max_abs(st.x);
      if (max_abs(g.slope) <= 1e-12 * xs && p.max_violation(st.x) <= st.residual_tol) {
        close();
        break;
      }
      throw Error(ErrorCode::Infeasible, "path ended at rho=" + std::to_string(st.rho) +
                                             " without meeting the constraints");
    }
  }
  return path;
}

}  // namespace penpath
