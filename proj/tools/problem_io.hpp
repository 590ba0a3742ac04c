#pragma once

// JSON problem documents in, path documents and CSV profiles out.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include <penpath.hpp>

namespace penpath::io {

using json = nlohmann::json;

/// Requested profile grid: explicit rho values or a number of evenly spaced
/// points (merged with the path breakpoints).
using GridSpec = std::variant<std::vector<double>, std::size_t>;

struct ProblemDocument {
  QpProblem problem;
  std::optional<double> sigma2;
  std::optional<GridSpec> rho_grid;
  PathOptions options;
};

namespace detail {

[[noreturn]] inline void bad(const std::string& msg) { throw Error(ErrorCode::InvalidArgument, msg); }

inline VectorXd to_vector(const json& j, const char* name) {
  if (!j.is_array()) bad(std::string(name) + " must be an array of numbers");
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) bad(std::string(name) + " must contain only numbers");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

/// Row-major nested array; an empty array gives a 0 x cols matrix.
inline MatrixXd to_matrix(const json& j, const char* name, Index cols) {
  if (!j.is_array()) bad(std::string(name) + " must be a nested array");
  const Index rows = static_cast<Index>(j.size());
  if (rows > 0) cols = static_cast<Index>(j[0].size());
  MatrixXd M(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      throw Error(ErrorCode::DimensionMismatch, std::string(name) + " rows have unequal lengths");
    }
    for (Index k = 0; k < cols; ++k) {
      if (!row[static_cast<std::size_t>(k)].is_number()) bad(std::string(name) + " must contain only numbers");
      M(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
  }
  return M;
}

inline json from_vector(const VectorXd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline GridSpec parse_grid_json(const json& j) {
  if (j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
    return static_cast<std::size_t>(j.get<std::uint64_t>());
  }
  if (!j.is_array()) bad("rho_grid must be a count or an array");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) bad("rho_grid entries must be numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline ShapeSpec parse_shape(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) bad("shape needs a string kind");
  const auto kind = parse_shape_kind(j["kind"].get<std::string>());
  if (!kind) bad("unknown shape kind '" + j["kind"].get<std::string>() + "'");
  ShapeSpec spec;
  spec.kind = *kind;
  if (j.contains("knots")) spec.knots = to_vector(j["knots"], "knots");
  if (j.contains("grid_shape")) {
    const json& g = j["grid_shape"];
    if (!g.is_array() || g.size() != 2 || !g[0].is_number_integer() || !g[1].is_number_integer()) {
      bad("grid_shape must be [rows, cols]");
    }
    spec.grid_shape = std::pair<Index, Index>{g[0].get<Index>(), g[1].get<Index>()};
  }
  if (j.contains("nonneg_corner")) spec.nonneg_corner = j["nonneg_corner"].get<bool>();
  if (j.contains("bound")) spec.bound = j["bound"].get<double>();
  return spec;
}

}  // namespace detail

inline ProblemDocument parse_document(const json& doc) {
  using detail::bad;
  if (!doc.is_object()) bad("problem document must be an object");
  const bool quad = doc.contains("A") || doc.contains("b");
  const bool ls = doc.contains("X") || doc.contains("y");
  if (quad == ls) bad("document needs exactly one of {A, b, c} or {X, y, weights}");
  const bool explicit_cons = doc.contains("constraints");
  const bool shaped = doc.contains("shape");
  if (explicit_cons && shaped) bad("document needs at most one of constraints or shape");

  Index m = 0;
  MatrixXd X;
  VectorXd y;
  std::optional<VectorXd> weights;
  if (quad) {
    if (!doc.contains("A") || !doc.contains("b")) bad("both A and b are required");
    if (doc.contains("weights")) bad("weights only apply to {X, y} documents");
  } else {
    if (!doc.contains("X") || !doc.contains("y")) bad("both X and y are required");
    y = detail::to_vector(doc["y"], "y");
    if (doc["X"].is_string()) {
      if (doc["X"].get<std::string>() != "identity") bad("X must be a matrix or \"identity\"");
      X = MatrixXd::Identity(y.size(), y.size());
    } else {
      X = detail::to_matrix(doc["X"], "X", 0);
    }
    if (doc.contains("weights")) weights = detail::to_vector(doc["weights"], "weights");
  }
  MatrixXd A;
  if (quad) {
    A = detail::to_matrix(doc["A"], "A", 0);
    m = A.cols();
  } else {
    m = X.cols();
  }

  MatrixXd V(0, m), W(0, m);
  VectorXd d(0), e(0);
  ProblemOptions popts;
  if (explicit_cons) {
    const json& c = doc["constraints"];
    if (!c.is_object()) bad("constraints must be an object");
    if (c.contains("V")) V = detail::to_matrix(c["V"], "V", m);
    if (c.contains("d")) d = detail::to_vector(c["d"], "d");
    if (c.contains("W")) W = detail::to_matrix(c["W"], "W", m);
    if (c.contains("e")) e = detail::to_vector(c["e"], "e");
  } else if (shaped) {
    const ShapeSpec spec = detail::parse_shape(doc["shape"]);
    InequalitySystem sys = shape_constraints(spec, m);
    W = std::move(sys.W);
    e = std::move(sys.e);
    popts.require_independent_constraints = spec.kind != ShapeKind::MatrixPartialOrder;
  }

  ProblemDocument out{quad ? make_problem(A, detail::to_vector(doc["b"], "b"),
                                          doc.contains("c") ? doc["c"].get<double>() : 0.0, V, d, W, e,
                                          popts)
                           : least_squares_problem(X, y, weights, V, d, W, e, popts),
                      std::nullopt, std::nullopt, PathOptions{}};

  if (doc.contains("options")) {
    const json& o = doc["options"];
    if (!o.is_object()) bad("options must be an object");
    if (o.contains("sigma2")) out.sigma2 = o["sigma2"].get<double>();
    if (o.contains("rho_grid")) out.rho_grid = detail::parse_grid_json(o["rho_grid"]);
    if (o.contains("max_segments")) out.options.max_segments = o["max_segments"].get<std::size_t>();
    if (o.contains("tolerances")) {
      const json& t = o["tolerances"];
      PathTolerances& tol = out.options.tol;
      if (t.contains("residual")) tol.residual = t["residual"].get<double>();
      if (t.contains("time")) tol.time = t["time"].get<double>();
      if (t.contains("denom")) tol.denom = t["denom"].get<double>();
      if (t.contains("pivot")) tol.pivot = t["pivot"].get<double>();
      if (t.contains("coeff")) tol.coeff = t["coeff"].get<double>();
    }
  }
  return out;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& ex) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed JSON: ") + ex.what());
  }
}

inline ProblemDocument load_document(const std::string& path) {
  try {
    return parse_document(read_json_file(path));
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad document field: ") + ex.what());
  }
}

inline json tolerances_json(const PathTolerances& tol) {
  return {{"residual", tol.residual}, {"time", tol.time}, {"denom", tol.denom},
          {"pivot", tol.pivot}, {"coeff", tol.coeff}};
}

inline json moves_json(const std::vector<ConstraintMove>& moves) {
  json out = json::array();
  for (const auto& mv : moves) {
    out.push_back({{"constraint", mv.constraint}, {"from", to_string(mv.from)}, {"to", to_string(mv.to)}});
  }
  return out;
}

/// Full path document. rho_end of the terminal segment is null.
inline json path_to_json(const SolutionPath& path, std::size_t max_segments) {
  json segs = json::array();
  for (const auto& seg : path.segments) {
    json s;
    s["rho_start"] = seg.rho_start;
    s["rho_end"] = seg.terminal() ? json(nullptr) : json(seg.rho_end);
    s["x_start"] = detail::from_vector(seg.x_start);
    s["slope"] = detail::from_vector(seg.slope);
    json act = json::array();
    for (const auto& a : seg.active) act.push_back({{"constraint", a.constraint}, {"coefficient", a.coefficient}});
    s["active"] = act;
    if (seg.event) {
      const char* kind = seg.event->kind == PathEvent::Kind::Hit      ? "hit"
                         : seg.event->kind == PathEvent::Kind::Escape ? "escape"
                                                                      : "configuration";
      s["event"] = {{"kind", kind}, {"moves", moves_json(seg.event->moves)}};
    } else {
      s["event"] = nullptr;
    }
    s["df"] = seg.df;
    segs.push_back(std::move(s));
  }
  json anomalies = json::array();
  for (const auto& a : path.anomaly_log) {
    anomalies.push_back({{"rho", a.rho},
                         {"reason", a.reason},
                         {"candidates", a.candidates},
                         {"configurations_tried", a.configurations_tried},
                         {"configurations_passed", a.configurations_passed},
                         {"chosen", moves_json(a.chosen)}});
  }
  return {{"m", path.m},
          {"r", path.r},
          {"s", path.s},
          {"segments", segs},
          {"terminal", {{"rho", path.terminal_rho}, {"x", detail::from_vector(path.terminal_x)}}},
          {"anomaly_log", anomalies},
          {"max_junction_drift", path.max_junction_drift},
          {"tolerances", tolerances_json(path.tolerances)},
          {"max_segments", max_segments}};
}

/// Rebuilds the affine segment data of a path document.
inline SolutionPath path_from_json(const json& j) {
  SolutionPath path;
  path.m = j.at("m").get<Index>();
  path.r = j.at("r").get<Index>();
  path.s = j.at("s").get<Index>();
  for (const auto& s : j.at("segments")) {
    PathSegment seg;
    seg.rho_start = s.at("rho_start").get<double>();
    seg.rho_end = s.at("rho_end").is_null() ? std::numeric_limits<double>::infinity()
                                            : s.at("rho_end").get<double>();
    seg.x_start = detail::to_vector(s.at("x_start"), "x_start");
    seg.slope = detail::to_vector(s.at("slope"), "slope");
    for (const auto& a : s.at("active")) {
      seg.active.push_back({a.at("constraint").get<Index>(), a.at("coefficient").get<double>()});
    }
    seg.df = s.at("df").get<Index>();
    path.segments.push_back(std::move(seg));
  }
  path.terminal_rho = j.at("terminal").at("rho").get<double>();
  path.terminal_x = detail::to_vector(j.at("terminal").at("x"), "x");
  return path;
}

/// CSV with header rho,rss,df,cp and 17 significant digits.
inline void write_profile_csv(std::ostream& os, const std::vector<ProfileRecord>& rows) {
  const auto old = os.precision(17);
  os << "rho,rss,df,cp\n";
  for (const auto& r : rows) os << r.rho << ',' << r.rss << ',' << r.df << ',' << r.cp << '\n';
  os.precision(old);
}

/// "--grid" value: a single positive integer is a count, anything else is a
/// comma-separated list of rho values.
inline GridSpec parse_grid_flag(const std::string& text) {
  if (text.find_first_of(",.eE") == std::string::npos) {
    std::size_t pos = 0;
    long long n = 0;
    try {
      n = std::stoll(text, &pos);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad --grid value '" + text + "'");
    }
    if (pos == text.size() && n > 0) return static_cast<std::size_t>(n);
  }
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &pos);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad --grid entry '" + tok + "'");
    }
    if (pos != tok.size()) throw Error(ErrorCode::InvalidArgument, "bad --grid entry '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "empty --grid");
  return out;
}

/// Explicit lists are used as given; a count becomes an even grid on
/// [0, terminal rho] merged with every breakpoint.
inline std::vector<double> resolve_grid(const SolutionPath& path, const GridSpec& spec) {
  if (const auto* list = std::get_if<std::vector<double>>(&spec)) {
    for (double v : *list) {
      if (!(v >= 0.0)) throw Error(ErrorCode::InvalidArgument, "grid values must be nonnegative");
    }
    return *list;
  }
  return profile_grid(path, uniform_grid(path.terminal_rho, std::get<std::size_t>(spec)));
}

}  // namespace penpath::io
