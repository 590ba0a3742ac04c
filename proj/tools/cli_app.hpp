#pragma once

// penpath command-line front end: solve, profile, eval.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "problem_io.hpp"

namespace penpath::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitSolver = 2;

struct Flags {
  std::string input;
  std::string output;
  std::optional<double> sigma2;
  std::optional<std::string> grid;
  std::optional<double> rho;
  std::optional<std::size_t> max_segments;
  std::optional<double> tol_residual, tol_time, tol_pivot;
};

inline void apply_flags(const Flags& f, io::ProblemDocument& doc) {
  if (f.max_segments) doc.options.max_segments = *f.max_segments;
  if (f.tol_residual) doc.options.tol.residual = *f.tol_residual;
  if (f.tol_time) doc.options.tol.time = *f.tol_time;
  if (f.tol_pivot) doc.options.tol.pivot = *f.tol_pivot;
  if (f.sigma2) doc.sigma2 = *f.sigma2;
}

inline std::size_t effective_cap(const io::ProblemDocument& doc) {
  return doc.options.max_segments.value_or(
      50 * static_cast<std::size_t>(std::max<Index>(1, doc.problem.num_constraints())));
}

template <typename Fn>
int with_output(const std::string& path, std::ostream& out, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(out);
    return kExitOk;
  }
  std::ofstream file(path);
  if (!file) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  fn(file);
  return kExitOk;
}

inline int cmd_solve(const Flags& f, std::ostream& out) {
  io::ProblemDocument doc = io::load_document(f.input);
  apply_flags(f, doc);
  const SolutionPath path = solve_path(doc.problem, doc.options);
  const auto j = io::path_to_json(path, effective_cap(doc));
  return with_output(f.output, out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

inline int cmd_profile(const Flags& f, std::ostream& out) {
  io::ProblemDocument doc = io::load_document(f.input);
  apply_flags(f, doc);
  (void)doc.problem.provenance();
  const SolutionPath path = solve_path(doc.problem, doc.options);
  io::GridSpec spec = std::size_t{50};
  if (f.grid) {
    spec = io::parse_grid_flag(*f.grid);
  } else if (doc.rho_grid) {
    spec = *doc.rho_grid;
  }
  const auto rows = rss_profile(path, doc.problem, io::resolve_grid(path, spec), doc.sigma2);
  return with_output(f.output, out, [&](std::ostream& os) { io::write_profile_csv(os, rows); });
}

inline int cmd_eval(const Flags& f, std::ostream& out) {
  io::ProblemDocument doc = io::load_document(f.input);
  apply_flags(f, doc);
  const double rho = f.rho.value_or(0.0);
  if (!(rho >= 0.0)) throw Error(ErrorCode::InvalidArgument, "--rho must be nonnegative");
  const SolutionPath path = solve_path(doc.problem, doc.options);
  const PathSegment& seg = segment_at(path, rho);
  io::json active = io::json::array();
  for (const auto& a : seg.active) active.push_back(a.constraint);
  const io::json j = {{"rho", rho},
                      {"x", io::detail::from_vector(eval_at(path, rho))},
                      {"active", active},
                      {"df", seg.df},
                      {"tolerances", io::tolerances_json(path.tolerances)}};
  return with_output(f.output, out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

/// Runs the CLI and returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Exact-penalty solution paths for convex quadratic programs"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("input", f.input, "Problem document (JSON)")->required();
    sub->add_option("--output,-o", f.output, "Output file (default stdout)");
    sub->add_option("--max-segments", f.max_segments, "Segment cap");
    sub->add_option("--tol-residual", f.tol_residual, "Residual tolerance");
    sub->add_option("--tol-time", f.tol_time, "Event-time tolerance");
    sub->add_option("--tol-pivot", f.tol_pivot, "Relative pivot tolerance");
  };
  CLI::App* solve = app.add_subcommand("solve", "Solve the full path and write it as JSON");
  common(solve);
  CLI::App* profile = app.add_subcommand("profile", "Write rho,rss,df,cp rows as CSV");
  common(profile);
  profile->add_option("--grid", f.grid, "Comma-separated rho values or a point count");
  profile->add_option("--sigma2", f.sigma2, "Noise variance for C_p");
  CLI::App* eval = app.add_subcommand("eval", "Print x(rho) and the active set");
  common(eval);
  eval->add_option("--rho", f.rho, "Penalty constant")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitInput;
  }

  try {
    if (solve->parsed()) return cmd_solve(f, out);
    if (profile->parsed()) return cmd_profile(f, out);
    return cmd_eval(f, out);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return is_solver_error(ex.code()) ? kExitSolver : kExitInput;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitInput;
  }
}

}  // namespace penpath::cli
