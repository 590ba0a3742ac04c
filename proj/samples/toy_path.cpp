// Follows the exact-penalty path of a two-parameter line fit constrained to
// the unit simplex and prints every segment.

#include <iomanip>
#include <iostream>

#include <penpath.hpp>

int main() {
  using namespace penpath;
  MatrixXd X(4, 2);
  X << 1, 0.25, 1, 0.5, 1, 0.5, 1, 0.8;
  VectorXd y(4);
  y << 0.5, 0.6, 0.7, 1.2;
  MatrixXd W(3, 2);
  W << -1, 0, 0, -1, 1, 1;
  VectorXd e(3);
  e << 0, 0, 1;

  const QpProblem p = least_squares_problem(X, y, std::nullopt, MatrixXd(0, 2), VectorXd(0), W, e);
  const SolutionPath path = solve_path(p);

  std::cout << std::setprecision(6);
  for (const auto& seg : path.segments) {
    std::cout << "rho in [" << seg.rho_start << ", " << seg.rho_end << ")  x_start = "
              << seg.x_start.transpose() << "  slope = " << seg.slope.transpose() << "  df = " << seg.df;
    if (seg.event) std::cout << "  then " << seg.event->describe();
    std::cout << '\n';
  }
  std::cout << "terminal x = " << path.terminal_x.transpose() << '\n';
}
