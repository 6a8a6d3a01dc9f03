#pragma once

#include <vector>

#include <Eigen/Dense>

namespace bb {

struct BoundedLpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd duals;  // simplex multipliers of the equality rows
  double objective = 0.0;
  bool optimal = false;  // false: iteration cap reached
  int iterations = 0;
};

/// max c'x s.t. A x = 0, 0 <= x <= upper. Bounded-variable revised simplex
/// with Bland's rule; the basis is only rows(A) wide, so long thin problems
/// (few rows, many columns) are cheap.
BoundedLpResult bounded_simplex(const Eigen::MatrixXd& a, const Eigen::VectorXd& c, const Eigen::VectorXd& upper);

/// min ||E u - f|| s.t. u >= 0 (Lawson and Hanson active-set method).
Eigen::VectorXd nnls(const Eigen::MatrixXd& e, const Eigen::VectorXd& f, int max_iter = 0);

/// min ||x|| s.t. G x >= h, via the NNLS dual. Returns false when the
/// constraints are infeasible.
bool least_distance(const Eigen::MatrixXd& g, const Eigen::VectorXd& h, Eigen::VectorXd& x);

}  // namespace bb
