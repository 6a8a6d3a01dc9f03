#pragma once

#include <span>

#include <Eigen/Dense>

namespace bb {

double logistic(double z);

struct LogisticFit {
  Eigen::VectorXd theta;
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;

  double probability(const Eigen::RowVectorXd& row) const { return logistic(row.dot(theta)); }
};

/// Maximum likelihood logit by Newton's method with step halving. Stops when
/// the gradient of the mean log-likelihood has norm below `tol`.
LogisticFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, double tol = 1e-10,
                         int max_iter = 100);

}  // namespace bb
