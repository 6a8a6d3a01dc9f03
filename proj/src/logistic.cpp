#include "biasbound/logistic.hpp"

#include <cmath>

#include "biasbound/error.hpp"

namespace bb {

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

double mean_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd eta = x * theta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log(1 + exp(eta)) without overflow.
    const double softplus = eta[i] > 0.0 ? eta[i] + std::log1p(std::exp(-eta[i])) : std::log1p(std::exp(eta[i]));
    ll += y[i] * eta[i] - softplus;
  }
  return ll / static_cast<double>(eta.size());
}

}  // namespace

LogisticFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, double tol, int max_iter) {
  if (design.rows() != y.size() || design.rows() == 0)
    throw Error(ErrorKind::contract, "dgp_lab", "logistic design and outcome sizes differ");
  const double n = static_cast<double>(design.rows());
  LogisticFit fit;
  fit.theta = Eigen::VectorXd::Zero(design.cols());
  double ll = mean_loglik(design, y, fit.theta);

  for (fit.iterations = 0; fit.iterations < max_iter; ++fit.iterations) {
    Eigen::VectorXd prob(design.rows());
    for (Eigen::Index i = 0; i < prob.size(); ++i) prob[i] = logistic(design.row(i).dot(fit.theta));
    const Eigen::VectorXd grad = design.transpose() * (y - prob) / n;
    fit.grad_norm = grad.norm();
    if (fit.grad_norm < tol) {
      fit.converged = true;
      break;
    }
    const Eigen::VectorXd w = prob.array() * (1.0 - prob.array());
    const Eigen::MatrixXd info = design.transpose() * w.asDiagonal() * design / n;
    const Eigen::VectorXd step = info.ldlt().solve(grad);
    if (!step.allFinite()) break;

    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 30; ++half, scale *= 0.5) {
      const Eigen::VectorXd trial = fit.theta + scale * step;
      const double trial_ll = mean_loglik(design, y, trial);
      if (trial_ll >= ll - 1e-15) {
        fit.theta = trial;
        ll = trial_ll;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  return fit;
}

}  // namespace bb
