#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "biasbound/regression.hpp"
#include "biasbound/sample.hpp"

namespace bb {

struct VarianceEstimate {
  Eigen::MatrixXd delta_hat;
  Eigen::MatrixXd sigma_hat;
  double se_beta = 0.0;
  double kappa = 0.0;
  std::vector<std::size_t> pair_map;  // i -> nearest other unit
};

/// Matched-pair variance of a fit on `sample` (rows in unit order). The
/// nearest unit minimises |x_i - x_j| + kappa |d_i - d_j|; kappa defaults to
/// 1e6 times the covariate bounding-box diagonal.
VarianceEstimate matched_pair_variance(const Sample& sample, const RegressionFit& fit,
                                       std::optional<double> kappa = std::nullopt);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return lo <= v && v <= hi; }
};

struct TrapezoidPoint {
  double m = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Wald interval widened by m c on each side.
struct RobustCI {
  double alpha = 0.05;
  double beta_hat = 0.0;
  double se = 0.0;
  double c = 0.0;

  Interval endpoints(double m) const;
  /// `steps` + 1 equally spaced m values on [0, m_max].
  std::vector<TrapezoidPoint> trapezoid(double m_max, int steps = 20) const;
};

RobustCI robust_ci(double beta_hat, double se, double c, double alpha);
RobustCI robust_ci(const RegressionFit& fit, const VarianceEstimate& var, double c, double alpha);

/// Smallest m with null_tau in C_alpha(m): 0 if the classical interval already
/// contains it, +inf when c = 0 and it does not.
double m_value(const RobustCI& ci, double null_tau);

/// (beta_hat - null_tau) / se; throws ErrorKind::degenerate when se = 0.
double t_stat(double beta_hat, double se, double null_tau);

}  // namespace bb
