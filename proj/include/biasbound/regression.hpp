#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "biasbound/sample.hpp"

namespace bb {

/// t(x) = offset + x'coefficients.
struct LinearIndex {
  double offset = 0.0;
  Eigen::VectorXd coefficients;

  double operator()(std::span<const double> x) const;
};

/// Covariate function s(.) used to build regressors Z = (1, D, s(X)').
///
/// Index-based kinds evaluate a scalar index t(x): either a LinearIndex or,
/// when none is set, the single raw covariate (p = 1 only). The scalar
/// `location()` of a unit is where its mass sits when distributions are pushed
/// forward through the map: the index value, or the stratum number for strata.
class CovariateMap {
 public:
  enum class Kind { constant_only, identity, index, polynomial, strata };

  static CovariateMap constant_only();
  static CovariateMap identity();
  static CovariateMap index(LinearIndex idx, std::string label = "index");
  /// Least-squares fit of D on (1, X); the fitted value is the index.
  static CovariateMap linear_propensity(const DesignView& view);
  /// (t, t^2, ..., t^degree).
  static CovariateMap polynomial(std::optional<LinearIndex> idx, int degree);
  /// Indicators of strata (-inf, c1], (c1, c2], ..., (cK, inf); the first
  /// stratum is dropped so the intercept stays identified.
  static CovariateMap strata(std::optional<LinearIndex> idx, std::vector<double> cutpoints);
  /// Strata cut at the interior quantiles of the arm-`arm` index distribution.
  static CovariateMap quantile_strata(const DesignView& view, std::optional<LinearIndex> idx, int count, int arm = 0);

  Kind kind() const noexcept { return kind_; }
  const std::optional<LinearIndex>& linear_index() const noexcept { return index_; }
  const std::vector<double>& cutpoints() const noexcept { return cutpoints_; }
  int degree() const noexcept { return degree_; }
  const std::string& label() const noexcept { return label_; }

  /// Length of s(x) for covariate dimension p.
  std::size_t dim(std::size_t p) const;
  Eigen::VectorXd features(std::span<const double> x) const;
  std::vector<std::string> feature_names(std::size_t p) const;

  /// Scalar index t(x). Throws for maps without one when p != 1.
  double index_value(std::span<const double> x) const;
  /// Pushforward location: stratum number (1-based) for strata, else t(x).
  double location(std::span<const double> x) const;
  std::size_t stratum(double t) const;

  std::string describe() const;

 private:
  Kind kind_ = Kind::constant_only;
  std::optional<LinearIndex> index_;
  std::vector<double> cutpoints_;
  int degree_ = 1;
  std::string label_;
};

/// Equal-mass pushforward of an arm through `map.location`.
EmpiricalCond empirical_cond(const DesignView& view, int arm, const CovariateMap& map);
EmpiricalCond empirical_cond(const Sample& sample, int arm, const CovariateMap& map);

/// Least-squares fit (sample or population). `gram` is the mass-weighted mean
/// of Z Z'; `residuals` line up with the rows that were fit.
struct RegressionFit {
  Eigen::VectorXd theta;
  Eigen::MatrixXd gram;
  Eigen::MatrixXd design;  // rows Z_i
  Eigen::VectorXd weights; // masses, summing to 1
  Eigen::VectorXd residuals;
  std::size_t n = 0;
  CovariateMap map;
  std::vector<std::string> names;

  double alpha() const { return theta[0]; }
  double beta() const { return theta[1]; }
  Eigen::VectorXd gamma() const { return theta.tail(theta.size() - 2); }

  /// l_theta(x, d) = alpha + beta d + s(x)'gamma.
  double model(std::span<const double> x, int d) const;
};

/// Rows (1, d, s(x)').
Eigen::RowVectorXd regressor_row(const CovariateMap& map, std::span<const double> x, int d);

/// Mass-weighted least squares of `target` on `design`. Throws ErrorKind::rank
/// when the weighted Gram matrix is numerically singular.
RegressionFit weighted_least_squares(Eigen::MatrixXd design, Eigen::VectorXd weights, const Eigen::VectorXd& target,
                                     CovariateMap map, std::vector<std::string> names);

RegressionFit fit_ols(const Sample& sample, const CovariateMap& map);
RegressionFit fit_ols(const Sample& sample, const SubsampleHandle& sub, const CovariateMap& map);

/// A point of a finite joint distribution of (X, D).
struct JointPoint {
  std::vector<double> x;
  int d = 0;
  double mass = 0.0;
};
using JointDist = std::vector<JointPoint>;

/// Empirical joint distribution (mass 1/n per unit).
JointDist joint_of(const DesignView& view);
/// Conditional distribution of X given D = arm under `g`.
EmpiricalCond conditional_of(const JointDist& g, int arm);

struct DgpAtom {
  std::vector<double> x;
  int d = 0;
  double prob = 0.0;
};

struct OutcomeRow {
  std::vector<double> x;
  double f0 = 0.0;
  double f1 = 0.0;
  std::optional<double> noise0;  // E[U^2 | x, 0]
  std::optional<double> noise1;
};

/// Finite population: joint law of (X, D) on `support` and the conditional
/// mean f(x, d) tabulated on the x-grid.
class DGPSpec {
 public:
  DGPSpec(std::vector<DgpAtom> support, std::vector<OutcomeRow> table);

  const std::vector<DgpAtom>& support() const noexcept { return support_; }
  double f(std::span<const double> x, int d) const;
  std::optional<double> noise(std::span<const double> x, int d) const;
  bool covers(std::span<const double> x) const;

  JointDist joint() const;
  EmpiricalCond conditional(int arm) const;
  double prob_treated() const;

 private:
  const OutcomeRow& row(std::span<const double> x) const;

  std::vector<DgpAtom> support_;
  std::map<std::vector<double>, OutcomeRow> table_;
};

/// theta_{G,F}: regression of f(x_i, d_i) on Z_i weighted by the masses of `g`.
RegressionFit conditional_estimand(const DGPSpec& dgp, const JointDist& g, const CovariateMap& map);
RegressionFit conditional_estimand(const DGPSpec& dgp, const CovariateMap& map);

/// Refit on (1, D, x'gamma_hat) where gamma_hat comes from `base_fit`.
RegressionFit induced_index_refit(const Sample& sample, const RegressionFit& base_fit);

/// ATT over g1: mean of f(x, 1) - f(x, 0).
double att_parameter(const DGPSpec& dgp, const EmpiricalCond& g1);

struct ExtendedParameters {
  double att = 0.0;   // tau
  double ateu = 0.0;  // tau^0
  double ate = 0.0;   // tau^10
  double prob_treated = 0.0;
  std::optional<double> interaction_att;  // E[Delta l(X, .) | D = 1] from the interaction fit
};

/// Interaction-model fit: Z = (1, D, s(X)', D (s(X) - E_{G1}[s(X)])').
/// Its beta is E[Delta l(X, .) | D = 1].
struct InteractionFit {
  RegressionFit fit;
  Eigen::VectorXd treated_mean;  // E_{G1}[s(X)]

  double model(std::span<const double> x, int d) const;
};

InteractionFit fit_interaction(const DGPSpec& dgp, const JointDist& g, const CovariateMap& map);

ExtendedParameters extended_parameters(const DGPSpec& dgp, const JointDist& g,
                                       const CovariateMap* interaction_map = nullptr);

/// Right-hand side of the short-vs-long regression gap:
/// beta_A - beta_B = sum_x (l^B(x,0) - l^A(x,0)) (g1(x) - g0(x)).
double regression_gap_representation(const RegressionFit& fit_a, const RegressionFit& fit_b, const JointDist& g);

}  // namespace bb
