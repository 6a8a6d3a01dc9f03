#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "biasbound/regression.hpp"
#include "biasbound/sample.hpp"

namespace bb {

/// A named function r_j of a support location.
struct Summary {
  std::string name;
  std::function<double(std::span<const double>)> eval;
};

/// Summaries r(x) = (r_j(x))_j used by the mean-difference family.
class SummarySet {
 public:
  SummarySet() = default;
  explicit SummarySet(std::vector<Summary> summaries) : summaries_(std::move(summaries)) {}

  static Summary constant();
  static Summary coordinate(std::size_t j);
  static Summary index(LinearIndex idx, std::string name = "index");
  /// Values looked up by exact location; unlisted points are a domain error.
  static Summary table(std::string name, std::map<std::vector<double>, double> values);
  /// min(-l(x), 0) for a model function l.
  static Summary clipped_negative_model(std::string name, std::function<double(std::span<const double>)> model);

  /// (1, x_1, ..., x_p).
  static SummarySet constant_and_coordinates(std::size_t p);

  SummarySet& add(Summary s) {
    summaries_.push_back(std::move(s));
    return *this;
  }

  std::size_t size() const noexcept { return summaries_.size(); }
  std::vector<std::string> names() const;
  const std::vector<Summary>& summaries() const noexcept { return summaries_; }

  /// r(x); a non-finite value is a domain error naming summary and point.
  Eigen::VectorXd evaluate(std::span<const double> x) const;

 private:
  std::vector<Summary> summaries_;
};

/// sup_x |G1(x) - G0(x)| over scalar locations.
double ks_distance(const EmpiricalCond& g1, const EmpiricalCond& g0);

/// Integral of |G1 - G0| over the merged support (1-D optimal transport cost).
double wasserstein1(const EmpiricalCond& g1, const EmpiricalCond& g0);

/// sum over the union support of |g1(x) - g0(x)|; in [0, 2].
double total_variation_l1(const EmpiricalCond& g1, const EmpiricalCond& g0);

struct DensityRatio {
  double c = 0.0;              // || dG1/dG0 - 1 ||_{L2(G0)} using the absolutely continuous part of G1
  double singular_mass = 0.0;  // G1 mass outside the G0 support
};

/// Directional: swapping the arguments changes the result in general.
DensityRatio density_ratio_l2(const EmpiricalCond& g1, const EmpiricalCond& g0);

/// |E_{G1}[r] - E_{G0}[r]| componentwise.
Eigen::VectorXd mean_differences(const EmpiricalCond& g1, const EmpiricalCond& g0, const SummarySet& rset);

struct LpInterval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Interval containing 2 * Levy-Prokhorov distance: [w1, 2 sqrt(w1)].
LpInterval lp_sandwich(const EmpiricalCond& g1, const EmpiricalCond& g0);
LpInterval lp_sandwich_from_w1(double w1);

/// Every imbalance family for one pair of distributions. Scalar-only families
/// (ks, w1, lp) are empty for vector locations.
struct ImbalanceVector {
  std::optional<double> ks;
  std::optional<double> w1;
  double tv = 0.0;
  double dr = 0.0;
  double dr_singular = 0.0;
  std::optional<Eigen::VectorXd> md;
  std::vector<std::string> md_names;
  std::optional<LpInterval> lp;
};

ImbalanceVector compute_imbalance(const EmpiricalCond& g1, const EmpiricalCond& g0, const SummarySet* rset = nullptr);

}  // namespace bb
