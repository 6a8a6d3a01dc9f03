#include "biasbound/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "biasbound/error.hpp"
#include "biasbound/normal.hpp"

namespace bb {

namespace {

constexpr const char* kModule = "inference";

double bounding_diagonal(const Sample& s) {
  const std::size_t p = s.p();
  std::vector<double> lo(p, std::numeric_limits<double>::infinity()), hi(p, -std::numeric_limits<double>::infinity());
  for (const auto& u : s.units())
    for (std::size_t j = 0; j < p; ++j) {
      lo[j] = std::min(lo[j], u.x[j]);
      hi[j] = std::max(hi[j], u.x[j]);
    }
  double sq = 0.0;
  for (std::size_t j = 0; j < p; ++j) sq += (hi[j] - lo[j]) * (hi[j] - lo[j]);
  return std::sqrt(sq);
}

double euclid(const std::vector<double>& a, const std::vector<double>& b) {
  double sq = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) sq += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(sq);
}

// Scalar x, neighbours kept within arm: the nearest unit is adjacent in the
// arm's (x, index) order, with ties going to the lowest index.
std::vector<std::size_t> nearest_scalar_within_arm(const Sample& s) {
  std::vector<std::size_t> out(s.size());
  for (int arm : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s.unit(i).d == arm) idx.push_back(i);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const double xa = s.unit(a).x[0], xb = s.unit(b).x[0];
      return xa != xb ? xa < xb : a < b;
    });
    auto x = [&](std::size_t k) { return s.unit(idx[k]).x[0]; };
    const std::size_t n = idx.size();
    // run_start[k]: first position with the same x as position k.
    std::vector<std::size_t> run_start(n);
    for (std::size_t k = 0; k < n; ++k) run_start[k] = (k > 0 && x(k) == x(k - 1)) ? run_start[k - 1] : k;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t rs = run_start[k];
      const bool has_twin = (k > rs) || (k + 1 < n && x(k + 1) == x(k));
      if (has_twin) {
        out[idx[k]] = idx[rs == k ? k + 1 : rs];
        continue;
      }
      std::optional<std::size_t> best;
      double best_d = std::numeric_limits<double>::infinity();
      auto consider = [&](std::size_t pos) {
        const double dist = std::abs(x(pos) - x(k));
        if (dist < best_d || (dist == best_d && idx[pos] < *best)) {
          best_d = dist;
          best = idx[pos];
        }
      };
      if (k > 0) consider(run_start[k - 1]);
      if (k + 1 < n) consider(k + 1);
      out[idx[k]] = *best;
    }
  }
  return out;
}

std::vector<std::size_t> nearest_generic(const Sample& s, double kappa) {
  std::vector<std::size_t> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = i;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (j == i) continue;
      const double dist = euclid(s.unit(i).x, s.unit(j).x) + kappa * std::abs(s.unit(i).d - s.unit(j).d);
      if (dist < best) {
        best = dist;
        arg = j;
      }
    }
    out[i] = arg;
  }
  return out;
}

}  // namespace

VarianceEstimate matched_pair_variance(const Sample& sample, const RegressionFit& fit, std::optional<double> kappa) {
  const std::size_t n = sample.size();
  if (fit.n != n || static_cast<std::size_t>(fit.design.rows()) != n)
    throw Error(ErrorKind::contract, kModule, "fit and sample have different units");
  if (sample.count(1) < 2 || sample.count(0) < 2) throw Error(ErrorKind::validation, kModule, "no within-arm neighbor");

  VarianceEstimate v;
  const double diameter = bounding_diagonal(sample);
  v.kappa = kappa.value_or(1e6 * (diameter > 0.0 ? diameter : 1.0));
  if (v.kappa < 0.0) throw Error(ErrorKind::validation, kModule, "kappa must be non-negative");
  v.pair_map = (sample.p() == 1 && v.kappa > diameter) ? nearest_scalar_within_arm(sample) : nearest_generic(sample, v.kappa);

  const Eigen::Index k = fit.design.cols();
  // Score terms Z_i E_i, one row per unit.
  const Eigen::MatrixXd score = fit.design.array().colwise() * fit.residuals.array();
  Eigen::MatrixXd diff(static_cast<Eigen::Index>(n), k);
  for (std::size_t i = 0; i < n; ++i)
    diff.row(static_cast<Eigen::Index>(i)) =
        score.row(static_cast<Eigen::Index>(i)) - score.row(static_cast<Eigen::Index>(v.pair_map[i]));
  v.delta_hat = diff.transpose() * diff / (2.0 * static_cast<double>(n));
  v.delta_hat = 0.5 * (v.delta_hat + v.delta_hat.transpose()).eval();

  const Eigen::MatrixXd gamma_inv = fit.gram.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  v.sigma_hat = gamma_inv * v.delta_hat * gamma_inv;
  v.sigma_hat = 0.5 * (v.sigma_hat + v.sigma_hat.transpose()).eval();
  v.se_beta = std::sqrt(std::max(v.sigma_hat(1, 1), 0.0) / static_cast<double>(n));
  return v;
}

Interval RobustCI::endpoints(double m) const {
  if (m < 0.0) throw Error(ErrorKind::domain, kModule, "m must be non-negative");
  const double z_hi = normal_quantile(1.0 - alpha / 2.0);
  const double z_lo = normal_quantile(alpha / 2.0);
  return {beta_hat - z_hi * se - m * c, beta_hat - z_lo * se + m * c};
}

std::vector<TrapezoidPoint> RobustCI::trapezoid(double m_max, int steps) const {
  if (steps < 1) steps = 1;
  std::vector<TrapezoidPoint> out;
  for (int s = 0; s <= steps; ++s) {
    const double m = m_max * s / steps;
    const Interval iv = endpoints(m);
    out.push_back({m, iv.lo, iv.hi});
  }
  return out;
}

RobustCI robust_ci(double beta_hat, double se, double c, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::validation, kModule, "alpha must lie in (0, 1)");
  if (!(c >= 0.0) || !(se >= 0.0)) throw Error(ErrorKind::validation, kModule, "c and se must be non-negative");
  return {alpha, beta_hat, se, c};
}

RobustCI robust_ci(const RegressionFit& fit, const VarianceEstimate& var, double c, double alpha) {
  return robust_ci(fit.beta(), var.se_beta, c, alpha);
}

double m_value(const RobustCI& ci, double null_tau) {
  const Interval base = ci.endpoints(0.0);
  if (base.contains(null_tau)) return 0.0;
  if (ci.c == 0.0) return std::numeric_limits<double>::infinity();
  const double gap = null_tau < base.lo ? base.lo - null_tau : null_tau - base.hi;
  double m = gap / ci.c;
  // Rounding can leave null_tau one ulp outside C(m); step up until it is in.
  for (int i = 0; i < 8 && !ci.endpoints(m).contains(null_tau); ++i)
    m = std::nextafter(m, std::numeric_limits<double>::infinity());
  return m;
}

double t_stat(double beta_hat, double se, double null_tau) {
  if (!(se > 0.0)) throw Error(ErrorKind::degenerate, kModule, "standard error is zero");
  return (beta_hat - null_tau) / se;
}

}  // namespace bb
