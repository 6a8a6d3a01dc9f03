// Generators and brute-force oracles shared by the unit tests and the
// acceptance binary. Nothing here calls into the library's solvers.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "biasbound/bounds.hpp"
#include "biasbound/imbalance.hpp"
#include "biasbound/misspec.hpp"
#include "biasbound/regression.hpp"
#include "biasbound/sample.hpp"

namespace bbtest {

using Rng = std::mt19937_64;

inline double unif(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline int unif_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Scalar-x finite DGP: `n_x` distinct grid points, at most 12 atoms, both
/// arms on at least two points. f is arbitrary on the grid.
inline bb::DGPSpec random_scalar_dgp(Rng& rng, int n_x) {
  std::vector<double> xs;
  while (static_cast<int>(xs.size()) < n_x) {
    const double x = std::round(unif(rng, -3.0, 3.0) * 8.0) / 8.0;
    if (std::find(xs.begin(), xs.end(), x) == xs.end()) xs.push_back(x);
  }
  std::vector<bb::DgpAtom> atoms;
  for (int arm : {0, 1}) {
    std::vector<int> idx(xs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const int k = unif_int(rng, 2, n_x);
    for (int j = 0; j < k; ++j) atoms.push_back({{xs[idx[j]]}, arm, unif(rng, 0.05, 1.0)});
  }
  double total = 0.0;
  for (const auto& a : atoms) total += a.prob;
  for (auto& a : atoms) a.prob /= total;
  std::vector<bb::OutcomeRow> table;
  for (double x : xs) table.push_back({{x}, unif(rng, -2.0, 2.0), unif(rng, -2.0, 2.0), std::nullopt, std::nullopt});
  return bb::DGPSpec(std::move(atoms), std::move(table));
}

/// Vector-x DGP (p = 2) for the representation identity.
inline bb::DGPSpec random_vector_dgp(Rng& rng, int n_x) {
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < n_x; ++i) xs.push_back({unif(rng, -2.0, 2.0), unif(rng, -2.0, 2.0)});
  std::vector<bb::DgpAtom> atoms;
  for (int arm : {0, 1})
    for (int j = 0; j < n_x; ++j)
      if (j < 3 || unif(rng, 0.0, 1.0) < 0.6) atoms.push_back({xs[j], arm, unif(rng, 0.05, 1.0)});
  double total = 0.0;
  for (const auto& a : atoms) total += a.prob;
  for (auto& a : atoms) a.prob /= total;
  std::vector<bb::OutcomeRow> table;
  for (const auto& x : xs) table.push_back({x, unif(rng, -2.0, 2.0), unif(rng, -2.0, 2.0), std::nullopt, std::nullopt});
  return bb::DGPSpec(std::move(atoms), std::move(table));
}

/// h = f(., 0) - l(., 0) tabulated on the sorted scalar support.
inline bb::Perturbation residual_function(const bb::DGPSpec& dgp, const bb::RegressionFit& fit) {
  std::vector<double> ts;
  for (const auto& a : dgp.support()) ts.push_back(a.x[0]);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  std::vector<bb::Perturbation::Knot> knots;
  for (double t : ts) knots.push_back({t, dgp.f(std::vector<double>{t}, 0) - fit.model(std::vector<double>{t}, 0)});
  return bb::Perturbation(std::move(knots));
}

/// Equal-mass empirical distribution on scalar points.
inline bb::EmpiricalCond equal_mass(int arm, const std::vector<double>& xs) {
  std::vector<bb::MassPoint> pts;
  for (double x : xs) pts.push_back({{x}, 1.0});
  return bb::EmpiricalCond(arm, std::move(pts));
}

/// Minimal coupling cost between two equal-size equal-mass samples by
/// exhaustive search over permutations.
inline double coupling_by_permutation(const std::vector<double>& a, std::vector<double> b) {
  std::sort(b.begin(), b.end());
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) cost += std::abs(a[i] - b[i]);
    best = std::min(best, cost);
  } while (std::next_permutation(b.begin(), b.end()));
  return best / static_cast<double>(a.size());
}

/// Same cost via the sorted (monotone) matching.
inline double coupling_sorted(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double cost = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) cost += std::abs(a[i] - b[i]);
  return cost / static_cast<double>(a.size());
}

/// Rows (a_i, b_i) of the separation constraints slack_i >= b_i - a_i' zeta.
struct SeparationRows {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
};

inline SeparationRows separation_rows(const bb::Perturbation& h, const bb::SummarySet& rset, const bb::EmpiricalCond& g1,
                                      const bb::EmpiricalCond& g0, int sigma) {
  const auto k = static_cast<Eigen::Index>(rset.size());
  SeparationRows rows{Eigen::MatrixXd(static_cast<Eigen::Index>(g1.size() + g0.size()), k),
                      Eigen::VectorXd(static_cast<Eigen::Index>(g1.size() + g0.size()))};
  Eigen::Index i = 0;
  for (const auto* g : {&g1, &g0}) {
    const double arm_sign = g == &g1 ? 1.0 : -1.0;
    for (const auto& pt : g->points()) {
      rows.a.row(i) = arm_sign * sigma * rset.evaluate(pt.location).transpose();
      rows.b[i] = arm_sign * sigma * h(pt.location[0]);
      ++i;
    }
  }
  return rows;
}

inline double total_hinge(const SeparationRows& rows, const Eigen::VectorXd& zeta) {
  return (rows.b - rows.a * zeta).cwiseMax(0.0).sum();
}

/// Minimum of the convex piecewise-linear total slack, by enumerating every
/// vertex of the hyperplane arrangement (k independent active rows). Returns
/// NaN when the rows do not span R^k.
inline double brute_min_slack(const SeparationRows& rows) {
  const auto m = rows.a.rows(), k = rows.a.cols();
  if (Eigen::FullPivLU<Eigen::MatrixXd>(rows.a).rank() < k) return std::numeric_limits<double>::quiet_NaN();
  double best = std::numeric_limits<double>::infinity();
  std::vector<bool> pick(static_cast<std::size_t>(m), false);
  std::fill(pick.begin(), pick.begin() + k, true);
  do {
    Eigen::MatrixXd sub(k, k);
    Eigen::VectorXd rhs(k);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < m; ++i)
      if (pick[static_cast<std::size_t>(i)]) {
        sub.row(r) = rows.a.row(i);
        rhs[r++] = rows.b[i];
      }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
    if (lu.rank() < k) continue;
    best = std::min(best, total_hinge(rows, lu.solve(rhs)));
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

/// Summary set of `k` functions of a scalar location: 1, t, then random tables.
inline bb::SummarySet random_summaries(Rng& rng, int k, const std::vector<double>& support) {
  bb::SummarySet set;
  set.add(bb::SummarySet::constant());
  if (k >= 2) set.add(bb::SummarySet::coordinate(0));
  for (int j = 2; j < k; ++j) {
    std::map<std::vector<double>, double> table;
    for (double t : support) table[{t}] = unif(rng, -1.0, 1.0);
    set.add(bb::SummarySet::table("r" + std::to_string(j + 1), std::move(table)));
  }
  return set;
}

}  // namespace bbtest
