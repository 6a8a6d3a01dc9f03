#include "biasbound/linprog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "biasbound/error.hpp"

namespace bb {

namespace {

// Inverse of the basis columns of [A | I].
Eigen::MatrixXd basis_inverse(const Eigen::MatrixXd& a, const std::vector<Eigen::Index>& basis) {
  const Eigen::Index k = a.rows(), m = a.cols();
  Eigen::MatrixXd b(k, k);
  for (Eigen::Index r = 0; r < k; ++r)
    b.col(r) = basis[r] < m ? Eigen::VectorXd(a.col(basis[r])) : Eigen::VectorXd::Unit(k, basis[r] - m);
  return b.partialPivLu().inverse();
}

}  // namespace

BoundedLpResult bounded_simplex(const Eigen::MatrixXd& a, const Eigen::VectorXd& c, const Eigen::VectorXd& upper) {
  const Eigen::Index k = a.rows(), m = a.cols();
  if (c.size() != m || upper.size() != m) throw Error(ErrorKind::contract, "linprog", "simplex dimensions disagree");
  if ((upper.array() < 0.0).any()) throw Error(ErrorKind::contract, "linprog", "upper bounds must be non-negative");

  const double scale = std::max({1.0, c.cwiseAbs().maxCoeff(), a.cwiseAbs().maxCoeff()});
  const double tol = 1e-11 * scale;

  // Columns m..m+k-1 are artificials fixed at zero; they start basic.
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(k));
  for (Eigen::Index r = 0; r < k; ++r) basis[r] = m + r;
  std::vector<char> in_basis(static_cast<std::size_t>(m), 0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m);   // non-basic originals sit at 0 or upper
  Eigen::VectorXd xb = Eigen::VectorXd::Zero(k);  // basic values
  Eigen::MatrixXd binv = Eigen::MatrixXd::Identity(k, k);
  auto cost_of = [&](Eigen::Index j) { return j < m ? c[j] : 0.0; };
  auto upper_of = [&](Eigen::Index j) { return j < m ? upper[j] : 0.0; };

  BoundedLpResult out;
  const int cap = static_cast<int>(20 * (m + k) + 1000);
  Eigen::VectorXd pi(k);
  for (; out.iterations < cap; ++out.iterations) {
    if (out.iterations % 64 == 63) binv = basis_inverse(a, basis);
    Eigen::VectorXd cb(k);
    for (Eigen::Index r = 0; r < k; ++r) cb[r] = cost_of(basis[r]);
    pi = binv.transpose() * cb;

    // Bland: lowest-index improving column.
    Eigen::Index enter = -1;
    double dir = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (in_basis[static_cast<std::size_t>(j)] || upper[j] == 0.0) continue;
      const double d = c[j] - pi.dot(a.col(j));
      if (x[j] == 0.0 && d > tol) dir = 1.0;
      else if (x[j] == upper[j] && d < -tol) dir = -1.0;
      else continue;
      enter = j;
      break;
    }
    if (enter < 0) {
      out.optimal = true;
      break;
    }

    const Eigen::VectorXd alpha = binv * a.col(enter);
    double step = upper[enter];
    Eigen::Index leave = -1;
    for (Eigen::Index r = 0; r < k; ++r) {
      const double rate = dir * alpha[r];  // x_B decreases by rate * t
      double limit;
      if (rate > 1e-12) limit = std::max(xb[r], 0.0) / rate;
      else if (rate < -1e-12) limit = std::max(upper_of(basis[r]) - xb[r], 0.0) / -rate;
      else continue;
      if (limit < step - 1e-15 || (leave >= 0 && std::abs(limit - step) <= 1e-15 && basis[r] < basis[leave])) {
        step = limit;
        leave = r;
      }
    }

    xb -= dir * step * alpha;
    if (leave < 0) {
      x[enter] = dir > 0 ? upper[enter] : 0.0;  // bound flip
      continue;
    }
    const Eigen::Index old = basis[leave];
    const double rate = dir * alpha[leave];
    if (old < m) {
      x[old] = rate > 0 ? 0.0 : upper[old];
      in_basis[static_cast<std::size_t>(old)] = 0;
    }
    const double entered = x[enter] + dir * step;
    x[enter] = 0.0;
    basis[leave] = enter;
    in_basis[static_cast<std::size_t>(enter)] = 1;
    xb[leave] = entered;
    const Eigen::RowVectorXd pivot_row = binv.row(leave) / alpha[leave];
    for (Eigen::Index r = 0; r < k; ++r)
      if (r != leave) binv.row(r) -= alpha[r] * pivot_row;
    binv.row(leave) = pivot_row;
  }

  // Final values from the non-basic bounds: B x_B = -N x_N.
  binv = basis_inverse(a, basis);
  Eigen::VectorXd cb(k);
  for (Eigen::Index r = 0; r < k; ++r) cb[r] = cost_of(basis[r]);
  out.duals = binv.transpose() * cb;
  xb = -binv * (a * x);
  out.x = x;
  for (Eigen::Index r = 0; r < k; ++r)
    if (basis[r] < m) out.x[basis[r]] = std::clamp(xb[r], 0.0, upper[basis[r]]);
  out.objective = c.dot(out.x);
  return out;
}

Eigen::VectorXd nnls(const Eigen::MatrixXd& e, const Eigen::VectorXd& f, int max_iter) {
  const Eigen::Index n = e.cols();
  if (max_iter <= 0) max_iter = static_cast<int>(30 * n + 100);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double tol = 1e-13 * std::max(1.0, e.cwiseAbs().maxCoeff()) * std::max(1.0, f.cwiseAbs().maxCoeff());

  auto solve_passive = [&](Eigen::VectorXd& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    Eigen::MatrixXd ep(e.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) ep.col(static_cast<Eigen::Index>(k)) = e.col(idx[k]);
    const Eigen::VectorXd zp = ep.colPivHouseholderQr().solve(f);
    z = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < idx.size(); ++k) z[idx[k]] = zp[static_cast<Eigen::Index>(k)];
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::VectorXd w = e.transpose() * (f - e * x);
    Eigen::Index best = -1;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w[j] > tol && (best < 0 || w[j] > w[best])) best = j;
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    Eigen::VectorXd z;
    for (int inner = 0; inner <= n; ++inner) {
      solve_passive(z);
      bool all_positive = true;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && z[j] <= 0.0) all_positive = false;
      if (all_positive) break;
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && z[j] <= 0.0) alpha = std::min(alpha, x[j] / (x[j] - z[j]));
      x += alpha * (z - x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && x[j] <= 1e-15) {
          passive[static_cast<std::size_t>(j)] = false;
          x[j] = 0.0;
        }
      }
    }
    x = z.cwiseMax(0.0);
  }
  return x;
}

bool least_distance(const Eigen::MatrixXd& g, const Eigen::VectorXd& h, Eigen::VectorXd& x) {
  const Eigen::Index m = g.rows(), k = g.cols();
  Eigen::MatrixXd e(k + 1, m);
  e.topRows(k) = g.transpose();
  e.row(k) = h.transpose();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(k + 1);
  f[k] = 1.0;
  const Eigen::VectorXd u = nnls(e, f);
  const Eigen::VectorXd r = e * u - f;
  if (r.norm() < 1e-12 || std::abs(r[k]) < 1e-14) return false;
  x = -r.head(k) / r[k];
  return true;
}

}  // namespace bb
