#include "biasbound/misspec.hpp"

#include <algorithm>
#include <cmath>

#include "biasbound/error.hpp"
#include "biasbound/linprog.hpp"

namespace bb {

namespace {

constexpr const char* kModule = "misspec";

// Rows a_i, b_i of the uniform form slack_i >= b_i - a_i'zeta. Arm-1 rows come
// first, in EmpiricalCond order.
struct Constraints {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  std::size_t n1 = 0;
};

double scalar_location(const MassPoint& pt) {
  if (pt.location.size() != 1) throw Error(ErrorKind::domain, kModule, "perturbations are defined on a scalar index");
  return pt.location[0];
}

Constraints build_constraints(const Perturbation& h, const SummarySet& rset, const EmpiricalCond& g1,
                              const EmpiricalCond& g0, int sigma) {
  if (sigma != 1 && sigma != -1) throw Error(ErrorKind::contract, kModule, "sigma must be +1 or -1");
  if (rset.size() == 0) throw Error(ErrorKind::contract, kModule, "separation needs at least one summary");
  Constraints c;
  c.n1 = g1.points().size();
  const auto rows = static_cast<Eigen::Index>(c.n1 + g0.points().size());
  c.a.resize(rows, static_cast<Eigen::Index>(rset.size()));
  c.b.resize(rows);
  Eigen::Index i = 0;
  for (const auto& pt : g1.points()) {
    c.a.row(i) = sigma * rset.evaluate(pt.location).transpose();
    c.b[i++] = sigma * h(scalar_location(pt));
  }
  for (const auto& pt : g0.points()) {
    c.a.row(i) = -sigma * rset.evaluate(pt.location).transpose();
    c.b[i++] = -sigma * h(scalar_location(pt));
  }
  return c;
}

Eigen::VectorXd hinge(const Constraints& c, const Eigen::VectorXd& zeta) {
  return (c.b - c.a * zeta).cwiseMax(0.0);
}

// min total slack over zeta through its dual,
// max b'lambda s.t. A'lambda = 0, 0 <= lambda <= 1, whose multipliers are zeta.
Eigen::VectorXd min_total_slack(const Constraints& c) {
  const Eigen::Index n = c.a.rows();
  const BoundedLpResult res = bounded_simplex(c.a.transpose(), c.b, Eigen::VectorXd::Ones(n));
  if (!res.optimal) throw Error(ErrorKind::numerical, kModule, "slack minimization did not converge");
  const double scale = std::max(1.0, c.b.cwiseAbs().maxCoeff());
  if (std::abs(hinge(c, res.duals).sum() - res.objective) > 1e-8 * scale * static_cast<double>(n))
    throw Error(ErrorKind::numerical, kModule, "slack minimization lost its duality certificate");
  return res.duals;
}

// Dual coordinate ascent for min ||zeta||^2 + L sum hinge(b - A zeta):
// zeta = A'lambda / 2 with lambda in [0, L].
Eigen::VectorXd penalized(const Constraints& c, double penalty) {
  const Eigen::Index n = c.a.rows();
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd zeta = Eigen::VectorXd::Zero(c.a.cols());
  const Eigen::VectorXd norms = c.a.rowwise().squaredNorm();
  for (int sweep = 0; sweep < 100000; ++sweep) {
    double change = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (norms[i] == 0.0) {
        lambda[i] = c.b[i] > 0.0 ? penalty : 0.0;
        continue;
      }
      const double grad = c.b[i] - c.a.row(i).dot(zeta);
      const double next = std::clamp(lambda[i] + 2.0 * grad / norms[i], 0.0, penalty);
      const double step = next - lambda[i];
      if (step != 0.0) {
        zeta += 0.5 * step * c.a.row(i).transpose();
        lambda[i] = next;
        change = std::max(change, std::abs(step) * std::sqrt(norms[i]));
      }
    }
    if (change < 1e-12) break;
  }
  return zeta;
}

double mass_weighted(const std::vector<double>& slacks, const EmpiricalCond& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < slacks.size(); ++i) s += slacks[i] * g.points()[i].mass;
  return s;
}

}  // namespace

// ------------------------------------------------------------- Perturbation

Perturbation::Perturbation(std::vector<Knot> knots) : knots_(std::move(knots)) {
  if (knots_.empty()) throw Error(ErrorKind::validation, kModule, "knots required");
  for (std::size_t k = 0; k < knots_.size(); ++k) {
    if (!std::isfinite(knots_[k].t) || !std::isfinite(knots_[k].h))
      throw Error(ErrorKind::validation, kModule, "knot " + std::to_string(k) + " is not finite");
    if (k > 0 && !(knots_[k].t > knots_[k - 1].t))
      throw Error(ErrorKind::validation, kModule, "knot t values must be strictly increasing (knot " + std::to_string(k) + ")");
  }
}

double Perturbation::operator()(double t) const {
  if (t <= knots_.front().t) return knots_.front().h;
  if (t >= knots_.back().t) return knots_.back().h;
  auto hi = std::upper_bound(knots_.begin(), knots_.end(), t, [](double v, const Knot& k) { return v < k.t; });
  auto lo = hi - 1;
  if (t == lo->t) return lo->h;
  const double w = (t - lo->t) / (hi->t - lo->t);
  return lo->h + w * (hi->h - lo->h);
}

Perturbation Perturbation::scaled(double a) const {
  std::vector<Knot> k = knots_;
  for (auto& knot : k) knot.h *= a;
  return Perturbation(std::move(k));
}

// ----------------------------------------------------------------- norms

double m_total_variation(const Perturbation& h) {
  const auto& k = h.knots();
  double tv = 0.0;
  for (std::size_t i = 1; i < k.size(); ++i) tv += std::abs(k[i].h - k[i - 1].h);
  return tv;
}

double m_lipschitz(const Perturbation& h) {
  const auto& k = h.knots();
  double lip = 0.0;
  for (std::size_t i = 1; i < k.size(); ++i) lip = std::max(lip, std::abs(k[i].h - k[i - 1].h) / (k[i].t - k[i - 1].t));
  return lip;
}

double m_sup(const Perturbation& h, std::optional<std::span<const double>> support) {
  double sup = 0.0;
  if (support) {
    for (double t : *support) sup = std::max(sup, std::abs(h(t)));
  } else {
    for (const auto& k : h.knots()) sup = std::max(sup, std::abs(k.h));
  }
  return sup;
}

double m_l2_g0(const Perturbation& h, const EmpiricalCond& g0) {
  double sq = 0.0;
  for (const auto& pt : g0.points()) {
    const double v = h(scalar_location(pt));
    sq += v * v * pt.mass;
  }
  return std::sqrt(sq);
}

double dr_singular_term(const Perturbation& h, const EmpiricalCond& g1, const EmpiricalCond& g0) {
  double s = 0.0;
  for (const auto& pt : g1.points())
    if (g0.mass_at(pt.location) == 0.0) s += h(scalar_location(pt)) * pt.mass;
  return std::abs(s);
}

// ------------------------------------------------------------- separation

double SeparationSolution::max_residual(const Perturbation& h, const SummarySet& rset, const EmpiricalCond& g1,
                                        const EmpiricalCond& g0) const {
  const Constraints c = build_constraints(h, rset, g1, g0, sigma);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < c.a.rows(); ++i) {
    const auto iu = static_cast<std::size_t>(i);
    const double slack = iu < c.n1 ? slacks1.at(iu) : slacks0.at(iu - c.n1);
    worst = std::max({worst, c.b[i] - c.a.row(i).dot(zeta) - slack, -slack});
  }
  return worst;
}

SeparationSolution solve_separation(const Perturbation& h, const SummarySet& rset, const EmpiricalCond& g1,
                                    const EmpiricalCond& g0, int sigma, double penalty) {
  if (!(penalty >= 0.0)) throw Error(ErrorKind::contract, kModule, "penalty L must be non-negative");
  const Constraints c = build_constraints(h, rset, g1, g0, sigma);
  const double scale = std::max(1.0, c.b.cwiseAbs().maxCoeff());

  Eigen::VectorXd zeta;
  if (std::isinf(penalty)) {
    zeta = min_total_slack(c);
    if (hinge(c, zeta).sum() <= 1e-10 * scale) {
      Eigen::VectorXd sharp;
      if (least_distance(c.a, c.b, sharp) && hinge(c, sharp).sum() <= 1e-9 * scale) zeta = sharp;
    }
  } else {
    zeta = penalized(c, penalty);
  }

  const Eigen::VectorXd slack = hinge(c, zeta);
  SeparationSolution sol;
  sol.zeta = zeta;
  sol.sigma = sigma;
  sol.penalty = penalty;
  sol.n1 = c.n1;
  sol.n0 = g0.points().size();
  sol.n_summaries = rset.size();
  sol.slacks1.assign(slack.data(), slack.data() + c.n1);
  sol.slacks0.assign(slack.data() + c.n1, slack.data() + slack.size());
  const double total = slack.sum();
  sol.sharp = total <= 1e-9 * scale;
  sol.objective = std::isinf(penalty) ? total : zeta.squaredNorm() + penalty * total;
  return sol;
}

MdMisspec m_md(const SeparationSolution& plus, const SeparationSolution& minus, const EmpiricalCond& g1,
               const EmpiricalCond& g0) {
  if (plus.sigma != 1 || minus.sigma != -1)
    throw Error(ErrorKind::contract, kModule, "m_md needs the sigma=+1 and sigma=-1 solutions");
  const std::size_t n1 = g1.points().size(), n0 = g0.points().size();
  for (const auto* s : {&plus, &minus}) {
    if (s->n1 != n1 || s->n0 != n0 || s->slacks1.size() != n1 || s->slacks0.size() != n0 ||
        s->n_summaries != static_cast<std::size_t>(plus.zeta.size()) || s->zeta.size() != plus.zeta.size())
      throw Error(ErrorKind::contract, kModule, "separation solutions come from different problem instances");
  }
  MdMisspec out;
  out.m = plus.zeta.cwiseAbs().cwiseMax(minus.zeta.cwiseAbs());
  for (const auto* s : {&plus, &minus}) out.slack += mass_weighted(s->slacks1, g1) + mass_weighted(s->slacks0, g0);
  return out;
}

MisspecVector compute_misspec(const Perturbation& h, const EmpiricalCond& g1, const EmpiricalCond& g0,
                              const SummarySet* rset, double penalty) {
  MisspecVector m;
  m.ks = m_total_variation(h);
  m.lip = m_lipschitz(h);
  std::vector<double> support;
  for (const auto* g : {&g1, &g0})
    for (const auto& pt : g->points()) support.push_back(scalar_location(pt));
  m.sup = m_sup(h, std::span<const double>(support));
  m.l2_g0 = m_l2_g0(h, g0);
  m.dr_singular = dr_singular_term(h, g1, g0);
  if (rset && rset->size() > 0) {
    const auto plus = solve_separation(h, *rset, g1, g0, 1, penalty);
    const auto minus = solve_separation(h, *rset, g1, g0, -1, penalty);
    m.md = m_md(plus, minus, g1, g0);
  }
  return m;
}

}  // namespace bb
