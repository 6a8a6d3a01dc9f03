#include "biasbound/imbalance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "biasbound/error.hpp"

namespace bb {

namespace {

constexpr const char* kModule = "imbalance";

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, kModule, msg); }

std::string format_point(std::span<const double> x) {
  std::ostringstream os;
  os << "(";
  for (std::size_t j = 0; j < x.size(); ++j) os << (j ? ", " : "") << x[j];
  os << ")";
  return os.str();
}

void require_scalar(const EmpiricalCond& g1, const EmpiricalCond& g0, const char* what) {
  if (!g1.is_scalar() || !g0.is_scalar())
    fail(ErrorKind::domain, std::string(what) + " needs scalar locations; push the covariates through an index first");
}

// Walks the merged sorted support and reports (location, F1 - F0) after each
// jump.
template <typename Visit>
void walk_cdf_difference(const EmpiricalCond& g1, const EmpiricalCond& g0, Visit&& visit) {
  const auto& a = g1.points();
  const auto& b = g0.points();
  std::size_t i = 0, j = 0;
  double cdf1 = 0.0, cdf0 = 0.0;
  while (i < a.size() || j < b.size()) {
    double x;
    if (j == b.size() || (i < a.size() && a[i].location[0] <= b[j].location[0])) {
      x = a[i].location[0];
    } else {
      x = b[j].location[0];
    }
    while (i < a.size() && a[i].location[0] == x) cdf1 += a[i++].mass;
    while (j < b.size() && b[j].location[0] == x) cdf0 += b[j++].mass;
    visit(x, cdf1 - cdf0);
  }
}

}  // namespace

// ---------------------------------------------------------------- summaries

Summary SummarySet::constant() {
  return {"1", [](std::span<const double>) { return 1.0; }};
}

Summary SummarySet::coordinate(std::size_t j) {
  return {"x" + std::to_string(j + 1), [j](std::span<const double> x) {
            if (j >= x.size()) return std::numeric_limits<double>::quiet_NaN();
            return x[j];
          }};
}

Summary SummarySet::index(LinearIndex idx, std::string name) {
  return {std::move(name), [idx = std::move(idx)](std::span<const double> x) { return idx(x); }};
}

Summary SummarySet::table(std::string name, std::map<std::vector<double>, double> values) {
  return {std::move(name), [values = std::move(values)](std::span<const double> x) {
            auto it = values.find(std::vector<double>(x.begin(), x.end()));
            return it == values.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
          }};
}

Summary SummarySet::clipped_negative_model(std::string name, std::function<double(std::span<const double>)> model) {
  return {std::move(name), [model = std::move(model)](std::span<const double> x) { return std::min(-model(x), 0.0); }};
}

SummarySet SummarySet::constant_and_coordinates(std::size_t p) {
  SummarySet s;
  s.add(constant());
  for (std::size_t j = 0; j < p; ++j) s.add(coordinate(j));
  return s;
}

std::vector<std::string> SummarySet::names() const {
  std::vector<std::string> out;
  for (const auto& s : summaries_) out.push_back(s.name);
  return out;
}

Eigen::VectorXd SummarySet::evaluate(std::span<const double> x) const {
  Eigen::VectorXd r(static_cast<Eigen::Index>(summaries_.size()));
  for (std::size_t j = 0; j < summaries_.size(); ++j) {
    const double v = summaries_[j].eval(x);
    if (!std::isfinite(v)) fail(ErrorKind::domain, "summary '" + summaries_[j].name + "' cannot be evaluated at " + format_point(x));
    r[static_cast<Eigen::Index>(j)] = v;
  }
  return r;
}

// ------------------------------------------------------------------ metrics

double ks_distance(const EmpiricalCond& g1, const EmpiricalCond& g0) {
  require_scalar(g1, g0, "Kolmogorov-Smirnov distance");
  double sup = 0.0;
  walk_cdf_difference(g1, g0, [&](double, double diff) { sup = std::max(sup, std::abs(diff)); });
  return std::min(sup, 1.0);
}

double wasserstein1(const EmpiricalCond& g1, const EmpiricalCond& g0) {
  require_scalar(g1, g0, "Wasserstein distance");
  double cost = 0.0;
  bool started = false;
  double prev_x = 0.0, prev_diff = 0.0;
  walk_cdf_difference(g1, g0, [&](double x, double diff) {
    if (started) cost += std::abs(prev_diff) * (x - prev_x);
    started = true;
    prev_x = x;
    prev_diff = diff;
  });
  return cost;
}

double total_variation_l1(const EmpiricalCond& g1, const EmpiricalCond& g0) {
  if (g1.dim() != g0.dim()) fail(ErrorKind::contract, "distributions live in different dimensions");
  const auto& a = g1.points();
  const auto& b = g0.points();
  std::size_t i = 0, j = 0;
  double tv = 0.0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && location_less(a[i].location, b[j].location))) {
      tv += a[i++].mass;
    } else if (i == a.size() || location_less(b[j].location, a[i].location)) {
      tv += b[j++].mass;
    } else {
      tv += std::abs(a[i++].mass - b[j++].mass);
    }
  }
  return std::min(tv, 2.0);
}

DensityRatio density_ratio_l2(const EmpiricalCond& g1, const EmpiricalCond& g0) {
  if (g1.dim() != g0.dim()) fail(ErrorKind::contract, "distributions live in different dimensions");
  DensityRatio out;
  double sq = 0.0;
  for (const auto& pt : g0.points()) {
    const double ratio = g1.mass_at(pt.location) / pt.mass;
    sq += pt.mass * (ratio - 1.0) * (ratio - 1.0);
  }
  for (const auto& pt : g1.points())
    if (g0.mass_at(pt.location) == 0.0) out.singular_mass += pt.mass;
  out.c = std::sqrt(sq);
  return out;
}

Eigen::VectorXd mean_differences(const EmpiricalCond& g1, const EmpiricalCond& g0, const SummarySet& rset) {
  const auto k = static_cast<Eigen::Index>(rset.size());
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(k), m0 = Eigen::VectorXd::Zero(k);
  for (const auto& pt : g1.points()) m1 += pt.mass * rset.evaluate(pt.location);
  for (const auto& pt : g0.points()) m0 += pt.mass * rset.evaluate(pt.location);
  return (m1 - m0).cwiseAbs();
}

LpInterval lp_sandwich_from_w1(double w1) {
  if (!(w1 >= 0.0)) fail(ErrorKind::domain, "Wasserstein distance must be non-negative");
  return {w1, 2.0 * std::sqrt(w1)};
}

LpInterval lp_sandwich(const EmpiricalCond& g1, const EmpiricalCond& g0) {
  return lp_sandwich_from_w1(wasserstein1(g1, g0));
}

ImbalanceVector compute_imbalance(const EmpiricalCond& g1, const EmpiricalCond& g0, const SummarySet* rset) {
  ImbalanceVector c;
  if (g1.is_scalar() && g0.is_scalar()) {
    c.ks = ks_distance(g1, g0);
    c.w1 = wasserstein1(g1, g0);
    c.lp = lp_sandwich_from_w1(*c.w1);
  }
  c.tv = total_variation_l1(g1, g0);
  const DensityRatio dr = density_ratio_l2(g1, g0);
  c.dr = dr.c;
  c.dr_singular = dr.singular_mass;
  if (rset && rset->size() > 0) {
    c.md = mean_differences(g1, g0, *rset);
    c.md_names = rset->names();
  }
  return c;
}

}  // namespace bb
