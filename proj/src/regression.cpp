#include "biasbound/regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "biasbound/error.hpp"

namespace bb {

namespace {

constexpr const char* kModule = "regression";

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, kModule, msg); }

std::vector<std::string> regressor_names(const CovariateMap& map, std::size_t p) {
  std::vector<std::string> names{"intercept", "D"};
  for (auto& n : map.feature_names(p)) names.push_back(std::move(n));
  return names;
}

}  // namespace

double LinearIndex::operator()(std::span<const double> x) const {
  if (static_cast<std::size_t>(coefficients.size()) != x.size())
    fail(ErrorKind::contract, "index coefficient length differs from covariate dimension");
  double t = offset;
  for (std::size_t j = 0; j < x.size(); ++j) t += coefficients[static_cast<Eigen::Index>(j)] * x[j];
  return t;
}

// -------------------------------------------------------------- CovariateMap

CovariateMap CovariateMap::constant_only() {
  CovariateMap m;
  m.kind_ = Kind::constant_only;
  m.label_ = "constant";
  return m;
}

CovariateMap CovariateMap::identity() {
  CovariateMap m;
  m.kind_ = Kind::identity;
  m.label_ = "identity";
  return m;
}

CovariateMap CovariateMap::index(LinearIndex idx, std::string label) {
  CovariateMap m;
  m.kind_ = Kind::index;
  m.index_ = std::move(idx);
  m.label_ = std::move(label);
  return m;
}

CovariateMap CovariateMap::linear_propensity(const DesignView& view) {
  const auto n = static_cast<Eigen::Index>(view.size());
  const auto p = static_cast<Eigen::Index>(view.p());
  Eigen::MatrixXd z(n, p + 1);
  Eigen::VectorXd target(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = view.rows()[static_cast<std::size_t>(i)];
    z(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < p; ++j) z(i, j + 1) = r.x[static_cast<std::size_t>(j)];
    target[i] = r.d;
  }
  std::vector<std::string> names{"intercept"};
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  // The design here has no D column, so solve directly rather than via the
  // (1, D, s) fitting path.
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  RegressionFit fit = weighted_least_squares(z, w, target, identity(), names);
  LinearIndex idx{fit.theta[0], fit.theta.tail(p)};
  return index(std::move(idx), "linear propensity");
}

CovariateMap CovariateMap::polynomial(std::optional<LinearIndex> idx, int degree) {
  if (degree < 1) fail(ErrorKind::validation, "polynomial degree must be >= 1");
  CovariateMap m;
  m.kind_ = Kind::polynomial;
  m.index_ = std::move(idx);
  m.degree_ = degree;
  m.label_ = "polynomial";
  return m;
}

CovariateMap CovariateMap::strata(std::optional<LinearIndex> idx, std::vector<double> cutpoints) {
  for (std::size_t k = 1; k < cutpoints.size(); ++k)
    if (!(cutpoints[k] > cutpoints[k - 1])) fail(ErrorKind::validation, "strata cutpoints must be strictly increasing");
  CovariateMap m;
  m.kind_ = Kind::strata;
  m.index_ = std::move(idx);
  m.cutpoints_ = std::move(cutpoints);
  m.label_ = "strata";
  return m;
}

CovariateMap CovariateMap::quantile_strata(const DesignView& view, std::optional<LinearIndex> idx, int count, int arm) {
  if (count < 2) fail(ErrorKind::validation, "need at least two strata");
  CovariateMap probe = strata(idx, {});
  std::vector<double> values;
  for (const auto& r : view.rows())
    if (r.d == arm) values.push_back(probe.index_value(r.x));
  if (values.empty()) fail(ErrorKind::validation, "empty arm " + std::to_string(arm));
  std::sort(values.begin(), values.end());
  std::vector<double> cuts;
  for (int k = 1; k < count; ++k) {
    const double q = static_cast<double>(k) / count;
    auto pos = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
    pos = std::clamp<std::size_t>(pos, 1, values.size()) - 1;
    const double c = values[pos];
    if (cuts.empty() || c > cuts.back()) cuts.push_back(c);
  }
  return strata(std::move(idx), std::move(cuts));
}

std::size_t CovariateMap::dim(std::size_t p) const {
  switch (kind_) {
    case Kind::constant_only: return 0;
    case Kind::identity: return p;
    case Kind::index: return 1;
    case Kind::polynomial: return static_cast<std::size_t>(degree_);
    case Kind::strata: return cutpoints_.size();
  }
  return 0;
}

double CovariateMap::index_value(std::span<const double> x) const {
  if (index_) return (*index_)(x);
  if (x.size() != 1) fail(ErrorKind::domain, "map '" + label_ + "' has no scalar index for p = " + std::to_string(x.size()));
  return x[0];
}

std::size_t CovariateMap::stratum(double t) const {
  return static_cast<std::size_t>(std::lower_bound(cutpoints_.begin(), cutpoints_.end(), t) - cutpoints_.begin());
}

double CovariateMap::location(std::span<const double> x) const {
  const double t = index_value(x);
  if (kind_ == Kind::strata) return static_cast<double>(stratum(t) + 1);
  return t;
}

Eigen::VectorXd CovariateMap::features(std::span<const double> x) const {
  switch (kind_) {
    case Kind::constant_only: return Eigen::VectorXd(0);
    case Kind::identity: {
      Eigen::VectorXd s(static_cast<Eigen::Index>(x.size()));
      for (std::size_t j = 0; j < x.size(); ++j) s[static_cast<Eigen::Index>(j)] = x[j];
      return s;
    }
    case Kind::index: return Eigen::VectorXd::Constant(1, index_value(x));
    case Kind::polynomial: {
      const double t = index_value(x);
      Eigen::VectorXd s(degree_);
      double power = 1.0;
      for (int r = 0; r < degree_; ++r) {
        power *= t;
        s[r] = power;
      }
      return s;
    }
    case Kind::strata: {
      Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cutpoints_.size()));
      const std::size_t k = stratum(index_value(x));
      if (k > 0) s[static_cast<Eigen::Index>(k - 1)] = 1.0;
      return s;
    }
  }
  return Eigen::VectorXd(0);
}

std::vector<std::string> CovariateMap::feature_names(std::size_t p) const {
  std::vector<std::string> names;
  switch (kind_) {
    case Kind::constant_only: break;
    case Kind::identity:
      for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
      break;
    case Kind::index: names.push_back(label_); break;
    case Kind::polynomial:
      for (int r = 1; r <= degree_; ++r) names.push_back("t^" + std::to_string(r));
      break;
    case Kind::strata:
      for (std::size_t k = 2; k <= cutpoints_.size() + 1; ++k) names.push_back("stratum" + std::to_string(k));
      break;
  }
  return names;
}

std::string CovariateMap::describe() const {
  std::ostringstream os;
  os << label_;
  if (kind_ == Kind::polynomial) os << "(degree " << degree_ << ")";
  if (kind_ == Kind::strata) os << "(" << cutpoints_.size() + 1 << " strata)";
  return os.str();
}

EmpiricalCond empirical_cond(const DesignView& view, int arm, const CovariateMap& map) {
  std::vector<MassPoint> raw;
  for (const auto& r : view.rows())
    if (r.d == arm) raw.push_back({{map.location(r.x)}, 1.0});
  if (raw.empty()) fail(ErrorKind::validation, "empty arm " + std::to_string(arm));
  const double w = 1.0 / static_cast<double>(raw.size());
  for (auto& pt : raw) pt.mass = w;
  return EmpiricalCond(arm, std::move(raw));
}

EmpiricalCond empirical_cond(const Sample& sample, int arm, const CovariateMap& map) {
  return empirical_cond(sample.design_view(), arm, map);
}

// ------------------------------------------------------------ least squares

double RegressionFit::model(std::span<const double> x, int d) const {
  return regressor_row(map, x, d).dot(theta);
}

Eigen::RowVectorXd regressor_row(const CovariateMap& map, std::span<const double> x, int d) {
  const Eigen::VectorXd s = map.features(x);
  Eigen::RowVectorXd z(s.size() + 2);
  z[0] = 1.0;
  z[1] = d;
  z.tail(s.size()) = s.transpose();
  return z;
}

RegressionFit weighted_least_squares(Eigen::MatrixXd design, Eigen::VectorXd weights, const Eigen::VectorXd& target,
                                     CovariateMap map, std::vector<std::string> names) {
  const Eigen::Index n = design.rows();
  const Eigen::Index k = design.cols();
  if (weights.size() != n || target.size() != n) fail(ErrorKind::contract, "design, weights and target sizes differ");
  if (n == 0) fail(ErrorKind::validation, "no observations to fit");
  if (!target.allFinite()) fail(ErrorKind::domain, "non-finite regression target");
  const double total = weights.sum();
  if (!(total > 0.0) || (weights.array() < 0.0).any()) fail(ErrorKind::validation, "weights must be non-negative with positive sum");
  weights /= total;

  Eigen::MatrixXd gram = design.transpose() * weights.asDiagonal() * design;
  gram = 0.5 * (gram + gram.transpose());

  const Eigen::VectorXd root_w = weights.cwiseSqrt();
  const Eigen::MatrixXd scaled = root_w.asDiagonal() * design;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lambda_min = eig.eigenvalues()(0);
  const double scale = std::max(gram.trace() / static_cast<double>(k), 1e-300);
  if (qr.rank() < k || lambda_min <= 1e-10 * scale) {
    std::ostringstream os;
    os << "singular Gram matrix (smallest eigenvalue " << lambda_min << ", rank " << qr.rank() << " of " << k << ")";
    const Eigen::Index first_dependent = std::min<Eigen::Index>(qr.rank(), k - 1);
    os << ": ";
    for (Eigen::Index j = first_dependent; j < k; ++j) {
      const auto col = static_cast<std::size_t>(qr.colsPermutation().indices()[j]);
      os << (j > first_dependent ? ", " : "") << "'" << (col < names.size() ? names[col] : std::to_string(col)) << "'";
    }
    os << " collinear with the remaining regressors";
    fail(ErrorKind::rank, os.str());
  }

  RegressionFit fit;
  fit.theta = qr.solve(root_w.cwiseProduct(target));
  fit.residuals = target - design * fit.theta;
  fit.gram = std::move(gram);
  fit.design = std::move(design);
  fit.weights = std::move(weights);
  fit.n = static_cast<std::size_t>(n);
  fit.map = std::move(map);
  fit.names = std::move(names);
  return fit;
}

RegressionFit fit_ols(const Sample& sample, const CovariateMap& map) {
  sample.require_outcomes(kModule);
  const auto n = static_cast<Eigen::Index>(sample.size());
  const auto k = static_cast<Eigen::Index>(map.dim(sample.p()) + 2);
  Eigen::MatrixXd z(n, k);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Unit& u = sample.unit(static_cast<std::size_t>(i));
    z.row(i) = regressor_row(map, u.x, u.d);
    y[i] = *u.y;
  }
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  return weighted_least_squares(std::move(z), w, y, map, regressor_names(map, sample.p()));
}

RegressionFit fit_ols(const Sample& sample, const SubsampleHandle& sub, const CovariateMap& map) {
  return fit_ols(sample.subset(sub), map);
}

// -------------------------------------------------------- joint distributions

JointDist joint_of(const DesignView& view) {
  JointDist g;
  g.reserve(view.size());
  const double w = 1.0 / static_cast<double>(view.size());
  for (const auto& r : view.rows()) g.push_back({r.x, r.d, w});
  return g;
}

EmpiricalCond conditional_of(const JointDist& g, int arm) {
  std::vector<MassPoint> raw;
  for (const auto& pt : g)
    if (pt.d == arm && pt.mass > 0.0) raw.push_back({pt.x, pt.mass});
  if (raw.empty()) fail(ErrorKind::validation, "empty arm " + std::to_string(arm));
  return EmpiricalCond(arm, std::move(raw));
}

// ------------------------------------------------------------------- DGPSpec

DGPSpec::DGPSpec(std::vector<DgpAtom> support, std::vector<OutcomeRow> table) : support_(std::move(support)) {
  for (auto& r : table) {
    if (!std::isfinite(r.f0) || !std::isfinite(r.f1)) fail(ErrorKind::validation, "f must be finite");
    auto key = r.x;
    if (!table_.emplace(std::move(key), std::move(r)).second) fail(ErrorKind::validation, "duplicate x in outcome table");
  }
  double total = 0.0, treated = 0.0, control = 0.0;
  for (const auto& a : support_) {
    if (a.d != 0 && a.d != 1) fail(ErrorKind::validation, "support atom with d not in {0,1}");
    if (!(a.prob >= 0.0)) fail(ErrorKind::validation, "negative support probability");
    if (!covers(a.x)) fail(ErrorKind::domain, "support point not covered by the outcome table");
    total += a.prob;
    (a.d == 1 ? treated : control) += a.prob;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorKind::validation, "support probabilities must sum to 1");
  if (!(treated > 0.0) || !(control > 0.0)) fail(ErrorKind::validation, "both arms need positive mass");
}

bool DGPSpec::covers(std::span<const double> x) const {
  return table_.count(std::vector<double>(x.begin(), x.end())) > 0;
}

const OutcomeRow& DGPSpec::row(std::span<const double> x) const {
  auto it = table_.find(std::vector<double>(x.begin(), x.end()));
  if (it == table_.end()) {
    std::ostringstream os;
    os << "point (";
    for (std::size_t j = 0; j < x.size(); ++j) os << (j ? ", " : "") << x[j];
    os << ") not covered by the outcome table";
    fail(ErrorKind::domain, os.str());
  }
  return it->second;
}

double DGPSpec::f(std::span<const double> x, int d) const {
  const OutcomeRow& r = row(x);
  return d == 1 ? r.f1 : r.f0;
}

std::optional<double> DGPSpec::noise(std::span<const double> x, int d) const {
  const OutcomeRow& r = row(x);
  return d == 1 ? r.noise1 : r.noise0;
}

JointDist DGPSpec::joint() const {
  JointDist g;
  for (const auto& a : support_) g.push_back({a.x, a.d, a.prob});
  return g;
}

EmpiricalCond DGPSpec::conditional(int arm) const { return conditional_of(joint(), arm); }

double DGPSpec::prob_treated() const {
  double p1 = 0.0;
  for (const auto& a : support_)
    if (a.d == 1) p1 += a.prob;
  return p1;
}

// ----------------------------------------------------------------- estimands

RegressionFit conditional_estimand(const DGPSpec& dgp, const JointDist& g, const CovariateMap& map) {
  std::vector<const JointPoint*> pts;
  for (const auto& pt : g)
    if (pt.mass > 0.0) pts.push_back(&pt);
  if (pts.empty()) fail(ErrorKind::validation, "empty distribution");
  const std::size_t p = pts.front()->x.size();
  const auto n = static_cast<Eigen::Index>(pts.size());
  const auto k = static_cast<Eigen::Index>(map.dim(p) + 2);
  Eigen::MatrixXd z(n, k);
  Eigen::VectorXd target(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const JointPoint& pt = *pts[static_cast<std::size_t>(i)];
    z.row(i) = regressor_row(map, pt.x, pt.d);
    target[i] = dgp.f(pt.x, pt.d);
    w[i] = pt.mass;
  }
  return weighted_least_squares(std::move(z), std::move(w), target, map, regressor_names(map, p));
}

RegressionFit conditional_estimand(const DGPSpec& dgp, const CovariateMap& map) {
  return conditional_estimand(dgp, dgp.joint(), map);
}

RegressionFit induced_index_refit(const Sample& sample, const RegressionFit& base_fit) {
  const Eigen::VectorXd gamma = base_fit.gamma();
  LinearIndex idx;
  switch (base_fit.map.kind()) {
    case CovariateMap::Kind::identity:
      idx.offset = 0.0;
      idx.coefficients = gamma;
      break;
    case CovariateMap::Kind::index: {
      const LinearIndex* inner = base_fit.map.linear_index() ? &*base_fit.map.linear_index() : nullptr;
      if (!inner) {
        idx.offset = 0.0;
        idx.coefficients = Eigen::VectorXd::Constant(1, gamma[0]);
      } else {
        idx.offset = inner->offset * gamma[0];
        idx.coefficients = inner->coefficients * gamma[0];
      }
      break;
    }
    default:
      fail(ErrorKind::contract, "induced index needs a base fit on the identity or a linear index map");
  }
  if (gamma.size() == 0 || gamma.cwiseAbs().maxCoeff() == 0.0)
    fail(ErrorKind::degenerate, "estimated index coefficients are zero; the induced index is degenerate");
  return fit_ols(sample, CovariateMap::index(std::move(idx), "induced index"));
}

double att_parameter(const DGPSpec& dgp, const EmpiricalCond& g1) {
  double tau = 0.0;
  for (const auto& pt : g1.points()) tau += pt.mass * (dgp.f(pt.location, 1) - dgp.f(pt.location, 0));
  return tau;
}

double InteractionFit::model(std::span<const double> x, int d) const {
  const Eigen::VectorXd s = fit.map.features(x);
  const Eigen::Index k = s.size();
  double l = fit.theta[0] + fit.theta[1] * d + s.dot(fit.theta.segment(2, k));
  if (d == 1) l += (s - treated_mean).dot(fit.theta.segment(2 + k, k));
  return l;
}

InteractionFit fit_interaction(const DGPSpec& dgp, const JointDist& g, const CovariateMap& map) {
  std::vector<const JointPoint*> pts;
  for (const auto& pt : g)
    if (pt.mass > 0.0) pts.push_back(&pt);
  if (pts.empty()) fail(ErrorKind::validation, "empty distribution");
  const std::size_t p = pts.front()->x.size();
  const auto k = static_cast<Eigen::Index>(map.dim(p));

  Eigen::VectorXd treated_mean = Eigen::VectorXd::Zero(k);
  double p1 = 0.0;
  for (const auto* pt : pts)
    if (pt->d == 1) {
      treated_mean += pt->mass * map.features(pt->x);
      p1 += pt->mass;
    }
  if (!(p1 > 0.0)) fail(ErrorKind::validation, "empty arm 1");
  treated_mean /= p1;

  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd z(n, 2 + 2 * k);
  Eigen::VectorXd target(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const JointPoint& pt = *pts[static_cast<std::size_t>(i)];
    const Eigen::VectorXd s = map.features(pt.x);
    z(i, 0) = 1.0;
    z(i, 1) = pt.d;
    z.row(i).segment(2, k) = s.transpose();
    z.row(i).segment(2 + k, k) = (pt.d * (s - treated_mean)).transpose();
    target[i] = dgp.f(pt.x, pt.d);
    w[i] = pt.mass;
  }
  std::vector<std::string> names = regressor_names(map, p);
  for (const auto& nm : map.feature_names(p)) names.push_back("D*(" + nm + " - treated mean)");
  InteractionFit out{weighted_least_squares(std::move(z), std::move(w), target, map, std::move(names)),
                     std::move(treated_mean)};
  return out;
}

ExtendedParameters extended_parameters(const DGPSpec& dgp, const JointDist& g, const CovariateMap* interaction_map) {
  ExtendedParameters out;
  const EmpiricalCond g1 = conditional_of(g, 1);
  const EmpiricalCond g0 = conditional_of(g, 0);
  out.att = att_parameter(dgp, g1);
  for (const auto& pt : g0.points()) out.ateu += pt.mass * (dgp.f(pt.location, 1) - dgp.f(pt.location, 0));
  double total = 0.0;
  for (const auto& pt : g) {
    total += pt.mass;
    if (pt.d == 1) out.prob_treated += pt.mass;
  }
  out.prob_treated /= total;
  // Unconditional average of f(x,1) - f(x,0) over the joint law.
  for (const auto& pt : g) out.ate += pt.mass / total * (dgp.f(pt.x, 1) - dgp.f(pt.x, 0));
  if (interaction_map) out.interaction_att = fit_interaction(dgp, g, *interaction_map).fit.beta();
  return out;
}

double regression_gap_representation(const RegressionFit& fit_a, const RegressionFit& fit_b, const JointDist& g) {
  const EmpiricalCond g1 = conditional_of(g, 1);
  const EmpiricalCond g0 = conditional_of(g, 0);
  std::set<std::vector<double>> support;
  for (const auto& pt : g1.points()) support.insert(pt.location);
  for (const auto& pt : g0.points()) support.insert(pt.location);
  double gap = 0.0;
  for (const auto& x : support)
    gap += (fit_b.model(x, 0) - fit_a.model(x, 0)) * (g1.mass_at(x) - g0.mass_at(x));
  return gap;
}

}  // namespace bb
