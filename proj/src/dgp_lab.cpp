#include "biasbound/dgp_lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "biasbound/bounds.hpp"
#include "biasbound/error.hpp"
#include "biasbound/imbalance.hpp"
#include "biasbound/inference.hpp"
#include "biasbound/logistic.hpp"
#include "biasbound/misspec.hpp"

namespace bb {

namespace {

constexpr const char* kModule = "dgp_lab";

// Runs body(i) for i in [0, count) on up to `threads` workers.
template <typename Body>
void parallel_for(int count, unsigned threads, Body&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max(count, 1))));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) body(i);
    });
  for (auto& th : pool) th.join();
}

std::vector<double> sorted_support(const EmpiricalCond& g1, const EmpiricalCond& g0) {
  std::vector<double> t;
  for (const auto* g : {&g1, &g0})
    for (const auto& pt : g->points()) t.push_back(pt.location[0]);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

}  // namespace

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* v = std::getenv("BB_SEED");
  if (!v || !*v) return fallback;
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw Error(ErrorKind::validation, kModule, std::string("BB_SEED is not an unsigned integer: ") + v);
  }
}

// ---------------------------------------------------------------- Example 1

Example1Oracle example1_oracle(double p) {
  if (!(p > 0.0 && p < 0.5)) throw Error(ErrorKind::validation, kModule, "p must lie in (0, 1/2)");
  Example1Oracle o;
  const double gap = std::abs(1.0 - 4.0 * p);
  o.p = p;
  o.tau = 2.0 - 2.0 * p;
  o.beta_a = 3.0 - 6.0 * p;
  o.beta_b = 1.5;
  o.bias_a = 1.0 - 4.0 * p;
  o.bias_b = -0.5 + 2.0 * p;
  o.c_ks = gap;
  o.c_w1 = gap;
  o.c_tv = 2.0 * gap;
  o.c_dr = gap / std::sqrt(2.0 * p * (1.0 - 2.0 * p));
  o.m_ks_a = 1.0;
  o.m_ks_b = 0.5;
  o.m_mkw_a = 1.0;
  o.m_mkw_b = 0.5;
  o.m_tv_a = std::max(2.0 * p, 1.0 - 2.0 * p);
  o.m_tv_b = std::max(p, 0.5 - p);
  o.m_dr_a = std::sqrt(2.0 * p * (1.0 - 2.0 * p));
  o.m_dr_b = std::sqrt(p * (0.5 - p));
  o.zeta_a = {-2.0 * p, 1.0};
  o.zeta_b = {p, -0.5};
  o.m_md_a = {2.0 * p, 1.0};
  o.m_md_b = {p, 0.5};
  o.c_md = {0.0, gap};
  return o;
}

DGPSpec example1_dgp(double p) {
  if (!(p > 0.0 && p < 0.5)) throw Error(ErrorKind::validation, kModule, "p must lie in (0, 1/2)");
  std::vector<DgpAtom> atoms = {{{0.0}, 0, 0.5 - p}, {{1.0}, 1, 0.5 - p}, {{1.0}, 0, p}, {{0.0}, 1, p}};
  std::vector<OutcomeRow> table;
  for (double x : {0.0, 1.0}) table.push_back({{x}, x, 1.0 + 2.0 * x, std::nullopt, std::nullopt});
  return DGPSpec(std::move(atoms), std::move(table));
}

Sample example1_sample(double p, std::size_t n) {
  const DGPSpec dgp = example1_dgp(p);
  std::vector<Unit> units;
  int next = 1;
  for (const auto& atom : dgp.support()) {
    const double count = atom.prob * static_cast<double>(n);
    if (std::abs(count - std::round(count)) > 1e-9)
      throw Error(ErrorKind::validation, kModule, "p * n must be an integer");
    const double y = atom.d == 1 ? 1.0 + 2.0 * atom.x[0] : atom.x[0];
    for (long k = 0; k < std::lround(count); ++k)
      units.push_back({(atom.d ? "T" : "U") + std::to_string(next++), y, atom.x, atom.d});
  }
  return Sample(std::move(units));
}

// ---------------------------------------------------------------- Example 2

namespace {

struct Table1Entry {
  const char* id;
  double x;
};

constexpr Table1Entry kTable1[] = {
    {"U1", -2.32}, {"U2", -1.96}, {"U3", -1.36}, {"T1", -1.35}, {"U4", -0.91}, {"T2", -0.91},
    {"U5", 0.11},  {"U6", 0.14},  {"T3", 0.16},  {"T4", 0.33},  {"U7", 0.42},  {"T5", 0.44},
    {"U8", 0.55},  {"T6", 0.70},  {"T7", 0.75},  {"U9", 0.76},  {"U10", 0.83}, {"T8", 0.92},
    {"U11", 1.02}, {"U12", 1.52}, {"T9", 1.95},  {"T10", 2.16}, {"T11", 2.22}, {"T12", 3.19},
};

SubsampleHandle pairs_handle(const DesignView& view, const std::vector<MatchedPair>& pairs, std::string rule) {
  std::vector<std::string> ids;
  for (const auto& p : pairs) ids.push_back(p.treated_id);
  for (const auto& p : pairs) ids.push_back(p.control_id);
  return SubsampleHandle(view, std::move(ids), Provenance{std::move(rule), pairs, {}});
}

MatchedPair pair_of(const DesignView& view, const char* t, const char* c) {
  return {t, c, std::abs(view.at(t).x[0] - view.at(c).x[0])};
}

}  // namespace

std::string example2_csv() {
  std::ostringstream os;
  os << "id,y,d,x1\n";
  for (const auto& e : kTable1) os << e.id << ',' << e.x << ',' << (e.id[0] == 'T' ? 1 : 0) << ',' << e.x << '\n';
  return os.str();
}

Example2Data example2_dataset() {
  Sample s = Sample::parse_csv(example2_csv());
  const DesignView view = s.design_view();
  std::vector<MatchedPair> listed = {pair_of(view, "T1", "U3"), pair_of(view, "T2", "U4"), pair_of(view, "T3", "U6"),
                                     pair_of(view, "T5", "U8"), pair_of(view, "T7", "U9")};
  std::vector<MatchedPair> full = listed;
  full.insert(full.begin() + 3, pair_of(view, "T4", "U7"));
  SubsampleHandle listed_h = pairs_handle(view, listed, "listed pairs");
  SubsampleHandle sub_h = pairs_handle(view, full, "listed pairs plus T4-U7");
  return {std::move(s), std::move(listed_h), std::move(sub_h)};
}

// --------------------------------------------------------------- simulation

char to_char(SimSpec s) { return s == SimSpec::A ? 'A' : s == SimSpec::B ? 'B' : 'C'; }

CovariateMap sim_spec_map(SimSpec s) {
  switch (s) {
    case SimSpec::A: return CovariateMap::constant_only();
    case SimSpec::B: return CovariateMap::identity();
    case SimSpec::C: return CovariateMap::polynomial(std::nullopt, 3);
  }
  return CovariateMap::constant_only();
}

Sample synthetic_pool(std::uint64_t seed, std::size_t n_treated, std::size_t n_controls) {
  auto rng = substream(seed, ~std::uint64_t{0});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // Minority applicants sit higher on the debt and risk covariates.
  const double shift[6] = {0.7, 0.5, 0.4, 0.2, 0.3, -0.3};
  std::vector<Unit> units;
  auto make = [&](std::size_t k, int d) {
    Unit u;
    u.id = (d == 1 ? "T" : "C") + std::to_string(k + 1);
    u.d = d;
    for (int j = 0; j < 6; ++j) u.x.push_back(normal(rng) + (d == 1 ? shift[j] : 0.0));
    const auto& x = u.x;
    const double eta = -1.8 + 0.3 * d + 0.9 * x[0] + 0.6 * x[1] + 0.4 * x[2] + 0.2 * x[4] - 0.2 * x[5] +
                       0.25 * x[0] * x[1];
    u.y = unif(rng) < logistic(eta) ? 1.0 : 0.0;
    units.push_back(std::move(u));
  };
  for (std::size_t k = 0; k < n_treated; ++k) make(k, 1);
  for (std::size_t k = 0; k < n_controls; ++k) make(k, 0);
  return Sample(std::move(units));
}

namespace {

SimSide evaluate_side(const DGPSpec& dgp, const JointDist& g, const CovariateMap& map, const CovariateMap& strata,
                      bool with_md) {
  SimSide s;
  s.n = g.size();
  const ExactBias eb = bias_exact(dgp, g, map);
  s.beta = eb.beta;
  s.tau = eb.tau;
  s.bias = eb.direct;

  const EmpiricalCond g1 = conditional_of(g, 1), g0 = conditional_of(g, 0);
  SummarySet rset;
  rset.add(SummarySet::constant()).add(SummarySet::coordinate(0));
  const ImbalanceVector c = compute_imbalance(g1, g0, &rset);
  s.c_ks = *c.ks;
  s.c_w1 = *c.w1;
  s.c_tv = c.tv;
  s.c_dr = c.dr;
  s.c_md = (*c.md)[1];

  auto push = [&](int arm) {
    std::vector<MassPoint> pts;
    for (const auto& pt : g)
      if (pt.d == arm) pts.push_back({{static_cast<double>(strata.location(pt.x))}, pt.mass});
    return EmpiricalCond(arm, std::move(pts));
  };
  const EmpiricalCond s1 = push(1), s0 = push(0);
  s.c_tv_strata = total_variation_l1(s1, s0);
  s.c_dr_strata = density_ratio_l2(s1, s0).c;

  const RegressionFit fit = conditional_estimand(dgp, g, map);
  const std::vector<double> support = sorted_support(g1, g0);
  const Perturbation h = Perturbation::tabulate(support, [&](double t) {
    const double x[1] = {t};
    return dgp.f(x, 0) - fit.model(x, 0);
  });
  const MisspecVector m = compute_misspec(h, g1, g0, with_md ? &rset : nullptr);
  s.m_ks = m.ks;
  s.m_lip = m.lip;
  s.m_sup = m.sup;
  s.m_l2 = m.l2_g0;
  if (m.md) {
    s.m_md = m.md->m[1];
    s.md_slack = m.md->slack;
  }
  return s;
}

std::vector<SimRow> run_replication(const SimPlan& plan, const Sample& pool, int rep) {
  std::vector<SimRow> rows;
  for (SimSpec spec : plan.specs) rows.push_back({rep, spec, false, {}, {}, {}});
  auto skip_all = [&](const std::string& why) {
    for (auto& r : rows) {
      r.skipped = true;
      r.reason = why;
    }
    return rows;
  };

  auto rng = substream(plan.seed, static_cast<std::uint64_t>(rep));
  std::vector<std::size_t> treated, controls;
  for (std::size_t i = 0; i < pool.size(); ++i) (pool.unit(i).d == 1 ? treated : controls).push_back(i);
  std::vector<std::size_t> pick;
  std::sample(treated.begin(), treated.end(), std::back_inserter(pick), plan.n1, rng);
  std::sample(controls.begin(), controls.end(), std::back_inserter(pick), plan.n0, rng);
  std::vector<Unit> units;
  for (std::size_t i : pick) units.push_back(pool.unit(i));

  try {
    const Sample draw(units);
    const CovariateMap prop = CovariateMap::linear_propensity(draw.design_view());

    const auto n = static_cast<Eigen::Index>(units.size());
    Eigen::MatrixXd design(n, 4);
    Eigen::VectorXd y(n);
    std::vector<Unit> index_units;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Unit& u = units[static_cast<std::size_t>(i)];
      const double e = prop.index_value(u.x);
      design.row(i) << 1.0, u.d, e, u.d * e;
      y[i] = *u.y;
      index_units.push_back({u.id, std::nullopt, {e}, u.d});
    }
    const LogisticFit logit = fit_logistic(design, y);
    if (!logit.converged) return skip_all("logistic fit did not converge");

    const Sample index_sample(index_units, true);
    const DesignView view = index_sample.design_view();
    std::vector<DgpAtom> atoms;
    std::vector<OutcomeRow> table;
    std::vector<double> seen;
    for (const auto& row : view.rows()) {
      atoms.push_back({row.x, row.d, 1.0 / static_cast<double>(view.size())});
      if (std::find(seen.begin(), seen.end(), row.x[0]) != seen.end()) continue;
      seen.push_back(row.x[0]);
      const double t = row.x[0];
      const double f0 = logistic(logit.theta[0] + logit.theta[2] * t);
      const double f1 = logistic(logit.theta[0] + logit.theta[1] + (logit.theta[2] + logit.theta[3]) * t);
      table.push_back({row.x, f0, f1, std::nullopt, std::nullopt});
    }
    const DGPSpec dgp(std::move(atoms), std::move(table));
    const CovariateMap strata = CovariateMap::quantile_strata(view, std::nullopt, 4, 0);

    const JointDist pre = joint_of(view);
    const SubsampleHandle matched = nn_match(view, plan.matcher);
    const JointDist post = joint_of(view.restrict(matched));

    for (auto& row : rows) {
      try {
        const CovariateMap map = sim_spec_map(row.spec);
        row.pre = evaluate_side(dgp, pre, map, strata, plan.with_md);
        row.post = evaluate_side(dgp, post, map, strata, plan.with_md);
      } catch (const Error& e) {
        row.skipped = true;
        row.reason = e.what();
      }
    }
  } catch (const Error& e) {
    return skip_all(e.what());
  }
  return rows;
}

}  // namespace

double SimTable::improvement_rate(SimSpec spec) const {
  int used = 0, better = 0;
  for (const auto& r : rows) {
    if (r.spec != spec || r.skipped) continue;
    ++used;
    if (std::abs(r.post.bias) < std::abs(r.pre.bias)) ++better;
  }
  return used ? static_cast<double>(better) / used : 0.0;
}

void SimTable::write_csv(std::ostream& os) const {
  struct Col {
    const char* name;
    double SimSide::*field;
  };
  static constexpr Col cols[] = {
      {"beta", &SimSide::beta},   {"tau", &SimSide::tau},       {"bias", &SimSide::bias},
      {"c_ks", &SimSide::c_ks},   {"c_w1", &SimSide::c_w1},     {"c_tv", &SimSide::c_tv},
      {"c_dr", &SimSide::c_dr},   {"c_md", &SimSide::c_md},     {"c_tv_strata", &SimSide::c_tv_strata},
      {"c_dr_strata", &SimSide::c_dr_strata},                   {"m_ks", &SimSide::m_ks},
      {"m_lip", &SimSide::m_lip}, {"m_sup", &SimSide::m_sup},   {"m_l2", &SimSide::m_l2},
      {"m_md", &SimSide::m_md},   {"md_slack", &SimSide::md_slack},
  };
  os << "rep,spec,skipped,reason,n_pre,n_post";
  for (const auto& c : cols) os << ',' << c.name << "_pre," << c.name << "_post";
  os << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    std::string reason = r.reason;
    std::replace(reason.begin(), reason.end(), ',', ';');
    os << r.rep << ',' << to_char(r.spec) << ',' << (r.skipped ? 1 : 0) << ',' << reason << ',' << r.pre.n << ','
       << r.post.n;
    for (const auto& c : cols) os << ',' << r.pre.*c.field << ',' << r.post.*c.field;
    os << '\n';
  }
}

SimTable run_simulation(const SimPlan& plan, unsigned threads) {
  if (plan.n1 == 0 || plan.n0 == 0) throw Error(ErrorKind::validation, kModule, "arm sizes must be positive");
  if (plan.n1 > plan.n0) throw Error(ErrorKind::validation, kModule, "plan needs n1 <= n0");
  if (plan.replications < 1) throw Error(ErrorKind::validation, kModule, "plan needs at least one replication");
  if (plan.specs.empty()) throw Error(ErrorKind::validation, kModule, "plan needs at least one specification");
  if (plan.n1 > plan.pool_treated || plan.n0 > plan.pool_controls)
    throw Error(ErrorKind::validation, kModule, "plan draws more units than the pool holds");

  const Sample pool = synthetic_pool(plan.seed, plan.pool_treated, plan.pool_controls);
  std::vector<std::vector<SimRow>> per_rep(static_cast<std::size_t>(plan.replications));
  parallel_for(plan.replications, threads,
               [&](int rep) { per_rep[static_cast<std::size_t>(rep)] = run_replication(plan, pool, rep); });

  SimTable table;
  table.plan = plan;
  for (auto& rows : per_rep)
    for (auto& r : rows) table.rows.push_back(std::move(r));
  return table;
}

// ----------------------------------------------------------------- coverage

namespace {

double f_true(double x, int d, bool misspecified) {
  if (!misspecified) return 1.0 + 0.5 * d + 0.8 * x;
  return 0.5 * d + std::sin(1.5 * x) + 0.3 * x * x;
}

bool coverage_replication(const CoveragePlan& plan, int rep) {
  auto rng = substream(plan.seed, static_cast<std::uint64_t>(rep));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Unit> units;
  std::vector<double> fvals;
  for (std::size_t i = 0; i < plan.n; ++i) {
    const double x = normal(rng);
    const int d = unif(rng) < logistic(0.6 * x) ? 1 : 0;
    const double f = f_true(x, d, plan.misspecified);
    const double u = 0.5 * std::sqrt(1.0 + x * x) * normal(rng);
    units.push_back({"u" + std::to_string(i), f + u, {x}, d});
    fvals.push_back(f);
  }
  const Sample s(std::move(units));
  const CovariateMap map = CovariateMap::identity();
  const RegressionFit fit = fit_ols(s, map);
  const VarianceEstimate var = matched_pair_variance(s, fit);
  // Regression of f itself: the sample estimand.
  const RegressionFit target = fit_ols(s.with_outcomes(fvals), map);

  if (!plan.misspecified) {
    const RobustCI ci = robust_ci(fit, var, 0.0, plan.alpha);
    return ci.endpoints(0.0).contains(target.beta());
  }

  const EmpiricalCond g1 = empirical_cond(s, 1), g0 = empirical_cond(s, 0);
  double tau = 0.0;
  for (const auto& pt : g1.points())
    tau += pt.mass * (f_true(pt.location[0], 1, true) - f_true(pt.location[0], 0, true));
  const Perturbation h = Perturbation::tabulate(sorted_support(g1, g0), [&](double t) {
    const double x[1] = {t};
    return f_true(t, 0, true) - target.model(x, 0);
  });
  const double c = ks_distance(g1, g0);
  const RobustCI ci = robust_ci(fit, var, c, plan.alpha);
  return ci.endpoints(m_total_variation(h)).contains(tau);
}

}  // namespace

CoverageResult run_coverage(const CoveragePlan& plan, unsigned threads) {
  if (plan.n < 8 || plan.replications < 1) throw Error(ErrorKind::validation, kModule, "coverage plan too small");
  std::vector<char> hit(static_cast<std::size_t>(plan.replications), 0);
  parallel_for(plan.replications, threads,
               [&](int rep) { hit[static_cast<std::size_t>(rep)] = coverage_replication(plan, rep) ? 1 : 0; });
  CoverageResult r;
  r.total = plan.replications;
  r.covered = static_cast<int>(std::count(hit.begin(), hit.end(), 1));
  return r;
}

}  // namespace bb
