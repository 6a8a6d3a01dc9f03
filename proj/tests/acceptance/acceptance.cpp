// One line per primary acceptance criterion. Exit status is the number of
// criteria whose outcome differs from expectation; `--expect-fail ID` marks a
// criterion known to be unreachable (it must then actually fail).
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <thread>

#include "biasbound/bounds.hpp"
#include "biasbound/dgp_lab.hpp"
#include "biasbound/error.hpp"
#include "biasbound/inference.hpp"
#include "biasbound/misspec.hpp"
#include "support.hpp"

using namespace bb;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  std::ostream& note() {
    if (detail.tellp() > 0) detail << "; ";
    return detail;
  }
  void require(bool ok, const std::string& what) {
    if (!ok) {
      note() << what;
      pass = false;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 6) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

std::string fixed4(double v) {
  std::ostringstream os;
  os << std::fixed;
  os.precision(4);
  os << v;
  return os.str();
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

unsigned worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

// ------------------------------------------------------------- criterion 1

void example1_suite(Outcome& out) {
  constexpr double tol = 1e-12;
  out.note() << "beta, tau, bias, c, m, zeta and m_md within 1e-12 at p = 0.1, 0.25, 0.4";
  const SummarySet rset = SummarySet::constant_and_coordinates(1);
  for (double p : {0.1, 0.25, 0.4}) {
    const Example1Oracle o = example1_oracle(p);
    const DGPSpec dgp = example1_dgp(p);
    const EmpiricalCond g1 = dgp.conditional(1), g0 = dgp.conditional(0);
    const RegressionFit fa = conditional_estimand(dgp, CovariateMap::constant_only());
    const RegressionFit fb = conditional_estimand(dgp, CovariateMap::identity());
    const ExactBias ea = bias_exact(dgp, dgp.joint(), CovariateMap::constant_only());
    const ExactBias eb = bias_exact(dgp, dgp.joint(), CovariateMap::identity());
    const ImbalanceVector c = compute_imbalance(g1, g0, &rset);
    const std::string at = " at p=" + fmt(p);

    out.require(close(fa.beta(), o.beta_a, tol) && close(fb.beta(), o.beta_b, tol), "beta" + at);
    out.require(close(att_parameter(dgp, g1), o.tau, tol), "tau" + at);
    out.require(close(ea.direct, o.bias_a, tol) && close(eb.direct, o.bias_b, tol) &&
                    close(ea.representation, o.bias_a, tol) && close(eb.representation, o.bias_b, tol),
                "bias" + at);
    out.require(close(*c.ks, o.c_ks, tol) && close(*c.w1, o.c_w1, tol) && close(c.tv, o.c_tv, tol) &&
                    close(c.dr, o.c_dr, tol),
                "c" + at);
    out.require(close((*c.md)[0], o.c_md[0], tol) && close((*c.md)[1], o.c_md[1], tol), "c_md" + at);

    const struct {
      const RegressionFit& fit;
      double ks, mkw, tv, dr;
      const Eigen::Vector2d& zeta;
      const Eigen::Vector2d& md;
      const char* name;
    } specs[] = {{fa, o.m_ks_a, o.m_mkw_a, o.m_tv_a, o.m_dr_a, o.zeta_a, o.m_md_a, "A"},
                 {fb, o.m_ks_b, o.m_mkw_b, o.m_tv_b, o.m_dr_b, o.zeta_b, o.m_md_b, "B"}};
    for (const auto& s : specs) {
      const Perturbation h = bbtest::residual_function(dgp, s.fit);
      const MisspecVector m = compute_misspec(h, g1, g0, &rset);
      const std::string tag = std::string(" spec ") + s.name + at;
      out.require(close(m.ks, s.ks, tol) && close(m.lip, s.mkw, tol) && close(m.sup, s.tv, tol) &&
                      close(m.l2_g0, s.dr, tol),
                  "m" + tag);
      const SeparationSolution plus = solve_separation(h, rset, g1, g0, 1);
      out.require((plus.zeta - s.zeta).cwiseAbs().maxCoeff() <= tol, "zeta" + tag);
      out.require(m.md && (m.md->m - s.md).cwiseAbs().maxCoeff() <= tol, "m_md" + tag);
    }
  }
}

// ------------------------------------------------------------- criterion 2

void example2_suite(Outcome& out) {
  constexpr double tol = 5e-4;
  const Example2Data ex = example2_dataset();
  const Sample post_sample = ex.sample.subset(ex.subsample);
  const struct {
    const Sample& s;
    const char* name;
    double ks, w1, md, bias, m_ks;
  } sides[] = {{ex.sample, "pre", 1.0 / 3.0, 0.981, 0.981, 0.981, 5.51},
               {post_sample, "post", 1.0 / 6.0, 0.039, 0.028, 0.028, 2.12}};
  SummarySet rset;
  rset.add(SummarySet::coordinate(0));
  for (const auto& side : sides) {
    const EmpiricalCond g1 = empirical_cond(side.s, 1), g0 = empirical_cond(side.s, 0);
    const ImbalanceVector c = compute_imbalance(g1, g0, &rset);
    // y = x: no treatment effect, so the constant-only beta is the bias.
    const RegressionFit fit = fit_ols(side.s, CovariateMap::constant_only());
    std::vector<double> ts;
    for (const auto& u : side.s.units()) ts.push_back(u.x[0]);
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    const Perturbation h = Perturbation::tabulate(ts, [&](double t) { return t - fit.alpha(); });
    const double m_ks = m_total_variation(h);
    const auto check = [&](const char* what, double got, double want) {
      out.require(close(got, want, tol), std::string(side.name) + " " + what + " " + fixed4(got) + " vs " + fixed4(want));
    };
    check("c_ks", *c.ks, side.ks);
    check("c_w1", *c.w1, side.w1);
    check("c_md", std::abs((*c.md)[0]), side.md);
    check("bias", std::abs(fit.beta()), side.bias);
    check("m_ks", m_ks, side.m_ks);
  }
}

// ------------------------------------------------------------- criterion 3

void representation_suite(Outcome& out) {
  bbtest::Rng rng(0xB1A5);
  int dgps = 0, skipped = 0;
  double worst_identity = 0.0, worst_bound_gap = 0.0;
  const SummarySet rset = SummarySet::constant_and_coordinates(1);
  while (dgps < 240) {
    const bool vector_x = dgps % 4 == 3;
    const DGPSpec dgp = vector_x ? bbtest::random_vector_dgp(rng, bbtest::unif_int(rng, 3, 6))
                                 : bbtest::random_scalar_dgp(rng, bbtest::unif_int(rng, 2, 6));
    const CovariateMap map = dgps % 2 ? CovariateMap::identity() : CovariateMap::constant_only();
    ExactBias e;
    RegressionFit fit;
    try {
      e = bias_exact(dgp, dgp.joint(), map);
      fit = conditional_estimand(dgp, map);
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::rank) throw;
      ++skipped;
      continue;
    }
    ++dgps;
    worst_identity = std::max(worst_identity, std::abs(e.representation - e.direct));
    const double bias = std::abs(e.direct);
    const EmpiricalCond g1 = dgp.conditional(1), g0 = dgp.conditional(0);
    std::vector<double> bounds;
    if (vector_x) {
      // TV and DR only; magnitudes of h straight from the table.
      const ImbalanceVector c = compute_imbalance(g1, g0);
      double sup = 0.0, l2 = 0.0, singular = 0.0;
      for (const auto& pt : g1.points()) {
        const double hx = dgp.f(pt.location, 0) - fit.model(pt.location, 0);
        sup = std::max(sup, std::abs(hx));
        if (g0.mass_at(pt.location) == 0.0) singular += hx * pt.mass;
      }
      for (const auto& pt : g0.points()) {
        const double hx = dgp.f(pt.location, 0) - fit.model(pt.location, 0);
        sup = std::max(sup, std::abs(hx));
        l2 += pt.mass * hx * hx;
      }
      bounds = {sup * c.tv, std::sqrt(l2) * c.dr + std::abs(singular)};
    } else {
      const Perturbation h = bbtest::residual_function(dgp, fit);
      const MisspecVector m = compute_misspec(h, g1, g0, &rset);
      const BoundReport r = assemble_bounds(compute_imbalance(g1, g0, &rset), &m);
      for (const auto& fb : r.families) {
        out.require(fb.bound.has_value(), std::string("missing ") + to_string(fb.family) + " bound");
        if (fb.bound) bounds.push_back(*fb.bound);
      }
    }
    for (double b : bounds) worst_bound_gap = std::max(worst_bound_gap, bias - b);
  }
  out.require(worst_identity <= 1e-10, "identity gap " + fmt(worst_identity));
  out.require(worst_bound_gap <= 1e-10, "bound below |bias| by " + fmt(worst_bound_gap));
  out.note() << dgps << " DGPs (" << skipped << " rank-deficient redrawn), max identity gap "
             << fmt(worst_identity, 3);
}

// ------------------------------------------------------------- criterion 4

void separation_suite(Outcome& out) {
  bbtest::Rng rng(0x5E9);
  int instances = 0, compared = 0;
  double worst_residual = 0.0, worst_gap = 0.0;
  while (instances < 150) {
    const int n_pts = bbtest::unif_int(rng, 2, instances % 2 ? 6 : 10);
    std::vector<double> ts;
    while (static_cast<int>(ts.size()) < n_pts) {
      const double t = std::round(bbtest::unif(rng, -3, 3) * 20) / 20;
      if (std::find(ts.begin(), ts.end(), t) == ts.end()) ts.push_back(t);
    }
    std::sort(ts.begin(), ts.end());
    std::vector<MassPoint> a, b;
    for (double t : ts) {
      if (bbtest::unif(rng, 0, 1) < 0.7) a.push_back({{t}, bbtest::unif(rng, 0.1, 1)});
      if (bbtest::unif(rng, 0, 1) < 0.7) b.push_back({{t}, bbtest::unif(rng, 0.1, 1)});
    }
    if (a.empty() || b.empty()) continue;
    ++instances;
    const EmpiricalCond g1(1, a), g0(0, b);
    const Perturbation h = Perturbation::tabulate(ts, [&](double) { return bbtest::unif(rng, -2, 2); });
    const SummarySet rset = bbtest::random_summaries(rng, bbtest::unif_int(rng, 1, 4), ts);
    const bool small = n_pts <= 6;
    for (int sigma : {1, -1}) {
      const SeparationSolution sol = solve_separation(h, rset, g1, g0, sigma);
      worst_residual = std::max(worst_residual, sol.max_residual(h, rset, g1, g0));
      if (!small) continue;
      const double brute = bbtest::brute_min_slack(bbtest::separation_rows(h, rset, g1, g0, sigma));
      if (!std::isfinite(brute)) continue;
      ++compared;
      worst_gap = std::max(worst_gap, std::abs(sol.objective - brute));
    }
  }
  out.require(worst_residual <= 1e-8, "residual " + fmt(worst_residual));
  out.require(worst_gap <= 1e-6, "slack gap vs brute force " + fmt(worst_gap));
  out.require(compared >= 50, "only " + std::to_string(compared) + " brute-force comparisons");
  out.note() << instances << " instances, " << compared
             << " brute-force comparisons, max residual " << fmt(worst_residual, 3) << ", max slack gap "
             << fmt(worst_gap, 3);
}

// ------------------------------------------------------------- criterion 5

void vallender_suite(Outcome& out) {
  bbtest::Rng rng(0x7A1);
  double worst = 0.0;
  int cases = 0;
  for (int n = 1; n <= 8; ++n) {
    for (int trial = 0; trial < (n == 8 ? 3 : 12); ++trial) {
      std::vector<double> a(n), b(n);
      for (auto& v : a) v = bbtest::unif(rng, -5, 5);
      for (auto& v : b) v = bbtest::unif(rng, -5, 5);
      if (trial % 3 == 0) b[0] = a[0];  // shared atoms
      const double w1 = wasserstein1(bbtest::equal_mass(1, a), bbtest::equal_mass(0, b));
      worst = std::max({worst, std::abs(w1 - bbtest::coupling_by_permutation(a, b)),
                        std::abs(w1 - bbtest::coupling_sorted(a, b))});
      ++cases;
    }
  }
  out.require(worst <= 1e-12, "max gap " + fmt(worst));
  out.note() << cases << " instances, max gap " << fmt(worst, 3);
}

// ------------------------------------------------------------- criterion 6

void coverage_suite(Outcome& out) {
  CoveragePlan plan;
  plan.seed = seed_from_env(plan.seed);
  const CoverageResult correct = run_coverage(plan, worker_count());
  plan.misspecified = true;
  const CoverageResult missp = run_coverage(plan, worker_count());
  out.require(correct.rate() >= 0.93 && correct.rate() <= 0.97, "correct-model coverage " + fmt(correct.rate()));
  out.require(missp.rate() >= 0.94, "misspecified coverage " + fmt(missp.rate()));
  out.note() << "correct " << fmt(correct.rate(), 4) << " (" << correct.covered << "/"
             << correct.total << "), misspecified " << fmt(missp.rate(), 4) << " (" << missp.covered << "/"
             << missp.total << ")";
}

// ------------------------------------------------------------- criterion 7

void hmda_suite(Outcome& out) {
  const RobustCI ci = robust_ci(0.099, 0.015, 0.233, 0.05);
  const Interval c0 = ci.endpoints(0.0);
  const double mv = m_value(ci, 0.0);
  out.require(close(c0.lo, 0.0696, 1e-4) && close(c0.hi, 0.1284, 1e-4),
              "C(0) = [" + fmt(c0.lo) + ", " + fmt(c0.hi) + "]");
  out.require(close(mv, 0.2987, 1e-3), "m-value " + fmt(mv));

  // Four equal-mass control strata; +0.05 on two of them.
  const EmpiricalCond g0(0, {{{1.0}, 1.0}, {{2.0}, 1.0}, {{3.0}, 1.0}, {{4.0}, 1.0}});
  const EmpiricalCond g1(1, {{{1.0}, 2.0}, {{2.0}, 1.0}, {{3.0}, 1.0}, {{4.0}, 3.0}});
  const Perturbation h({{1.0, 0.05}, {2.0, 0.05}, {3.0, 0.0}, {4.0, 0.0}});
  const MisspecVector m = compute_misspec(h, g1, g0);
  ImbalanceVector c = compute_imbalance(g1, g0);
  c.tv = 0.594;
  c.dr = 0.723;
  const BoundReport r = assemble_bounds(c, &m);
  const double tv = *r.find(Family::tv)->bound, dr = *r.find(Family::dr)->bound;
  out.require(close(tv, 0.030, 1e-3), "TV bound " + fmt(tv));
  out.require(close(dr, 0.026, 1e-3), "DR bound " + fmt(dr));
  out.note() << "C(0) = [" << fmt(c0.lo, 4) << ", " << fmt(c0.hi, 4) << "], m-value "
             << fmt(mv, 4) << ", TV " << fmt(tv, 3) << ", DR " << fmt(dr, 3);
}

// ------------------------------------------------------------- criterion 8

void simulation_suite(Outcome& out) {
  SimPlan plan;
  plan.seed = seed_from_env(plan.seed);
  plan.specs = {SimSpec::A};
  const SimTable t = run_simulation(plan, worker_count());
  const double rate = t.improvement_rate(SimSpec::A);
  out.require(rate >= 0.8, "spec A improvement rate " + fmt(rate));
  out.note() << "spec A improvement rate " << fmt(rate, 3) << " over " << t.rows.size()
             << " replications";
}

struct Criterion {
  const char* id;
  const char* name;
  double budget_seconds;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> expect_fail;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--expect-fail") expect_fail.push_back(argv[++i]);

  const Criterion criteria[] = {
      {"AC1", "example 1 oracle suite", 1.0, example1_suite},
      {"AC2", "example 2 suite", 1.0, example2_suite},
      {"AC3", "representation and bound property suite", 30.0, representation_suite},
      {"AC4", "separation feasibility", 60.0, separation_suite},
      {"AC5", "vallender equality", 60.0, vallender_suite},
      {"AC6", "inference coverage", 300.0, coverage_suite},
      {"AC7", "hmda arithmetic", 1.0, hmda_suite},
      {"AC8", "simulation pattern", 120.0, simulation_suite},
  };
  int failures = 0, unexpected = 0;
  for (const auto& c : criteria) {
    Outcome out;
    const auto t0 = Clock::now();
    try {
      c.run(out);
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    const double secs = seconds_since(t0);
    out.require(secs <= c.budget_seconds, "runtime " + fmt(secs, 3) + "s over " + fmt(c.budget_seconds) + "s");
    const bool expected_fail = std::find(expect_fail.begin(), expect_fail.end(), c.id) != expect_fail.end();
    if (!out.pass) ++failures;
    if (out.pass == expected_fail) ++unexpected;
    std::printf("%s [%s] %s: %s (%.2fs)%s\n", out.pass ? "PASS" : "FAIL", c.id, c.name, out.detail.str().c_str(), secs,
                expected_fail ? (out.pass ? " [expected to fail but passed]" : " [known failure]") : "");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria pass; %d unexpected outcome(s)\n", static_cast<int>(std::size(criteria)) - failures,
              std::size(criteria), unexpected);
  return unexpected;
}
