#include "biasbound/bounds.hpp"

#include <cmath>
#include <limits>

#include "biasbound/error.hpp"

namespace bb {

namespace {

constexpr const char* kModule = "bounds";

std::optional<double> budget_for(std::optional<double> eps, double c) {
  if (!eps) return std::nullopt;
  if (c == 0.0) return std::numeric_limits<double>::infinity();
  return *eps / c;
}

}  // namespace

const char* to_string(Family f) {
  switch (f) {
    case Family::ks: return "ks";
    case Family::mkw: return "mkw";
    case Family::tv: return "tv";
    case Family::dr: return "dr";
    case Family::md: return "md";
    case Family::lp: return "lp";
  }
  return "?";
}

std::optional<Family> family_from_string(const std::string& name) {
  for (Family f : kAllFamilies)
    if (name == to_string(f)) return f;
  if (name == "w1") return Family::mkw;
  return std::nullopt;
}

const char* to_string(Verdict v) { return v == Verdict::sustained ? "sustained" : "overturned"; }

ExactBias bias_exact(const DGPSpec& dgp, const JointDist& g, const CovariateMap& map) {
  const RegressionFit fit = conditional_estimand(dgp, g, map);
  const EmpiricalCond g1 = conditional_of(g, 1);
  const EmpiricalCond g0 = conditional_of(g, 0);

  ExactBias out;
  out.beta = fit.beta();
  out.tau = att_parameter(dgp, g1);
  out.direct = out.beta - out.tau;

  // Union of the two supports; points present in both arms are visited once.
  std::vector<std::vector<double>> support;
  for (const auto& pt : g1.points()) support.push_back(pt.location);
  for (const auto& pt : g0.points())
    if (g1.mass_at(pt.location) == 0.0) support.push_back(pt.location);

  double scale = 1.0;
  for (const auto& x : support) {
    const double h = dgp.f(x, 0) - fit.model(x, 0);
    scale = std::max(scale, std::abs(dgp.f(x, 0)));
    out.representation += h * (g1.mass_at(x) - g0.mass_at(x));
  }
  if (std::abs(out.representation - out.direct) > 1e-10 * scale)
    throw Error(ErrorKind::numerical, kModule,
                "bias representation " + std::to_string(out.representation) + " disagrees with direct value " +
                    std::to_string(out.direct));
  return out;
}

const FamilyBound* BoundReport::find(Family f) const {
  for (const auto& fb : families)
    if (fb.family == f) return &fb;
  return nullptr;
}

BoundReport assemble_bounds(const ImbalanceVector& c, const MisspecVector* m, std::optional<double> eps) {
  BoundReport report;
  const std::string no_m = "no perturbation supplied";

  auto scalar_family = [&](Family fam, std::optional<double> cv, std::optional<double> mv, const char* needs) {
    FamilyBound fb;
    fb.family = fam;
    if (!cv) {
      fb.skipped = needs;
      report.families.push_back(std::move(fb));
      return;
    }
    fb.c = {*cv};
    fb.budget = budget_for(eps, *cv);
    if (mv) {
      fb.m = {*mv};
      fb.bound = *mv * *cv;
    } else {
      fb.skipped = no_m;
    }
    report.families.push_back(std::move(fb));
  };

  const char* scalar_only = "needs scalar locations";
  scalar_family(Family::ks, c.ks, m ? std::optional(m->ks) : std::nullopt, scalar_only);
  scalar_family(Family::mkw, c.w1, m ? std::optional(m->lip) : std::nullopt, scalar_only);
  scalar_family(Family::tv, c.tv, m ? std::optional(m->sup) : std::nullopt, "");
  scalar_family(Family::dr, c.dr, m ? std::optional(m->l2_g0) : std::nullopt, "");
  if (m) {
    auto& dr = report.families.back();
    dr.dr_singular_term = m->dr_singular;
    *dr.bound += m->dr_singular;
  }

  {
    FamilyBound fb;
    fb.family = Family::md;
    if (!c.md) {
      fb.skipped = "no summaries supplied";
    } else {
      fb.c.assign(c.md->data(), c.md->data() + c.md->size());
      if (!m) {
        fb.skipped = no_m;
      } else if (!m->md) {
        fb.skipped = "no separation solution supplied";
      } else if (m->md->m.size() != c.md->size()) {
        fb.skipped = "summary counts of c and m differ";
      } else {
        fb.m.assign(m->md->m.data(), m->md->m.data() + m->md->m.size());
        fb.md_slack_term = m->md->slack;
        fb.bound = m->md->m.dot(*c.md) + m->md->slack;
      }
    }
    report.families.push_back(std::move(fb));
  }

  {
    FamilyBound fb;
    fb.family = Family::lp;
    if (!c.lp) {
      fb.skipped = scalar_only;
    } else {
      fb.c = {c.lp->lo, c.lp->hi};
      fb.budget = budget_for(eps, c.lp->hi);
      if (m) {
        fb.m = {m->lip + m->sup};
        fb.bound = (m->lip + m->sup) * c.lp->hi;
      } else {
        fb.skipped = no_m;
      }
    }
    report.families.push_back(std::move(fb));
  }
  return report;
}

Verdict verdict(double bound, double beta_hat, double null_tau) {
  return std::abs(beta_hat - null_tau) > bound ? Verdict::sustained : Verdict::overturned;
}

std::vector<FamilyVerdict> verdicts(const BoundReport& report, double beta_hat, double null_tau) {
  std::vector<FamilyVerdict> out;
  for (const auto& fb : report.families)
    if (fb.bound) out.push_back({fb.family, verdict(*fb.bound, beta_hat, null_tau)});
  return out;
}

}  // namespace bb
