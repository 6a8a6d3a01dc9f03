#include "biasbound/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "biasbound/design.hpp"
#include "biasbound/error.hpp"
#include "biasbound/imbalance.hpp"
#include "biasbound/inference.hpp"
#include "biasbound/misspec.hpp"
#include "biasbound/regression.hpp"

namespace bb {

namespace {

constexpr const char* kModule = "cli_service";
constexpr const char* kVersion = "0.1.0";

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorKind::validation, kModule, msg); }

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
json number_or_null(std::optional<double> v) { return v ? number_or_null(*v) : json(nullptr); }

std::string null_key(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// Summaries live on the pushforward location t.
SummarySet summaries_on_index(const std::vector<std::string>& names, const std::map<double, double>& model_line) {
  SummarySet set;
  for (const auto& name : names) {
    if (name == "1") {
      set.add(SummarySet::constant());
    } else if (name == "index" || name == "t") {
      Summary s = SummarySet::coordinate(0);
      s.name = "index";
      set.add(std::move(s));
    } else if (name == "negmodel") {
      std::map<std::vector<double>, double> table;
      for (const auto& [t, l0] : model_line) table[{t}] = std::min(-l0, 0.0);
      set.add(SummarySet::table("negmodel", std::move(table)));
    } else {
      invalid("unknown summary '" + name + "' (expected 1, index or negmodel)");
    }
  }
  return set;
}

double family_scalar_c(const ImbalanceVector& c, Family f) {
  switch (f) {
    case Family::ks: return c.ks ? *c.ks : std::numeric_limits<double>::quiet_NaN();
    case Family::mkw: return c.w1 ? *c.w1 : std::numeric_limits<double>::quiet_NaN();
    case Family::tv: return c.tv;
    case Family::dr: return c.dr;
    case Family::lp: return c.lp ? c.lp->hi : std::numeric_limits<double>::quiet_NaN();
    case Family::md: break;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double trapezoid_extent(const RobustCI& ci, const std::vector<double>& nulls) {
  double m_max = 1.0;
  for (double n : nulls) {
    const double mv = m_value(ci, n);
    if (std::isfinite(mv)) m_max = std::max(m_max, 2.0 * mv);
  }
  return m_max;
}

json trapezoid_json(const RobustCI& ci, double m_max, int steps) {
  json arr = json::array();
  for (const auto& pt : ci.trapezoid(m_max, steps)) arr.push_back({{"m", pt.m}, {"lo", pt.lo}, {"hi", pt.hi}});
  return arr;
}

json m_values_json(const RobustCI& ci, const std::vector<double>& nulls) {
  json out = json::object();
  for (double n : nulls) out[null_key(n)] = number_or_null(m_value(ci, n));
  return out;
}

json pairs_json(const Provenance& prov) {
  json arr = json::array();
  for (const auto& p : prov.pairs)
    arr.push_back({{"treated_id", p.treated_id}, {"control_id", p.control_id}, {"distance", p.distance}});
  return arr;
}

void require(const json& obj, const char* key, json::value_t type, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) invalid("report is missing '" + where + key + "'");
  const json& v = obj.at(key);
  const bool ok = type == json::value_t::number_float ? v.is_number()
                  : type == json::value_t::number_unsigned ? v.is_number_integer()
                                                           : v.type() == type;
  if (!ok) invalid("report field '" + where + key + "' has the wrong type");
}

}  // namespace

// -------------------------------------------------------------- converters

json to_json(const ImbalanceVector& c) {
  json j;
  j["ks"] = number_or_null(c.ks);
  j["w1"] = number_or_null(c.w1);
  j["tv"] = c.tv;
  j["dr"] = c.dr;
  j["dr_singular"] = c.dr_singular;
  if (c.md) {
    j["md"] = std::vector<double>(c.md->data(), c.md->data() + c.md->size());
    j["md_names"] = c.md_names;
  } else {
    j["md"] = nullptr;
    j["md_names"] = json::array();
  }
  j["lp"] = c.lp ? json::array({c.lp->lo, c.lp->hi}) : json(nullptr);
  return j;
}

ImbalanceVector imbalance_from_json(const json& j) {
  ImbalanceVector c;
  if (!j.at("ks").is_null()) c.ks = j.at("ks").get<double>();
  if (!j.at("w1").is_null()) c.w1 = j.at("w1").get<double>();
  c.tv = j.at("tv").get<double>();
  c.dr = j.at("dr").get<double>();
  c.dr_singular = j.at("dr_singular").get<double>();
  if (!j.at("md").is_null()) {
    const auto v = j.at("md").get<std::vector<double>>();
    c.md = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    c.md_names = j.at("md_names").get<std::vector<std::string>>();
  }
  if (!j.at("lp").is_null()) c.lp = LpInterval{j.at("lp").at(0).get<double>(), j.at("lp").at(1).get<double>()};
  return c;
}

json to_json(const BoundReport& r) {
  json out = json::object();
  for (const auto& fb : r.families) {
    json e;
    if (fb.family == Family::md || fb.family == Family::lp) e["c"] = fb.c;
    else e["c"] = fb.c.empty() ? json(nullptr) : json(fb.c.front());
    if (fb.m.empty()) e["m"] = nullptr;
    else if (fb.family == Family::md) e["m"] = fb.m;
    else e["m"] = fb.m.front();
    e["bound"] = number_or_null(fb.bound);
    e["budget"] = fb.budget ? number_or_null(*fb.budget) : json(nullptr);
    e["corrections"] = {{"dr_singular_term", fb.dr_singular_term}, {"md_slack_term", fb.md_slack_term}};
    if (!fb.skipped.empty()) e["skipped"] = fb.skipped;
    if (fb.family == Family::lp) e["note"] = "conservative: upper end of the Levy-Prokhorov sandwich";
    out[to_string(fb.family)] = std::move(e);
  }
  if (r.exact_bias) out["exact_bias"] = *r.exact_bias;
  return out;
}

json to_json(const SimTable& t) {
  json rows = json::array();
  auto side = [](const SimSide& s) {
    return json{{"n", s.n},       {"beta", s.beta},       {"tau", s.tau},
                {"bias", s.bias}, {"c_ks", s.c_ks},       {"c_w1", s.c_w1},
                {"c_tv", s.c_tv}, {"c_dr", s.c_dr},       {"c_md", s.c_md},
                {"c_tv_strata", s.c_tv_strata},           {"c_dr_strata", s.c_dr_strata},
                {"m_ks", s.m_ks}, {"m_lip", s.m_lip},     {"m_sup", s.m_sup},
                {"m_l2", s.m_l2}, {"m_md", s.m_md},       {"md_slack", s.md_slack}};
  };
  for (const auto& r : t.rows) {
    json row = {{"rep", r.rep}, {"spec", std::string(1, to_char(r.spec))}, {"skipped", r.skipped}};
    if (r.skipped) row["reason"] = r.reason;
    else {
      row["pre"] = side(r.pre);
      row["post"] = side(r.post);
    }
    rows.push_back(std::move(row));
  }
  json specs = json::array();
  json rates = json::object();
  for (SimSpec s : t.plan.specs) {
    specs.push_back(std::string(1, to_char(s)));
    rates[std::string(1, to_char(s))] = t.improvement_rate(s);
  }
  return {{"schema", "biasbound.simulation/1"},
          {"plan",
           {{"n1", t.plan.n1},
            {"n0", t.plan.n0},
            {"replications", t.plan.replications},
            {"seed", t.plan.seed},
            {"specs", specs}}},
          {"improvement_rate", rates},
          {"rows", rows}};
}

// ----------------------------------------------------------------- analyze

json analyze(const Sample& sample, const AnalyzeOptions& opt) {
  sample.require_outcomes(kModule);
  const DesignView view = sample.design_view();
  const std::size_t p = sample.p();

  // Design phase.
  SubsampleHandle handle = SubsampleHandle::whole(view);
  if (!opt.subsample_ids.empty()) {
    handle = SubsampleHandle(view, opt.subsample_ids, Provenance{"subsample file", {}, {}});
  } else if (opt.match == "nn") {
    MatchSpec ms;
    ms.caliper = opt.caliper;
    ms.replacement = opt.replacement;
    handle = nn_match(view, ms);
  } else if (opt.match != "none") {
    invalid("unknown --match '" + opt.match + "' (expected none or nn)");
  }
  const Sample analysis = sample.subset(handle);

  // Regression map and the scalar location the c's are computed on.
  const DesignView index_view = opt.refit_index ? analysis.design_view() : view;
  std::optional<CovariateMap> base_index;
  auto propensity = [&]() -> const CovariateMap& {
    if (!base_index) base_index = p == 1 ? CovariateMap::identity() : CovariateMap::linear_propensity(index_view);
    return *base_index;
  };
  CovariateMap map = CovariateMap::constant_only();
  if (opt.map == "identity") map = CovariateMap::identity();
  else if (opt.map == "index") map = propensity();
  else if (opt.map == "strata") map = CovariateMap::quantile_strata(index_view, propensity().linear_index(), opt.strata, 0);
  else if (opt.map != "constant") invalid("unknown --map '" + opt.map + "' (expected identity, index, strata or constant)");

  const RegressionFit fit = fit_ols(analysis, map);
  CovariateMap location = map;
  RegressionFit model_fit = fit;
  if (opt.map == "identity") {
    if (p == 1) {
      location = CovariateMap::identity();
    } else {
      model_fit = induced_index_refit(analysis, fit);
      location = model_fit.map;
    }
  } else if (opt.map == "constant") {
    location = propensity();
  }

  // Model line l(t, 0) on every location of the full sample.
  std::map<double, double> model_line;
  for (const auto& row : view.rows()) model_line.emplace(location.location(row.x), model_fit.model(row.x, 0));
  const SummarySet rset = summaries_on_index(opt.summaries, model_line);
  const SummarySet* rset_ptr = rset.size() ? &rset : nullptr;

  const DesignView post_view = analysis.design_view();
  const EmpiricalCond g1 = empirical_cond(post_view, 1, location), g0 = empirical_cond(post_view, 0, location);
  const ImbalanceVector c = compute_imbalance(g1, g0, rset_ptr);
  const ImbalanceVector c_pre =
      compute_imbalance(empirical_cond(view, 1, location), empirical_cond(view, 0, location), rset_ptr);
  const BoundReport bounds = assemble_bounds(c, nullptr, opt.eps);

  const VarianceEstimate var = matched_pair_variance(analysis, fit, opt.kappa);

  json report;
  report["schema"] = kReportSchema;
  report["meta"] = {{"version", kVersion}, {"seed", opt.seed}, {"created", utc_timestamp()}, {"input", opt.input}};
  report["data"] = {{"n", sample.size()}, {"n1", sample.count(1)}, {"n0", sample.count(0)}, {"p", p}};
  report["fit"] = {{"map", map.describe()},
                   {"names", fit.names},
                   {"theta", std::vector<double>(fit.theta.data(), fit.theta.data() + fit.theta.size())},
                   {"beta", fit.beta()},
                   {"n", fit.n}};
  report["index"] = {{"location", location.describe()}};
  if (opt.map == "index" || opt.map == "strata" || opt.map == "constant")
    report["index"]["note"] = opt.refit_index ? "index refitted on the analyzed subsample" : "index fitted on the full sample";

  json design = {{"rule", handle.provenance().rule},
                 {"pairs", pairs_json(handle.provenance())},
                 {"notes", handle.provenance().notes},
                 {"member_ids", handle.member_ids()},
                 {"n", analysis.size()},
                 {"n1", analysis.count(1)},
                 {"n0", analysis.count(0)}};
  report["design"] = design;
  report["balance"] = {{"pre", to_json(c_pre)}, {"post", to_json(c)}};
  report["c"] = to_json(c);
  report["bounds"] = to_json(bounds);
  report["summaries"] = rset.names();

  json support = json::array();
  {
    std::map<double, std::pair<double, double>> masses;
    for (const auto& pt : g1.points()) masses[pt.location[0]].first = pt.mass;
    for (const auto& pt : g0.points()) masses[pt.location[0]].second = pt.mass;
    for (const auto& [t, m] : masses)
      support.push_back({{"t", t}, {"mass1", m.first}, {"mass0", m.second}, {"l0", model_line.at(t)}});
  }
  report["support"] = support;

  json inference;
  inference["beta_hat"] = fit.beta();
  inference["se"] = var.se_beta;
  inference["alpha"] = opt.alpha;
  inference["kappa"] = var.kappa;
  inference["nulls"] = opt.nulls;
  json families = json::object();
  std::string primary;
  for (Family f : {Family::ks, Family::mkw, Family::tv, Family::dr, Family::lp}) {
    const double cf = family_scalar_c(c, f);
    if (!std::isfinite(cf)) continue;
    const RobustCI ci = robust_ci(fit.beta(), var.se_beta, cf, opt.alpha);
    const double m_max = trapezoid_extent(ci, opt.nulls);
    families[to_string(f)] = {{"c", cf}, {"trapezoid", trapezoid_json(ci, m_max, 20)}, {"m_values", m_values_json(ci, opt.nulls)}};
    if (primary.empty()) primary = to_string(f);
  }
  const RobustCI classical = robust_ci(fit.beta(), var.se_beta, 0.0, opt.alpha);
  const Interval base = classical.endpoints(0.0);
  inference["classical"] = {base.lo, base.hi};
  inference["t_stats"] = json::object();
  for (double n : opt.nulls)
    inference["t_stats"][null_key(n)] = var.se_beta > 0.0 ? json(t_stat(fit.beta(), var.se_beta, n)) : json(nullptr);
  inference["family"] = primary;
  inference["trapezoid"] = families[primary]["trapezoid"];
  inference["m_values"] = families[primary]["m_values"];
  inference["families"] = families;
  report["inference"] = inference;

  validate_report(report);
  return report;
}

// --------------------------------------------------------------- validation

void validate_report(const json& r) {
  using vt = json::value_t;
  if (!r.is_object()) invalid("report is not a JSON object");
  require(r, "schema", vt::string, "");
  if (r.at("schema") != kReportSchema) invalid("report schema is not " + std::string(kReportSchema));
  for (const char* key : {"meta", "data", "fit", "design", "balance", "c", "bounds", "inference"})
    require(r, key, vt::object, "");
  require(r, "support", vt::array, "");
  require(r, "summaries", vt::array, "");

  const json& c = r.at("c");
  for (const char* key : {"tv", "dr", "dr_singular"}) require(c, key, vt::number_float, "c.");
  for (const char* key : {"ks", "w1", "md", "lp", "md_names"})
    if (!c.contains(key)) invalid(std::string("report is missing 'c.") + key + "'");

  const json& inf = r.at("inference");
  for (const char* key : {"beta_hat", "se", "alpha"}) require(inf, key, vt::number_float, "inference.");
  require(inf, "trapezoid", vt::array, "inference.");
  require(inf, "m_values", vt::object, "inference.");
  require(inf, "families", vt::object, "inference.");
  require(inf, "nulls", vt::array, "inference.");
  require(r.at("design"), "pairs", vt::array, "design.");

  for (const auto& pt : r.at("support")) {
    for (const char* key : {"t", "mass1", "mass0", "l0"}) require(pt, key, vt::number_float, "support[].");
  }
  for (Family f : kAllFamilies) require(r.at("bounds"), to_string(f), vt::object, "bounds.");
}

// ----------------------------------------------------------------- perturb

json perturb(const json& report, const json& request) {
  validate_report(report);
  if (!request.is_object()) invalid("request body must be a JSON object");
  if (!request.contains("knots") || !request.at("knots").is_array() || request.at("knots").empty())
    invalid("knots required");

  std::vector<Perturbation::Knot> knots;
  for (const auto& k : request.at("knots")) {
    if (!k.is_object() || !k.contains("t") || !k.contains("h") || !k.at("t").is_number() || !k.at("h").is_number())
      invalid("each knot needs numeric t and h");
    knots.push_back({k.at("t").get<double>(), k.at("h").get<double>()});
  }
  const Perturbation h(std::move(knots));

  std::vector<Family> families;
  if (request.contains("families")) {
    if (!request.at("families").is_array()) invalid("families must be an array of names");
    for (const auto& name : request.at("families")) {
      if (!name.is_string()) invalid("families must be an array of names");
      const auto f = family_from_string(name.get<std::string>());
      if (!f) invalid("unknown family '" + name.get<std::string>() + "'");
      families.push_back(*f);
    }
  } else {
    families.assign(std::begin(kAllFamilies), std::end(kAllFamilies));
  }

  const json& inf = report.at("inference");
  const double beta_hat = inf.at("beta_hat").get<double>();
  const double se = inf.at("se").get<double>();
  const double alpha = request.value("alpha", inf.at("alpha").get<double>());
  const double null_tau =
      request.value("null", inf.at("nulls").empty() ? 0.0 : inf.at("nulls").at(0).get<double>());
  std::optional<double> eps;
  if (request.contains("eps")) eps = request.at("eps").get<double>();

  std::vector<MassPoint> p1, p0;
  std::map<double, double> model_line;
  for (const auto& pt : report.at("support")) {
    const double t = pt.at("t").get<double>();
    if (pt.at("mass1").get<double>() > 0.0) p1.push_back({{t}, pt.at("mass1").get<double>()});
    if (pt.at("mass0").get<double>() > 0.0) p0.push_back({{t}, pt.at("mass0").get<double>()});
    model_line[t] = pt.at("l0").get<double>();
  }
  if (p1.empty() || p0.empty()) invalid("report support lacks one arm");
  const EmpiricalCond g1(1, std::move(p1)), g0(0, std::move(p0));

  const ImbalanceVector c = imbalance_from_json(report.at("c"));
  const bool want_md = std::find(families.begin(), families.end(), Family::md) != families.end();
  const SummarySet rset = summaries_on_index(report.at("summaries").get<std::vector<std::string>>(), model_line);
  const MisspecVector m = compute_misspec(h, g1, g0, want_md && rset.size() && c.md ? &rset : nullptr);
  const BoundReport bounds = assemble_bounds(c, &m, eps);

  const RobustCI ci = robust_ci(beta_hat, se, 0.0, alpha);
  const Interval base = ci.endpoints(0.0);

  json out;
  json mj = {{"ks", m.ks}, {"lip", m.lip}, {"sup", m.sup}, {"l2_g0", m.l2_g0}, {"dr_singular", m.dr_singular}};
  if (m.md) mj["md"] = {{"m", std::vector<double>(m.md->m.data(), m.md->m.data() + m.md->m.size())}, {"slack", m.md->slack}};
  out["m"] = mj;
  out["beta_hat"] = beta_hat;
  out["se"] = se;
  out["alpha"] = alpha;
  out["null"] = null_tau;
  out["classical"] = {base.lo, base.hi};
  json fam = json::object();
  const json all = to_json(bounds);
  for (Family f : families) {
    const FamilyBound* fb = bounds.find(f);
    json e = all.at(to_string(f));
    if (!fb || !fb->bound) {
      e["available"] = false;
      e["reason"] = fb ? fb->skipped : "unknown family";
    } else {
      e["available"] = true;
      e["verdict"] = to_string(verdict(*fb->bound, beta_hat, null_tau));
      e["interval"] = {base.lo - *fb->bound, base.hi + *fb->bound};
    }
    fam[to_string(f)] = std::move(e);
  }
  out["families"] = fam;
  return out;
}

json trapezoid(const json& report, const std::string& family, std::optional<double> alpha, int steps) {
  validate_report(report);
  const auto f = family_from_string(family);
  if (!f) invalid("unknown family '" + family + "'");
  if (*f == Family::md) invalid("family 'md' has a vector c; no single trapezoid");
  const ImbalanceVector c = imbalance_from_json(report.at("c"));
  const double cf = family_scalar_c(c, *f);
  if (!std::isfinite(cf)) invalid("family '" + family + "' has no c in this report");
  const json& inf = report.at("inference");
  const double a = alpha.value_or(inf.at("alpha").get<double>());
  const RobustCI ci = robust_ci(inf.at("beta_hat").get<double>(), inf.at("se").get<double>(), cf, a);
  const auto nulls = inf.at("nulls").get<std::vector<double>>();
  const double m_max = trapezoid_extent(ci, nulls);
  return {{"family", to_string(*f)},
          {"alpha", a},
          {"c", cf},
          {"points", trapezoid_json(ci, m_max, steps)},
          {"m_values", m_values_json(ci, nulls)}};
}

}  // namespace bb
