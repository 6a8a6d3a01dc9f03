#include "biasbound/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "biasbound/error.hpp"

namespace bb {

namespace {

constexpr const char* kModule = "design";

struct Candidate {
  double distance;
  const DesignView::Row* treated;
  const DesignView::Row* control;
};

bool candidate_less(const Candidate& a, const Candidate& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  if (a.treated->id != b.treated->id) return natural_id_less(a.treated->id, b.treated->id);
  return natural_id_less(a.control->id, b.control->id);
}

bool row_id_less(const DesignView::Row* a, const DesignView::Row* b) { return natural_id_less(a->id, b->id); }

}  // namespace

SubsampleHandle nn_match(const DesignView& view, const MatchSpec& spec) {
  if (spec.caliper && !(*spec.caliper > 0.0)) throw Error(ErrorKind::validation, kModule, "caliper must be positive");
  std::vector<const DesignView::Row*> treated, controls;
  for (const auto& row : view.rows()) (row.d == 1 ? treated : controls).push_back(&row);
  if (treated.empty() || controls.empty()) throw Error(ErrorKind::validation, kModule, "both arms must be non-empty");
  if (!spec.replacement && treated.size() > controls.size())
    throw Error(ErrorKind::capacity, kModule,
                "matching without replacement needs at least as many controls (" + std::to_string(controls.size()) +
                    ") as treated units (" + std::to_string(treated.size()) + ")");
  std::sort(treated.begin(), treated.end(), row_id_less);
  std::sort(controls.begin(), controls.end(), row_id_less);

  std::optional<CovariateMap> index;
  if (spec.metric == MatchSpec::Metric::index_abs) {
    if (spec.index) index = spec.index;
    else if (view.p() == 1) index = CovariateMap::identity();
    else index = CovariateMap::linear_propensity(view);
  }
  auto distance = [&](const DesignView::Row& a, const DesignView::Row& b) {
    if (index) return std::abs(index->index_value(a.x) - index->index_value(b.x));
    double sq = 0.0;
    for (std::size_t j = 0; j < a.x.size(); ++j) sq += (a.x[j] - b.x[j]) * (a.x[j] - b.x[j]);
    return std::sqrt(sq);
  };
  const double caliper = spec.caliper.value_or(std::numeric_limits<double>::infinity());

  std::vector<Candidate> cands;
  cands.reserve(treated.size() * controls.size());
  for (const auto* t : treated)
    for (const auto* c : controls) cands.push_back({distance(*t, *c), t, c});

  std::vector<MatchedPair> pairs;
  std::unordered_set<const DesignView::Row*> used_controls;
  auto is_used = [&](const DesignView::Row* c) { return used_controls.count(c) > 0; };

  if (spec.replacement || spec.order == MatchSpec::Order::treated_id) {
    // Candidates of one treated unit are contiguous in `cands`, in control-id order.
    for (std::size_t ti = 0; ti < treated.size(); ++ti) {
      const Candidate* best = nullptr;
      for (std::size_t ci = 0; ci < controls.size(); ++ci) {
        const Candidate& cand = cands[ti * controls.size() + ci];
        if (!spec.replacement && is_used(cand.control)) continue;
        if (!best || cand.distance < best->distance) best = &cand;
      }
      if (!best || best->distance > caliper) continue;
      pairs.push_back({best->treated->id, best->control->id, best->distance});
      used_controls.insert(best->control);
    }
  } else {
    std::sort(cands.begin(), cands.end(), candidate_less);
    std::unordered_set<const DesignView::Row*> done;
    for (const auto& cand : cands) {
      if (cand.distance > caliper) break;
      if (done.count(cand.treated) || is_used(cand.control)) continue;
      done.insert(cand.treated);
      used_controls.insert(cand.control);
      pairs.push_back({cand.treated->id, cand.control->id, cand.distance});
      if (done.size() == treated.size()) break;
    }
    std::sort(pairs.begin(), pairs.end(),
              [](const MatchedPair& a, const MatchedPair& b) { return natural_id_less(a.treated_id, b.treated_id); });
  }
  if (pairs.empty()) throw Error(ErrorKind::domain, kModule, "all treated dropped");

  std::vector<std::string> members;
  for (const auto& p : pairs) members.push_back(p.treated_id);
  std::vector<std::string> control_ids;
  for (const auto& p : pairs)
    if (std::find(control_ids.begin(), control_ids.end(), p.control_id) == control_ids.end())
      control_ids.push_back(p.control_id);
  members.insert(members.end(), control_ids.begin(), control_ids.end());

  Provenance prov;
  std::ostringstream rule;
  rule << "nn_match metric=" << (index ? "index_abs" : "euclidean")
       << " replacement=" << (spec.replacement ? "with" : "without")
       << " order=" << (spec.order == MatchSpec::Order::greedy_distance ? "greedy" : "treated_id");
  if (spec.caliper) rule << " caliper=" << *spec.caliper;
  prov.rule = rule.str();
  prov.pairs = std::move(pairs);
  if (index) prov.notes.push_back("index: " + index->describe());
  const std::size_t dropped = treated.size() - prov.pairs.size();
  if (dropped > 0) prov.notes.push_back(std::to_string(dropped) + " treated dropped by caliper");
  return SubsampleHandle(view, std::move(members), std::move(prov));
}

BalanceTable balance_compare(const DesignView& view, const SubsampleHandle& sub, const CovariateMap& index,
                             const SummarySet* rset) {
  const DesignView post = view.restrict(sub);
  BalanceTable t;
  t.pre = compute_imbalance(empirical_cond(view, 1, index), empirical_cond(view, 0, index), rset);
  t.post = compute_imbalance(empirical_cond(post, 1, index), empirical_cond(post, 0, index), rset);
  t.n_pre = view.size();
  t.n_post = post.size();
  return t;
}

SubsampleHandle trim_by_score(const DesignView& view, const CovariateMap& index, double lo, double hi) {
  if (!(lo < hi)) throw Error(ErrorKind::validation, kModule, "trim needs lo < hi");
  std::vector<std::string> keep;
  std::size_t n1 = 0, n0 = 0;
  for (const auto& row : view.rows()) {
    const double t = index.index_value(row.x);
    if (t >= lo && t <= hi) {
      keep.push_back(row.id);
      (row.d == 1 ? n1 : n0)++;
    }
  }
  if (n1 == 0 || n0 == 0) throw Error(ErrorKind::domain, kModule, "trim leaves an arm empty");
  std::ostringstream rule;
  rule << "trim_by_score [" << lo << ", " << hi << "] on " << index.describe();
  return SubsampleHandle(view, std::move(keep), Provenance{rule.str(), {}, {}});
}

}  // namespace bb
