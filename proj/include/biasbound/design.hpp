#pragma once

#include <optional>

#include "biasbound/imbalance.hpp"
#include "biasbound/regression.hpp"
#include "biasbound/sample.hpp"

namespace bb {

struct MatchSpec {
  enum class Metric { euclidean, index_abs };
  enum class Order { greedy_distance, treated_id };

  Metric metric = Metric::index_abs;
  bool replacement = false;
  Order order = Order::greedy_distance;
  std::optional<double> caliper;
  /// Index for index_abs. Defaults to the raw covariate when p = 1 and to the
  /// linear propensity fitted on the view otherwise.
  std::optional<CovariateMap> index;
};

/// 1:1 nearest-neighbour matching of treated units to controls. Ties go to the
/// lowest id (numeric-aware). With replacement a control reused by several
/// treated units appears once in the member list.
SubsampleHandle nn_match(const DesignView& view, const MatchSpec& spec);

struct BalanceTable {
  ImbalanceVector pre;
  ImbalanceVector post;
  std::size_t n_pre = 0;
  std::size_t n_post = 0;
};

BalanceTable balance_compare(const DesignView& view, const SubsampleHandle& sub, const CovariateMap& index,
                             const SummarySet* rset = nullptr);

/// Units with index value in [lo, hi].
SubsampleHandle trim_by_score(const DesignView& view, const CovariateMap& index, double lo, double hi);

}  // namespace bb
