#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "biasbound/bounds.hpp"
#include "biasbound/dgp_lab.hpp"
#include "biasbound/sample.hpp"

namespace bb {

using json = nlohmann::json;

inline constexpr const char* kReportSchema = "biasbound.report/1";

struct AnalyzeOptions {
  std::string map = "identity";  // identity | index | strata | constant
  int strata = 4;
  double alpha = 0.05;
  /// Subset of: 1, index, negmodel.
  std::vector<std::string> summaries = {"1", "index"};
  std::string match = "none";  // none | nn
  std::optional<double> caliper;
  bool replacement = false;
  bool refit_index = false;  // fit the propensity index on the subsample instead of the full sample
  std::vector<std::string> subsample_ids;  // overrides `match` when non-empty
  std::vector<double> nulls = {0.0};
  std::optional<double> eps;
  std::optional<double> kappa;
  std::uint64_t seed = 0;
  std::string input;  // recorded in meta only
};

/// fit -> design phase -> balance -> bounds (c side) -> inference.
json analyze(const Sample& sample, const AnalyzeOptions& opt);

/// Throws ErrorKind::validation naming the first missing or mistyped field.
void validate_report(const json& report);

/// Reader-side evaluation of a perturbation against a report. `request`
/// holds `knots` and optionally `families`, `null`, `alpha`, `eps`.
json perturb(const json& report, const json& request);

/// m-grid endpoints for one family of the report.
json trapezoid(const json& report, const std::string& family, std::optional<double> alpha, int steps = 20);

json to_json(const ImbalanceVector& c);
ImbalanceVector imbalance_from_json(const json& j);
json to_json(const BoundReport& r);
json to_json(const SimTable& t);

}  // namespace bb
