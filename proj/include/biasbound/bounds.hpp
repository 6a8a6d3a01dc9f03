#pragma once

#include <optional>
#include <string>
#include <vector>

#include "biasbound/imbalance.hpp"
#include "biasbound/misspec.hpp"
#include "biasbound/regression.hpp"

namespace bb {

enum class Family { ks, mkw, tv, dr, md, lp };

const char* to_string(Family f);
std::optional<Family> family_from_string(const std::string& name);
inline constexpr Family kAllFamilies[] = {Family::ks, Family::mkw, Family::tv, Family::dr, Family::md, Family::lp};

/// beta - tau two ways: the inner-product representation over the x-support
/// of g and the direct difference of the regression estimand and the ATT.
struct ExactBias {
  double representation = 0.0;
  double direct = 0.0;
  double beta = 0.0;
  double tau = 0.0;
};

/// Throws ErrorKind::numerical if the two routes disagree by more than 1e-10
/// (relative to the scale of f).
ExactBias bias_exact(const DGPSpec& dgp, const JointDist& g, const CovariateMap& map);

struct FamilyBound {
  Family family = Family::ks;
  std::vector<double> c;  // one entry; per summary for MD; [lo, hi] for LP
  std::vector<double> m;  // empty without a perturbation
  std::optional<double> bound;
  std::optional<double> budget;  // eps / c
  double dr_singular_term = 0.0;
  double md_slack_term = 0.0;
  std::string skipped;  // why `bound` is empty
};

struct BoundReport {
  std::vector<FamilyBound> families;
  std::optional<double> exact_bias;

  const FamilyBound* find(Family f) const;
};

/// bound = m c (+ correction) per family. Families lacking either side are
/// kept with `skipped` set instead of a zero bound.
BoundReport assemble_bounds(const ImbalanceVector& c, const MisspecVector* m = nullptr,
                            std::optional<double> eps = std::nullopt);

enum class Verdict { sustained, overturned };
const char* to_string(Verdict v);

/// Sustained iff |beta_hat - null_tau| > bound.
Verdict verdict(double bound, double beta_hat, double null_tau);

struct FamilyVerdict {
  Family family;
  Verdict verdict;
};

std::vector<FamilyVerdict> verdicts(const BoundReport& report, double beta_hat, double null_tau);

}  // namespace bb
