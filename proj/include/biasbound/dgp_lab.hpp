#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "biasbound/design.hpp"
#include "biasbound/regression.hpp"
#include "biasbound/sample.hpp"

namespace bb {

/// Per-replication random stream: a Mersenne twister seeded from
/// (seed, stream) so replications are independent of execution order.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream);

/// Seed from BB_SEED when set, else `fallback`.
std::uint64_t seed_from_env(std::uint64_t fallback);

// ---------------------------------------------------------------- Example 1

/// Binary X and D with P(D = d, X = x) = (1/2 - p) when d = x and p otherwise;
/// f(x, d) = d + d x + x. Spec A regresses on (1, D), spec B on (1, D, X).
struct Example1Oracle {
  double p = 0.0;
  double tau = 0.0;
  double beta_a = 0.0, beta_b = 0.0;
  double bias_a = 0.0, bias_b = 0.0;
  double c_ks = 0.0, c_w1 = 0.0, c_tv = 0.0, c_dr = 0.0;
  double m_ks_a = 0.0, m_ks_b = 0.0;
  double m_mkw_a = 0.0, m_mkw_b = 0.0;
  double m_tv_a = 0.0, m_tv_b = 0.0;
  double m_dr_a = 0.0, m_dr_b = 0.0;
  Eigen::Vector2d zeta_a, zeta_b;  // separation solutions with summaries (1, x), L infinite
  Eigen::Vector2d m_md_a, m_md_b;
  Eigen::Vector2d c_md;
};

/// Closed forms. Throws ErrorKind::validation unless 0 < p < 1/2.
Example1Oracle example1_oracle(double p);
DGPSpec example1_dgp(double p);
/// Finite sample whose empirical joint matches the Example 1 atoms; needs
/// every atom mass times n to be an integer.
Sample example1_sample(double p, std::size_t n = 200);

// ---------------------------------------------------------------- Example 2

struct Example2Data {
  Sample sample;                 // 24 units, y = x
  SubsampleHandle listed_pairs;  // the five listed pairs
  SubsampleHandle subsample;     // listed pairs plus T4 and U7 (c_KS = 1/6)
};

Example2Data example2_dataset();
std::string example2_csv();

// --------------------------------------------------------------- simulation

enum class SimSpec { A, B, C };
char to_char(SimSpec s);
CovariateMap sim_spec_map(SimSpec s);

struct SimPlan {
  std::size_t n1 = 50;
  std::size_t n0 = 100;
  int replications = 100;
  std::uint64_t seed = 20240617;
  std::vector<SimSpec> specs = {SimSpec::A, SimSpec::B, SimSpec::C};
  MatchSpec matcher;
  bool with_md = true;  // solve the separation programs (the slowest step)
  std::size_t pool_treated = 148;
  std::size_t pool_controls = 1336;
};

/// One side (full sample or matched subsample) of a replication.
struct SimSide {
  double beta = 0.0, tau = 0.0, bias = 0.0;
  double c_ks = 0.0, c_w1 = 0.0, c_tv = 0.0, c_dr = 0.0, c_md = 0.0;
  double c_tv_strata = 0.0, c_dr_strata = 0.0;  // on quartile strata of the control index
  double m_ks = 0.0, m_lip = 0.0, m_sup = 0.0, m_l2 = 0.0, m_md = 0.0, md_slack = 0.0;
  std::size_t n = 0;
};

struct SimRow {
  int rep = 0;
  SimSpec spec = SimSpec::A;
  bool skipped = false;
  std::string reason;
  SimSide pre, post;
};

struct SimTable {
  SimPlan plan;
  std::vector<SimRow> rows;  // ordered by (rep, spec)

  /// Fraction of non-skipped rows of `spec` with |bias_post| < |bias_pre|.
  double improvement_rate(SimSpec spec) const;
  void write_csv(std::ostream& os) const;
};

/// Synthetic pool with the shape of the mortgage application sample: six
/// covariates, a minority indicator and a binary denial outcome.
Sample synthetic_pool(std::uint64_t seed, std::size_t n_treated, std::size_t n_controls);

/// Draw, fit the index and the logit, compute estimands before and after
/// matching. Replications run on `threads` workers and are merged by index.
SimTable run_simulation(const SimPlan& plan, unsigned threads = 1);

// ----------------------------------------------------------------- coverage

struct CoveragePlan {
  std::size_t n = 2000;
  int replications = 1000;
  std::uint64_t seed = 7;
  double alpha = 0.05;
  bool misspecified = false;
};

struct CoverageResult {
  int covered = 0;
  int total = 0;
  double rate() const { return total ? static_cast<double>(covered) / total : 0.0; }
};

/// Correct: f affine in (d, x), interval C(0) against the sample estimand.
/// Misspecified: curved f(., 0), interval C(m) with m the KS magnitude of the
/// sample misspecification, against the sample ATT.
CoverageResult run_coverage(const CoveragePlan& plan, unsigned threads = 1);

}  // namespace bb
