#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "biasbound/imbalance.hpp"
#include "biasbound/sample.hpp"

namespace bb {

/// Tabulated h = f(., 0) - l(., 0) on a scalar index grid. Linear between
/// knots, constant beyond the end knots.
class Perturbation {
 public:
  struct Knot {
    double t = 0.0;
    double h = 0.0;
  };

  /// Throws ErrorKind::validation on zero knots, non-increasing t or
  /// non-finite values.
  explicit Perturbation(std::vector<Knot> knots);

  /// Knots at `ts` with values fn(t).
  template <typename Fn>
  static Perturbation tabulate(std::span<const double> ts, Fn&& fn) {
    std::vector<Knot> k;
    k.reserve(ts.size());
    for (double t : ts) k.push_back({t, fn(t)});
    return Perturbation(std::move(k));
  }

  double operator()(double t) const;
  const std::vector<Knot>& knots() const noexcept { return knots_; }
  Perturbation scaled(double a) const;

 private:
  std::vector<Knot> knots_;
};

double m_total_variation(const Perturbation& h);
double m_lipschitz(const Perturbation& h);
/// max |h| over the knots, or over `support` when given.
double m_sup(const Perturbation& h, std::optional<std::span<const double>> support = std::nullopt);
double m_l2_g0(const Perturbation& h, const EmpiricalCond& g0);
/// |sum of h g1 over G1 points outside the G0 support|.
double dr_singular_term(const Perturbation& h, const EmpiricalCond& g1, const EmpiricalCond& g0);

inline constexpr double kInfinitePenalty = std::numeric_limits<double>::infinity();

struct SeparationSolution {
  Eigen::VectorXd zeta;
  std::vector<double> slacks1;  // one per G1 support point, in EmpiricalCond order
  std::vector<double> slacks0;
  int sigma = 1;
  double penalty = kInfinitePenalty;
  double objective = 0.0;  // ||zeta||^2 + L * total slack (total slack alone when L is infinite)
  bool sharp = false;      // every slack is zero up to rounding
  std::size_t n1 = 0, n0 = 0, n_summaries = 0;

  /// Largest violation of the separation inequalities (0 when feasible).
  double max_residual(const Perturbation& h, const SummarySet& rset, const EmpiricalCond& g1,
                      const EmpiricalCond& g0) const;
};

/// One of the pair of separation programs; sigma is +1 or -1. Always returns a
/// feasible point: slacks are recomputed as the hinge of the constraint gap.
SeparationSolution solve_separation(const Perturbation& h, const SummarySet& rset, const EmpiricalCond& g1,
                                    const EmpiricalCond& g0, int sigma, double penalty = kInfinitePenalty);

struct MdMisspec {
  Eigen::VectorXd m;
  double slack = 0.0;  // sum over sigma and arms of mass-weighted slacks
};

MdMisspec m_md(const SeparationSolution& plus, const SeparationSolution& minus, const EmpiricalCond& g1,
               const EmpiricalCond& g0);

struct MisspecVector {
  double ks = 0.0;
  double lip = 0.0;
  double sup = 0.0;
  double l2_g0 = 0.0;
  double dr_singular = 0.0;
  std::optional<MdMisspec> md;
};

/// Every magnitude of h relative to the supports of (g1, g0). m_sup is taken
/// over the union of both supports.
MisspecVector compute_misspec(const Perturbation& h, const EmpiricalCond& g1, const EmpiricalCond& g0,
                              const SummarySet* rset = nullptr, double penalty = kInfinitePenalty);

}  // namespace bb
