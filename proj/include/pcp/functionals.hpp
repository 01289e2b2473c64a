#pragma once

// Covariance and correlation of (c, r) from predicted quads, group averages
// with standard errors, and the debiased group correlation.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcp/data.hpp"
#include "pcp/prob_quad.hpp"
#include "pcp/synth.hpp"

namespace pcp {

enum class Statistic { Covariance, NaiveCorrelation, DebiasedCorrelation };

std::string to_string(Statistic s);

/// Marginal p or q within `tol` of 0 or 1.
bool degenerate_marginals(const ProbQuad& quad, double tol = 1e-9);

/// C = p11 - p q.
double covariance_from_quad(const ProbQuad& quad);
/// rho = C / sqrt(p(1-p) q(1-q)); throws NumericalError on degenerate marginals.
double correlation_from_quad(const ProbQuad& quad);

struct GradientRegressors {
  double grad1 = 0.0;  // rho (q - 1/2) / (q (1 - q))
  double grad2 = 0.0;  // rho (p - 1/2) / (p (1 - p))
};
GradientRegressors gradient_regressors(const ProbQuad& quad, double rho);

struct PerObsStats {
  ProbQuad quad;
  double covariance = 0.0;
  double correlation = 0.0;  // NaN when degenerate
  double grad1 = 0.0;
  double grad2 = 0.0;
  bool degenerate = false;
};

std::vector<PerObsStats> per_obs_stats(std::span<const ProbQuad> quads);

struct GroupEstimate {
  std::string group;
  Statistic kind = Statistic::Covariance;
  double estimate = 0.0;
  double se = 0.0;
  double effective_size = 0.0;  // (sum w)^2 / sum w^2 over the records used
  std::size_t records = 0;      // group size
  std::size_t used = 0;         // records entering the estimate
  int regressors = 0;           // debiased: gradient regressors kept (0-2)
};

/// Weighted mean over `indices` with se^2 = sum w^2 (v - b)^2 / (sum w)^2.
/// Non-finite values are skipped.
GroupEstimate group_mean(std::span<const double> values, std::span<const double> weights,
                         std::span<const std::size_t> indices, std::string label = {},
                         Statistic kind = Statistic::Covariance);

/// Weighted least squares of rho on (1, grad1, grad2) over the non-degenerate
/// records of the group; intercept with heteroskedasticity-robust SE. Drops
/// grad2, then grad1, when the weighted design is rank deficient.
GroupEstimate debiased_group_correlation(std::span<const PerObsStats> stats, std::span<const double> weights,
                                         std::span<const std::size_t> indices, std::string label = {});

struct WlsFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd residuals;
  double intercept_se = 0.0;
  int kept = 0;  // regressors besides the constant
};

/// The regression behind debiased_group_correlation, exposed for checks.
WlsFit debiasing_regression(std::span<const double> y, std::span<const double> g1, std::span<const double> g2,
                            std::span<const double> w);

std::vector<GroupEstimate> group_estimates(std::span<const PerObsStats> stats, std::span<const double> weights,
                                           const std::vector<Group>& groups, Statistic kind);

struct FunctionSummary {
  double mean = 0.0;
  double dispersion = 0.0;  // weighted standard deviation
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

/// Non-finite values are skipped.
FunctionSummary summarize(std::span<const double> values, std::span<const double> weights);

/// Weighted (c, r) frequencies of each record's covariate cell.
std::vector<ProbQuad> empirical_quads(const Dataset& d);

struct OrthogonalityReport {
  double covariance = 0.0;
  double naive_correlation = 0.0;
  double debiased_correlation = 0.0;
  int directions = 0;
};

/// Largest central-difference derivative (step `epsilon`) of each group-mean
/// estimating equation at the true nuisance quads, over random directions.
/// Outcome-dependent terms are replaced by their conditional expectations.
OrthogonalityReport orthogonality_check(const SyntheticDGP& dgp, std::size_t n, std::uint64_t seed,
                                        double epsilon = 1e-4, int directions = 16);

}  // namespace pcp
