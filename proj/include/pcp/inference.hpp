#pragma once

// Intersection test over group averages and the sorted-groups test.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pcp/classifier.hpp"
#include "pcp/data.hpp"
#include "pcp/functionals.hpp"
#include "pcp/hyperopt.hpp"

namespace pcp {

/// 1 - 0.1 / log(n).
double gamma_n(std::size_t n);

/// Phi^{-1}(gamma^{1/L}): the gamma-quantile of the max of L independent
/// standard normals.
double analytic_k0(int groups, double gamma);

struct IntersectionInput {
  std::vector<double> estimates;  // T_l
  std::vector<double> se;         // sigma_l > 0
  std::size_t n = 0;              // sample size entering gamma_n
  double alpha = 0.05;
  std::size_t draws = 100000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct IntersectionResult {
  double alpha = 0.0;
  double gamma = 0.0;
  double k0 = 0.0;
  std::vector<std::size_t> selected;  // L-hat, ascending
  double k = 0.0;
  double statistic = 0.0;  // min over L-hat of T_l + k sigma_l
  bool rejected = false;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  bool ci_clamped = false;
};

/// Monte Carlo maxima of standard normal vectors, shared across test levels.
class MaxNormalDraws {
 public:
  MaxNormalDraws(std::size_t groups, std::size_t draws, std::uint64_t seed);

  std::size_t groups() const { return static_cast<std::size_t>(xi_.cols()); }
  std::size_t draws() const { return static_cast<std::size_t>(xi_.rows()); }
  /// Type-7 `prob` quantile of max over `subset` of the draws (all when empty).
  double max_quantile(double prob, const std::vector<std::size_t>& subset = {}) const;

 private:
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> xi_;
};

IntersectionResult intersection_test(const IntersectionInput& input);
/// One result per level, all from the same draws.
std::vector<IntersectionResult> intersection_test(const IntersectionInput& input, const std::vector<double>& alphas);
IntersectionResult intersection_test(const IntersectionInput& input, const MaxNormalDraws& draws);

// ---------------------------------------------------------------- sorted groups

/// Gradient of the covariance (or correlation) of a quad in (p00, p01, p10, p11).
std::array<double, 4> statistic_gradient(const ProbQuad& quad, Statistic kind);

/// sqrt(g' Sigma g) with g the analytic gradient of the statistic at `quad`.
double delta_method_se(const ProbQuad& quad, const Eigen::Matrix4d& sigma, Statistic kind);

/// Covariance or correlation of a quad; `kind` may not be the debiased statistic.
double quad_statistic(const ProbQuad& quad, Statistic kind);

struct SortedGroupsConfig {
  int groups = 4;
  int splits = 101;
  double main_fraction = 0.5;
  Statistic statistic = Statistic::Covariance;  // Covariance or NaiveCorrelation
  LearnerConfig learner;
  bool hyperopt = true;  // re-select the learner on every auxiliary sample
  NetworkGrid network_grid;
  TreeGrid tree_grid = TreeGrid::default_forest();
  SplitPlan network_plan{0.70, 0.15, 0.15, 0};
  double validation_fraction = 0.15;  // early stopping without hyperopt
  int max_redraws = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SortedSplit {
  std::uint64_t seed = 0;
  int redraws = 0;
  LearnerConfig learner;
  std::vector<ProbQuad> group_quads;       // p-bar_jk(q)
  std::vector<double> predicted_mean;      // weighted mean of the predicted statistic per group
  std::vector<double> group_statistic;
  std::vector<double> group_se;
  std::vector<std::size_t> group_sizes;
  std::vector<std::size_t> first_group;    // dataset indices of group q = 1
  double statistic = 0.0;  // group 1
  double se = 0.0;
  double t = 0.0;
  double p_value = 0.0;  // one-sided, Phi(t)
  double ci_lower = 0.0;
  double ci_upper = 0.0;
};

struct SortedGroupsResult {
  std::vector<SortedSplit> splits;
  double statistic = 0.0;  // medians over splits
  double se = 0.0;
  double t = 0.0;
  double p_value = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::vector<double> group_statistic;  // per group, median over splits
};

SortedGroupsResult sorted_groups_run(const Dataset& d, const SortedGroupsConfig& cfg);

/// Group statistics of one fixed grouping, as in steps (e)-(f).
SortedSplit sorted_groups_evaluate(const Dataset& main, const std::vector<Group>& groups,
                                   std::span<const double> predicted, Statistic kind);

// ---------------------------------------------------------------- Monte Carlo

struct RejectionReport {
  std::size_t reps = 0;
  std::size_t rejections = 0;
  double rate = 0.0;
  double se = 0.0;  // binomial
};

/// Runs trial(rep_seed) for each replication; true means rejection.
RejectionReport mc_rejection_rate(std::size_t reps, std::uint64_t seed,
                                  const std::function<bool(std::uint64_t)>& trial);

/// Intersection test on L groups of `per_group` observations drawn from
/// N(mean_l * sigma, sigma^2); group means and SEs from the sample.
RejectionReport mc_size_power(const std::vector<double>& means_in_sigma, double sigma, std::size_t per_group,
                              double alpha, std::size_t reps, std::size_t draws, std::uint64_t seed);

}  // namespace pcp
