#include "pcp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include "pcp/error.hpp"
#include "pcp/stats.hpp"

namespace pcp {

namespace {

constexpr std::size_t kDrawBlock = 8192;
constexpr double kZ975 = 1.959963984540054;

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout(const std::vector<std::size_t>& idx,
                                                                      double fraction, std::uint64_t seed) {
  const auto order = shuffled_indices(idx.size(), seed);
  const auto n_hold = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(idx.size())));
  if (n_hold == 0 || n_hold == idx.size()) throw ValidationError("holdout: sample too small to split");
  std::vector<std::size_t> keep, held;
  for (std::size_t j = 0; j < order.size(); ++j) (j < n_hold ? held : keep).push_back(idx[order[j]]);
  return {keep, held};
}

}  // namespace

double gamma_n(std::size_t n) {
  if (n < 2) throw ValidationError("gamma_n: sample size must be at least 2");
  return 1.0 - 0.1 / std::log(static_cast<double>(n));
}

double analytic_k0(int groups, double gamma) {
  if (groups < 1) throw ValidationError("analytic_k0: need at least one group");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("analytic_k0: gamma must lie in (0, 1)");
  return normal_quantile(std::pow(gamma, 1.0 / groups));
}

// ---------------------------------------------------------------- intersection test

void IntersectionInput::validate() const {
  if (estimates.empty()) throw ValidationError("intersection test: need at least one group");
  if (se.size() != estimates.size()) throw ValidationError("intersection test: one standard error per group");
  for (std::size_t l = 0; l < se.size(); ++l) {
    if (!std::isfinite(estimates[l])) throw ValidationError("intersection test: non-finite estimate");
    if (!(se[l] > 0.0) || !std::isfinite(se[l]))
      throw ValidationError("intersection test: standard errors must be positive (group " + std::to_string(l + 1) +
                            ")");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("intersection test: alpha must lie in (0, 1)");
  if (draws < 2) throw ValidationError("intersection test: need at least 2 draws");
  gamma_n(n);
}

MaxNormalDraws::MaxNormalDraws(std::size_t groups, std::size_t draws, std::uint64_t seed)
    : xi_(static_cast<Eigen::Index>(draws), static_cast<Eigen::Index>(groups)) {
  const std::size_t blocks = (draws + kDrawBlock - 1) / kDrawBlock;
  parallel_for(blocks, [&](std::size_t b) {
    Rng rng(derive_seed(seed, b));
    std::normal_distribution<double> z;
    const std::size_t end = std::min(draws, (b + 1) * kDrawBlock);
    for (std::size_t r = b * kDrawBlock; r < end; ++r)
      for (std::size_t l = 0; l < groups; ++l) xi_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(l)) = z(rng);
  });
}

double MaxNormalDraws::max_quantile(double prob, const std::vector<std::size_t>& subset) const {
  std::vector<double> maxima(draws());
  for (Eigen::Index r = 0; r < xi_.rows(); ++r) {
    double m = -std::numeric_limits<double>::infinity();
    if (subset.empty()) {
      m = xi_.row(r).maxCoeff();
    } else {
      for (auto l : subset) m = std::max(m, xi_(r, static_cast<Eigen::Index>(l)));
    }
    maxima[static_cast<std::size_t>(r)] = m;
  }
  std::sort(maxima.begin(), maxima.end());
  return quantile_type7(maxima, prob);
}

IntersectionResult intersection_test(const IntersectionInput& in, const MaxNormalDraws& draws) {
  in.validate();
  if (draws.groups() != in.estimates.size()) throw ValidationError("intersection test: draws do not match groups");
  const std::size_t L = in.estimates.size();
  IntersectionResult res;
  res.alpha = in.alpha;
  res.gamma = gamma_n(in.n);
  res.k0 = draws.max_quantile(res.gamma);

  double bound = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < L; ++l) bound = std::min(bound, in.estimates[l] + res.k0 * in.se[l]);
  for (std::size_t l = 0; l < L; ++l)
    if (in.estimates[l] <= bound + 2.0 * res.k0 * in.se[l]) res.selected.push_back(l);

  res.k = draws.max_quantile(1.0 - in.alpha, res.selected);
  res.statistic = std::numeric_limits<double>::infinity();
  for (auto l : res.selected) res.statistic = std::min(res.statistic, in.estimates[l] + res.k * in.se[l]);
  res.rejected = res.statistic < 0.0;

  res.ci_lower = std::numeric_limits<double>::infinity();
  res.ci_upper = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < L; ++l) {
    res.ci_lower = std::min(res.ci_lower, in.estimates[l] + res.k * in.se[l]);
    res.ci_upper = std::max(res.ci_upper, in.estimates[l] - res.k * in.se[l]);
  }
  if (res.ci_upper < res.ci_lower) {
    res.ci_upper = res.ci_lower;
    res.ci_clamped = true;
  }
  return res;
}

IntersectionResult intersection_test(const IntersectionInput& input) {
  input.validate();
  return intersection_test(input, MaxNormalDraws(input.estimates.size(), input.draws, input.seed));
}

std::vector<IntersectionResult> intersection_test(const IntersectionInput& input, const std::vector<double>& alphas) {
  input.validate();
  const MaxNormalDraws draws(input.estimates.size(), input.draws, input.seed);
  std::vector<IntersectionResult> out;
  for (double a : alphas) {
    IntersectionInput in = input;
    in.alpha = a;
    out.push_back(intersection_test(in, draws));
  }
  return out;
}

// ---------------------------------------------------------------- delta method

double quad_statistic(const ProbQuad& quad, Statistic kind) {
  switch (kind) {
    case Statistic::Covariance: return covariance_from_quad(quad);
    case Statistic::NaiveCorrelation: return correlation_from_quad(quad);
    default: throw ValidationError("quad statistic: use covariance or correlation");
  }
}

std::array<double, 4> statistic_gradient(const ProbQuad& quad, Statistic kind) {
  const double p = quad.p(), q = quad.q();
  const std::array<double, 4> dc{0.0, -p, -q, 1.0 - p - q};
  if (kind == Statistic::Covariance) return dc;
  if (kind != Statistic::NaiveCorrelation) throw ValidationError("delta method: use covariance or correlation");
  if (degenerate_marginals(quad)) throw NumericalError("delta method: degenerate marginal");
  const double s = std::sqrt(p * (1.0 - p) * q * (1.0 - q));
  const double rho = covariance_from_quad(quad) / s;
  const double ap = (1.0 - 2.0 * p) / (2.0 * p * (1.0 - p));
  const double aq = (1.0 - 2.0 * q) / (2.0 * q * (1.0 - q));
  const std::array<double, 4> dp{0.0, 0.0, 1.0, 1.0};
  const std::array<double, 4> dq{0.0, 1.0, 0.0, 1.0};
  std::array<double, 4> g{};
  for (int k = 0; k < 4; ++k) g[k] = dc[k] / s - rho * (ap * dp[k] + aq * dq[k]);
  return g;
}

double delta_method_se(const ProbQuad& quad, const Eigen::Matrix4d& sigma, Statistic kind) {
  const auto g = statistic_gradient(quad, kind);
  const Eigen::Vector4d gv(g[0], g[1], g[2], g[3]);
  return std::sqrt(std::max(0.0, gv.dot(sigma * gv)));
}

// ---------------------------------------------------------------- sorted groups

void SortedGroupsConfig::validate() const {
  if (groups < 2) throw ValidationError("sorted groups: need at least 2 groups");
  if (splits < 1) throw ValidationError("sorted groups: need at least 1 split");
  if (!(main_fraction > 0.0 && main_fraction < 1.0))
    throw ValidationError("sorted groups: main fraction must lie in (0, 1)");
  if (statistic == Statistic::DebiasedCorrelation)
    throw ValidationError("sorted groups: statistic must be covariance or correlation");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ValidationError("sorted groups: validation fraction must lie in (0, 1)");
  if (max_redraws < 0) throw ValidationError("sorted groups: max_redraws must be >= 0");
}

SortedSplit sorted_groups_evaluate(const Dataset& main, const std::vector<Group>& groups,
                                   std::span<const double> predicted, Statistic kind) {
  SortedSplit s;
  for (const auto& g : groups) {
    double sw = 0.0, spred = 0.0;
    std::array<double, 4> m{};
    for (auto i : g.indices) {
      const auto& rec = main[i];
      sw += rec.w;
      spred += rec.w * predicted[i];
      m[static_cast<std::size_t>(rec.outcome_class())] += rec.w;
    }
    if (g.indices.empty() || !(sw > 0.0)) throw ValidationError("sorted groups: empty group");
    for (double& v : m) v /= sw;
    Eigen::Matrix4d sigma = Eigen::Matrix4d::Zero();
    for (auto i : g.indices) {
      const auto& rec = main[i];
      Eigen::Vector4d e(-m[0], -m[1], -m[2], -m[3]);
      e(rec.outcome_class()) += 1.0;
      sigma += rec.w * rec.w * e * e.transpose();
    }
    sigma /= sw * sw;
    const auto quad = ProbQuad::from_array(m);
    s.group_quads.push_back(quad);
    s.predicted_mean.push_back(spred / sw);
    s.group_statistic.push_back(quad_statistic(quad, kind));
    s.group_se.push_back(delta_method_se(quad, sigma, kind));
    s.group_sizes.push_back(g.indices.size());
  }
  s.first_group = groups.front().indices;
  s.statistic = s.group_statistic.front();
  s.se = s.group_se.front();
  if (s.se > 0.0)
    s.t = s.statistic / s.se;
  else
    s.t = s.statistic == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), s.statistic);
  s.p_value = normal_cdf(s.t);
  s.ci_lower = s.statistic - kZ975 * s.se;
  s.ci_upper = s.statistic + kZ975 * s.se;
  return s;
}

namespace {

ClassifierModel fit_auxiliary(const Dataset& d, const std::vector<std::size_t>& aux_idx, const SortedGroupsConfig& cfg,
                              std::uint64_t seed, LearnerConfig& chosen) {
  const Dataset aux = d.subset(aux_idx);
  chosen = cfg.learner.with_seed(derive_seed(seed, 1));
  if (cfg.learner.kind == LearnerKind::Network) {
    if (cfg.hyperopt) {
      NetworkGrid grid = cfg.network_grid;
      grid.base.seed = chosen.seed();
      SplitPlan plan = cfg.network_plan;
      plan.seed = derive_seed(seed, 2);
      const auto rep = hyperopt_network(aux, grid, plan);
      chosen = rep.selected_config();
      const auto parts = split(aux, plan);
      return train_network(parts.train, parts.validation, chosen.network);
    }
    std::vector<std::size_t> local(aux.size());
    for (std::size_t i = 0; i < local.size(); ++i) local[i] = i;
    const auto [fit_idx, val_idx] = holdout(local, cfg.validation_fraction, derive_seed(seed, 2));
    return train_network(aux.subset(fit_idx), aux.subset(val_idx), chosen.network);
  }
  if (cfg.hyperopt) {
    TreeGrid grid = cfg.tree_grid;
    grid.kind = cfg.learner.kind;
    const auto rep = hyperopt_trees(aux, grid, chosen.seed());
    chosen = rep.selected_config();
  }
  return train_learner(aux, aux, chosen);
}

}  // namespace

SortedGroupsResult sorted_groups_run(const Dataset& d, const SortedGroupsConfig& cfg) {
  cfg.validate();
  const std::size_t n = d.size();
  const auto n_main = static_cast<std::size_t>(std::floor(cfg.main_fraction * static_cast<double>(n)));
  if (n_main < static_cast<std::size_t>(cfg.groups) || n - n_main < 2)
    throw ValidationError("sorted groups: dataset too small for the main/auxiliary split");

  SortedGroupsResult out;
  out.splits.resize(static_cast<std::size_t>(cfg.splits));
  parallel_for(out.splits.size(), [&](std::size_t s) {
    const std::uint64_t split_seed = derive_seed(cfg.seed, s);
    for (int attempt = 0; attempt <= cfg.max_redraws; ++attempt) {
      const std::uint64_t seed = derive_seed(split_seed, static_cast<std::uint64_t>(attempt));
      const auto order = shuffled_indices(n, seed);
      std::vector<std::size_t> main_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_main));
      std::vector<std::size_t> aux_idx(order.begin() + static_cast<std::ptrdiff_t>(n_main), order.end());
      std::sort(main_idx.begin(), main_idx.end());
      std::sort(aux_idx.begin(), aux_idx.end());

      LearnerConfig chosen;
      const auto model = fit_auxiliary(d, aux_idx, cfg, seed, chosen);
      const Dataset main = d.subset(main_idx);
      const auto stats = per_obs_stats(model.predict_quads(main));
      std::vector<double> predicted(main.size());
      for (std::size_t i = 0; i < main.size(); ++i) {
        const double v = cfg.statistic == Statistic::Covariance ? stats[i].covariance : stats[i].correlation;
        predicted[i] = std::isfinite(v) ? v : 0.0;
      }
      try {
        GroupScheme scheme;
        scheme.kind = GroupScheme::Kind::ByPredictedStatistic;
        scheme.statistic = predicted;
        scheme.groups = cfg.groups;
        auto result = sorted_groups_evaluate(main, partition(main, scheme), predicted, cfg.statistic);
        for (auto& i : result.first_group) i = main_idx[i];
        result.seed = seed;
        result.redraws = attempt;
        result.learner = chosen;
        out.splits[s] = std::move(result);
        return;
      } catch (const std::exception&) {
        // empty or degenerate group: draw a new split
        if (attempt == cfg.max_redraws)
          throw NumericalError("sorted groups: split " + std::to_string(s + 1) + " failed after " +
                               std::to_string(cfg.max_redraws) + " redraws");
      }
    }
  });

  auto collect = [&](auto field) {
    std::vector<double> v;
    for (const auto& sp : out.splits) v.push_back(field(sp));
    return median(std::move(v));
  };
  out.statistic = collect([](const SortedSplit& s) { return s.statistic; });
  out.se = collect([](const SortedSplit& s) { return s.se; });
  out.t = collect([](const SortedSplit& s) { return s.t; });
  out.p_value = collect([](const SortedSplit& s) { return s.p_value; });
  out.ci_lower = collect([](const SortedSplit& s) { return s.ci_lower; });
  out.ci_upper = collect([](const SortedSplit& s) { return s.ci_upper; });
  for (int g = 0; g < cfg.groups; ++g)
    out.group_statistic.push_back(collect([g](const SortedSplit& s) { return s.group_statistic[static_cast<std::size_t>(g)]; }));
  return out;
}

// ---------------------------------------------------------------- Monte Carlo

RejectionReport mc_rejection_rate(std::size_t reps, std::uint64_t seed,
                                  const std::function<bool(std::uint64_t)>& trial) {
  if (reps < 1) throw ValidationError("Monte Carlo: need at least one replication");
  std::vector<char> rejected(reps, 0);
  parallel_for(reps, [&](std::size_t r) { rejected[r] = trial(derive_seed(seed, r)) ? 1 : 0; });
  RejectionReport rep;
  rep.reps = reps;
  rep.rejections = static_cast<std::size_t>(std::count(rejected.begin(), rejected.end(), 1));
  rep.rate = static_cast<double>(rep.rejections) / static_cast<double>(reps);
  rep.se = std::sqrt(rep.rate * (1.0 - rep.rate) / static_cast<double>(reps));
  return rep;
}

RejectionReport mc_size_power(const std::vector<double>& means_in_sigma, double sigma, std::size_t per_group,
                              double alpha, std::size_t reps, std::size_t draws, std::uint64_t seed) {
  if (means_in_sigma.empty()) throw ValidationError("Monte Carlo: need at least one group");
  if (!(sigma > 0.0)) throw ValidationError("Monte Carlo: sigma must be positive");
  if (per_group < 2) throw ValidationError("Monte Carlo: need at least 2 observations per group");
  const std::size_t L = means_in_sigma.size();
  return mc_rejection_rate(reps, seed, [&](std::uint64_t rep_seed) {
    Rng rng(rep_seed);
    std::normal_distribution<double> z;
    std::vector<double> values(L * per_group), weights(L * per_group, 1.0);
    IntersectionInput in;
    in.n = L * per_group;
    in.alpha = alpha;
    in.draws = draws;
    in.seed = derive_seed(rep_seed, 1);
    for (std::size_t l = 0; l < L; ++l) {
      std::vector<std::size_t> idx(per_group);
      for (std::size_t i = 0; i < per_group; ++i) {
        idx[i] = l * per_group + i;
        values[idx[i]] = sigma * (means_in_sigma[l] + z(rng));
      }
      const auto g = group_mean(values, weights, idx);
      in.estimates.push_back(g.estimate);
      in.se.push_back(g.se);
    }
    return intersection_test(in).rejected;
  });
}

}  // namespace pcp
