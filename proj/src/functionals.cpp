#include "pcp/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "pcp/error.hpp"

namespace pcp {

namespace {

constexpr double kRankTol = 1e-10;

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

std::string to_string(Statistic s) {
  switch (s) {
    case Statistic::Covariance: return "covariance";
    case Statistic::NaiveCorrelation: return "naive_correlation";
    default: return "debiased_correlation";
  }
}

bool degenerate_marginals(const ProbQuad& quad, double tol) {
  const double p = quad.p(), q = quad.q();
  return p <= tol || p >= 1.0 - tol || q <= tol || q >= 1.0 - tol;
}

double covariance_from_quad(const ProbQuad& quad) { return quad.p11 - quad.p() * quad.q(); }

double correlation_from_quad(const ProbQuad& quad) {
  if (degenerate_marginals(quad)) throw NumericalError("correlation: degenerate marginal (p or q at 0 or 1)");
  const double p = quad.p(), q = quad.q();
  return covariance_from_quad(quad) / std::sqrt(p * (1.0 - p) * q * (1.0 - q));
}

GradientRegressors gradient_regressors(const ProbQuad& quad, double rho) {
  if (degenerate_marginals(quad)) throw NumericalError("gradient regressors: degenerate marginal");
  const double p = quad.p(), q = quad.q();
  return {rho * (q - 0.5) / (q * (1.0 - q)), rho * (p - 0.5) / (p * (1.0 - p))};
}

std::vector<PerObsStats> per_obs_stats(std::span<const ProbQuad> quads) {
  std::vector<PerObsStats> out(quads.size());
  for (std::size_t i = 0; i < quads.size(); ++i) {
    auto& s = out[i];
    s.quad = quads[i];
    s.covariance = covariance_from_quad(s.quad);
    s.degenerate = degenerate_marginals(s.quad);
    if (s.degenerate) {
      s.correlation = s.grad1 = s.grad2 = nan();
      continue;
    }
    s.correlation = correlation_from_quad(s.quad);
    const auto g = gradient_regressors(s.quad, s.correlation);
    s.grad1 = g.grad1;
    s.grad2 = g.grad2;
  }
  return out;
}

// ---------------------------------------------------------------- group statistics

GroupEstimate group_mean(std::span<const double> values, std::span<const double> weights,
                         std::span<const std::size_t> indices, std::string label, Statistic kind) {
  GroupEstimate g;
  g.group = std::move(label);
  g.kind = kind;
  g.records = indices.size();
  double sw = 0.0, swv = 0.0, sw2 = 0.0;
  for (auto i : indices) {
    if (!std::isfinite(values[i])) continue;
    sw += weights[i];
    swv += weights[i] * values[i];
    sw2 += weights[i] * weights[i];
    ++g.used;
  }
  if (g.used == 0) throw ValidationError("group mean: group '" + g.group + "' has no usable records");
  g.estimate = swv / sw;
  double num = 0.0;
  for (auto i : indices) {
    if (!std::isfinite(values[i])) continue;
    const double e = values[i] - g.estimate;
    num += weights[i] * weights[i] * e * e;
  }
  g.se = std::sqrt(num) / sw;
  g.effective_size = sw * sw / sw2;
  return g;
}

WlsFit debiasing_regression(std::span<const double> y, std::span<const double> g1, std::span<const double> g2,
                            std::span<const double> w) {
  const auto n = static_cast<Eigen::Index>(y.size());
  if (n == 0) throw ValidationError("debiasing: no records");
  Eigen::MatrixXd full(n, 3);
  Eigen::VectorXd yv(n), wv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    full(i, 0) = 1.0;
    full(i, 1) = g1[k];
    full(i, 2) = g2[k];
    yv(i) = y[k];
    wv(i) = w[k];
  }
  const Eigen::VectorXd sw = wv.cwiseSqrt();

  for (int kept = 2; kept >= 0; --kept) {
    const Eigen::MatrixXd x = full.leftCols(kept + 1);
    const Eigen::MatrixXd xs = sw.asDiagonal() * x;
    if (kept > 0) {
      if (n < kept + 1) continue;
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(xs);
      const auto& s = svd.singularValues();
      if (!(s(s.size() - 1) > kRankTol * s(0))) continue;
    }
    const Eigen::MatrixXd xtwx = xs.transpose() * xs;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(xtwx);
    WlsFit fit;
    fit.kept = kept;
    fit.coef = ldlt.solve(x.transpose() * wv.cwiseProduct(yv));
    fit.residuals = yv - x * fit.coef;
    // sandwich: (X'WX)^-1 [sum w^2 e^2 x x'] (X'WX)^-1
    const Eigen::VectorXd u = wv.cwiseProduct(fit.residuals);
    const Eigen::MatrixXd xu = u.asDiagonal() * x;
    const Eigen::MatrixXd meat = xu.transpose() * xu;
    const Eigen::MatrixXd bread = ldlt.solve(Eigen::MatrixXd::Identity(kept + 1, kept + 1));
    const Eigen::MatrixXd v = bread * meat * bread;
    fit.intercept_se = std::sqrt(std::max(v(0, 0), 0.0));
    if (!fit.coef.allFinite()) throw NumericalError("debiasing: non-finite regression coefficients");
    return fit;
  }
  throw NumericalError("debiasing: rank-deficient design");
}

GroupEstimate debiased_group_correlation(std::span<const PerObsStats> stats, std::span<const double> weights,
                                         std::span<const std::size_t> indices, std::string label) {
  GroupEstimate g;
  g.group = std::move(label);
  g.kind = Statistic::DebiasedCorrelation;
  g.records = indices.size();
  std::vector<double> y, g1, g2, w;
  for (auto i : indices) {
    if (stats[i].degenerate) continue;
    y.push_back(stats[i].correlation);
    g1.push_back(stats[i].grad1);
    g2.push_back(stats[i].grad2);
    w.push_back(weights[i]);
  }
  g.used = y.size();
  if (g.used < 3)
    throw ValidationError("debiased correlation: group '" + g.group + "' has fewer than 3 usable records");
  const auto fit = debiasing_regression(y, g1, g2, w);
  g.estimate = fit.coef(0);
  g.se = fit.intercept_se;
  g.regressors = fit.kept;
  double sw = 0.0, sw2 = 0.0;
  for (double v : w) {
    sw += v;
    sw2 += v * v;
  }
  g.effective_size = sw * sw / sw2;
  return g;
}

std::vector<GroupEstimate> group_estimates(std::span<const PerObsStats> stats, std::span<const double> weights,
                                           const std::vector<Group>& groups, Statistic kind) {
  std::vector<double> values(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i)
    values[i] = kind == Statistic::Covariance ? stats[i].covariance : stats[i].correlation;
  std::vector<GroupEstimate> out;
  for (const auto& grp : groups) {
    if (kind == Statistic::DebiasedCorrelation)
      out.push_back(debiased_group_correlation(stats, weights, grp.indices, grp.label));
    else
      out.push_back(group_mean(values, weights, grp.indices, grp.label, kind));
  }
  return out;
}

FunctionSummary summarize(std::span<const double> values, std::span<const double> weights) {
  FunctionSummary s;
  double sw = 0.0, swv = 0.0;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -s.min;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) continue;
    sw += weights[i];
    swv += weights[i] * values[i];
    s.min = std::min(s.min, values[i]);
    s.max = std::max(s.max, values[i]);
    ++s.count;
  }
  if (s.count == 0) throw ValidationError("summarize: no finite values");
  s.mean = swv / sw;
  double ss = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) continue;
    ss += weights[i] * (values[i] - s.mean) * (values[i] - s.mean);
  }
  s.dispersion = std::sqrt(ss / sw);
  return s;
}

std::vector<ProbQuad> empirical_quads(const Dataset& d) {
  std::map<std::vector<int>, std::array<double, 4>> cells;
  for (const auto& rec : d.records()) cells[rec.covariates][static_cast<std::size_t>(rec.outcome_class())] += rec.w;
  std::vector<ProbQuad> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& a = cells.at(d[i].covariates);
    const double total = a[0] + a[1] + a[2] + a[3];
    out[i] = {a[0] / total, a[1] / total, a[2] / total, a[3] / total};
  }
  return out;
}

// ---------------------------------------------------------------- orthogonality

namespace {

ProbQuad shift_marginals(const ProbQuad& q0, double dp, double dq) {
  // move p and q, keep the covariance fixed
  const double p = q0.p() + dp, q = q0.q() + dq;
  const double p11 = p * q + covariance_from_quad(q0);
  return {1.0 - p - q + p11, q - p11, p - p11, p11};
}

ProbQuad shift_quad(const ProbQuad& q0, const std::array<double, 4>& d, double eps) {
  return {q0.p00 + eps * d[0], q0.p01 + eps * d[1], q0.p10 + eps * d[2], q0.p11 + eps * d[3]};
}

std::array<double, 4> random_simplex_direction(Rng& rng) {
  std::normal_distribution<double> z;
  std::array<double, 4> d;
  double mean = 0.0;
  for (auto& v : d) {
    v = z(rng);
    mean += v / 4.0;
  }
  double norm = 0.0;
  for (auto& v : d) {
    v -= mean;
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : d) v /= norm;
  return d;
}

}  // namespace

OrthogonalityReport orthogonality_check(const SyntheticDGP& dgp, std::size_t n, std::uint64_t seed, double epsilon,
                                        int directions) {
  if (!(epsilon > 0.0)) throw ValidationError("orthogonality: epsilon must be positive");
  if (directions < 1) throw ValidationError("orthogonality: need at least one direction");
  const auto sample = sample_dataset(dgp, n, seed);
  const auto& eta0 = sample.truth.record_quads;
  const auto w = sample.data.weights();
  double sw = 0.0;
  for (double v : w) sw += v;

  std::vector<double> g1(n), g2(n), rho0(n);
  for (std::size_t i = 0; i < n; ++i) {
    rho0[i] = correlation_from_quad(eta0[i]);
    const auto g = gradient_regressors(eta0[i], rho0[i]);
    g1[i] = g.grad1;
    g2[i] = g.grad2;
  }

  // Outcome terms replaced by conditional expectations given x:
  // E[(c - p)(r - q) | x] = C0 + (p0 - p)(q0 - q).
  auto covariance_eq = [&](const std::vector<ProbQuad>& eta) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += w[i] * (covariance_from_quad(eta0[i]) + (eta0[i].p() - eta[i].p()) * (eta0[i].q() - eta[i].q()));
    return s / sw;
  };
  auto naive_eq = [&](const std::vector<ProbQuad>& eta) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += w[i] * correlation_from_quad(eta[i]);
    return s / sw;
  };
  // projection defined at the truth: regressors stay at eta0
  auto debiased_eq = [&](const std::vector<ProbQuad>& eta) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = correlation_from_quad(eta[i]);
    return debiasing_regression(y, g1, g2, w).coef(0);
  };

  OrthogonalityReport rep;
  Rng rng(derive_seed(seed, 7));
  std::normal_distribution<double> z;
  std::vector<ProbQuad> plus(n), minus(n);
  auto derivative = [&](auto&& eq) { return std::abs(eq(plus) - eq(minus)) / (2.0 * epsilon); };

  for (int k = 0; k < directions; ++k) {
    // common marginal direction with the covariance held fixed
    double dp = z(rng), dq = z(rng);
    const double norm = std::hypot(dp, dq);
    dp /= norm;
    dq /= norm;
    for (std::size_t i = 0; i < n; ++i) {
      plus[i] = shift_marginals(eta0[i], epsilon * dp, epsilon * dq);
      minus[i] = shift_marginals(eta0[i], -epsilon * dp, -epsilon * dq);
    }
    rep.covariance = std::max(rep.covariance, derivative(covariance_eq));
    rep.naive_correlation = std::max(rep.naive_correlation, derivative(naive_eq));
    rep.debiased_correlation = std::max(rep.debiased_correlation, derivative(debiased_eq));

    // unrestricted per-record directions on the simplex
    for (std::size_t i = 0; i < n; ++i) {
      const auto d = random_simplex_direction(rng);
      plus[i] = shift_quad(eta0[i], d, epsilon);
      minus[i] = shift_quad(eta0[i], d, -epsilon);
    }
    rep.covariance = std::max(rep.covariance, derivative(covariance_eq));
    rep.naive_correlation = std::max(rep.naive_correlation, derivative(naive_eq));
  }
  rep.directions = directions;
  return rep;
}

}  // namespace pcp
