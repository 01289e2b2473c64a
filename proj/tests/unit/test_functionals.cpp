#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "pcp/error.hpp"
#include "pcp/functionals.hpp"
#include "pcp/synth.hpp"

using namespace pcp;
using testing::make_schema;

namespace {

const ProbQuad kTable1{3696.0 / 6333, 302.0 / 6333, 2203.0 / 6333, 132.0 / 6333};

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

TEST_CASE("covariance and correlation of a quad") {
  CHECK(covariance_from_quad({0.25, 0.25, 0.25, 0.25}) == 0.0);
  CHECK(covariance_from_quad({0.5, 0, 0, 0.5}) == doctest::Approx(0.25));
  CHECK(correlation_from_quad({0.25, 0.25, 0.25, 0.25}) == 0.0);
  CHECK(correlation_from_quad({0.5, 0, 0, 0.5}) == doctest::Approx(1.0));
  CHECK(covariance_from_quad(kTable1) == doctest::Approx(-0.004425).epsilon(1e-3));
  CHECK(correlation_from_quad(kTable1) == doctest::Approx(-0.0363).epsilon(2e-3));
  CHECK(kTable1.p() == doctest::Approx(0.36870).epsilon(1e-4));
  CHECK(kTable1.q() == doctest::Approx(0.06853).epsilon(1e-4));
  CHECK(degenerate_marginals({0.5, 0.5, 0.0, 0.0}));
  CHECK_THROWS_AS(correlation_from_quad({0.5, 0.5, 0.0, 0.0}), NumericalError);
}

TEST_CASE("gradient regressors") {
  const auto half = gradient_regressors({0.25, 0.25, 0.25, 0.25}, 0.3);
  CHECK(half.grad1 == 0.0);
  CHECK(half.grad2 == 0.0);
  // q = 0.25, p = 0.5
  const auto g = gradient_regressors({0.375, 0.125, 0.375, 0.125}, 0.1);
  CHECK(g.grad1 == doctest::Approx(-0.133333).epsilon(1e-5));
  CHECK(g.grad2 == 0.0);
  const auto z = gradient_regressors(kTable1, 0.0);
  CHECK(z.grad1 == 0.0);
  CHECK(z.grad2 == 0.0);
}

TEST_CASE("per-observation statistics") {
  const std::vector<ProbQuad> quads(5, kTable1);
  const auto s = per_obs_stats(quads);
  for (const auto& o : s) {
    CHECK(o.covariance == covariance_from_quad(kTable1));
    CHECK(o.correlation == correlation_from_quad(kTable1));
    CHECK_FALSE(o.degenerate);
  }
  const auto d = per_obs_stats(std::vector<ProbQuad>{{0.5, 0.5, 0.0, 0.0}, {0.25, 0.25, 0.25, 0.25}});
  CHECK(d[0].degenerate);
  CHECK(std::isnan(d[0].correlation));
  CHECK(d[1].covariance == 0.0);
  CHECK(d[1].correlation == 0.0);
}

TEST_CASE("group mean") {
  const std::vector<double> v(6, 0.3), w{1, 0.5, 0.2, 1, 1, 0.7};
  const auto idx = iota_n(6);
  const auto g = group_mean(v, w, idx);
  CHECK(g.estimate == doctest::Approx(0.3));
  CHECK(g.se == doctest::Approx(0.0));

  const std::vector<double> v2{0, 1}, w2{1, 1};
  const auto h = group_mean(v2, w2, iota_n(2));
  CHECK(h.estimate == 0.5);
  CHECK(h.se == doctest::Approx(std::sqrt(0.125)));
  CHECK(h.effective_size == doctest::Approx(2.0));

  const std::vector<double> v3{1.0, std::numeric_limits<double>::quiet_NaN(), 3.0}, w3{1, 1, 1};
  const auto k = group_mean(v3, w3, iota_n(3));
  CHECK(k.estimate == 2.0);
  CHECK(k.used == 2);
  CHECK(k.records == 3);
}

TEST_CASE("debiasing regression: vanishing regressors give the weighted mean") {
  std::vector<PerObsStats> stats(4);
  const std::vector<double> rho{0.1, -0.2, 0.3, 0.05}, w{1.0, 0.5, 0.25, 1.0};
  for (std::size_t i = 0; i < 4; ++i) {
    stats[i].quad = {0.25, 0.25, 0.25, 0.25};
    stats[i].correlation = rho[i];
  }
  const auto g = debiased_group_correlation(stats, w, iota_n(4));
  CHECK(g.estimate == doctest::Approx(weighted_mean(rho, w)).epsilon(1e-12));
  CHECK(g.regressors == 0);
}

TEST_CASE("debiasing regression: residuals orthogonal to the regressors") {
  Rng rng(3);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> y, g1, g2, w;
  for (int i = 0; i < 300; ++i) {
    g1.push_back(z(rng));
    g2.push_back(z(rng));
    y.push_back(0.2 + 0.5 * g1.back() - 0.3 * g2.back() + 0.1 * z(rng));
    w.push_back(u(rng));
  }
  const auto fit = debiasing_regression(y, g1, g2, w);
  CHECK(fit.kept == 2);
  double s0 = 0, s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    s0 += w[i] * fit.residuals(static_cast<Eigen::Index>(i));
    s1 += w[i] * fit.residuals(static_cast<Eigen::Index>(i)) * g1[i];
    s2 += w[i] * fit.residuals(static_cast<Eigen::Index>(i)) * g2[i];
  }
  CHECK(std::abs(s0) < 1e-8);
  CHECK(std::abs(s1) < 1e-8);
  CHECK(std::abs(s2) < 1e-8);
  CHECK(fit.coef(0) == doctest::Approx(0.2).epsilon(0.05));
  CHECK(fit.intercept_se > 0.0);

  // collinear second regressor is dropped
  const auto dup = debiasing_regression(y, g1, g1, w);
  CHECK(dup.kept == 1);
}

TEST_CASE("group estimates converge to the population truth at n = 1e5") {
  // p and q vary with b inside each group; rho* depends on the grouping feature only
  auto dgp = SyntheticDGP::blank(make_schema({{"a", {1, 2, 3}}, {"b", {1, 2}}}));
  dgp.coverage_coef << -0.3, 0.6, -0.4, 0.5;
  dgp.claim_coef << -1.0, 0.3, 0.7, -0.6;
  dgp.rho_coef << 0.1, -0.15, 0.05, 0.0;
  dgp.validate();
  const auto s = sample_dataset(dgp, 100000, 12);
  const auto stats = per_obs_stats(s.truth.record_quads);
  const auto w = s.data.weights();
  const auto groups = partition(s.data, {GroupScheme::Kind::ByModality, "a"});
  const auto cov = group_estimates(stats, w, groups, Statistic::Covariance);
  const auto deb = group_estimates(stats, w, groups, Statistic::DebiasedCorrelation);
  REQUIRE(cov.size() == 3);
  for (int a = 1; a <= 3; ++a) {
    const auto g = static_cast<std::size_t>(a - 1);
    // b is uniform and the weight law ignores covariates
    double tc = 0, tr = 0;
    for (int b = 1; b <= 2; ++b) {
      const std::vector<int> cell{a, b};
      tc += 0.5 * true_cell(dgp, cell).covariance;
      tr += 0.5 * true_cell(dgp, cell).correlation;
    }
    CHECK(cov[g].se > 0.0);
    CHECK(std::abs(cov[g].estimate - tc) <= 3 * cov[g].se);
    CHECK(std::abs(deb[g].estimate - tr) <= 3 * deb[g].se + 1e-9);
    CHECK(deb[g].kind == Statistic::DebiasedCorrelation);
  }
}

TEST_CASE("summaries") {
  const std::vector<double> v(5, 0.7), w{1, 2, 3, 4, 5};
  const auto a = summarize(v, w);
  CHECK(a.mean == doctest::Approx(0.7));
  CHECK(a.dispersion == doctest::Approx(0.0));
  CHECK(a.min == 0.7);
  CHECK(a.max == 0.7);

  const std::vector<double> v2{-1, 1}, w2{1, 1};
  const auto b = summarize(v2, w2);
  CHECK(b.mean == 0.0);
  CHECK(b.min == -1.0);
  CHECK(b.max == 1.0);

  const std::vector<double> v3{0.1, 0.5, -0.3, 0.9}, w3{0.2, 0.4, 0.6, 0.8}, w4{2, 4, 6, 8};
  CHECK(summarize(v3, w3).dispersion == doctest::Approx(summarize(v3, w4).dispersion).epsilon(1e-12));
}

TEST_CASE("empirical quads are cell frequencies") {
  const auto schema = make_schema({{"x", {1, 2}}});
  const Dataset d(schema, {{{1}, 0, 0, 1.0}, {{1}, 1, 1, 1.0}, {{2}, 1, 0, 0.5}, {{2}, 1, 1, 1.0}});
  const auto q = empirical_quads(d);
  CHECK(q[0].p00 == doctest::Approx(0.5));
  CHECK(q[1].p11 == doctest::Approx(0.5));
  CHECK(q[2].p10 == doctest::Approx(1.0 / 3));
  CHECK(q[3].p11 == doctest::Approx(2.0 / 3));
}

TEST_CASE("orthogonality check, small instance") {
  auto dgp = SyntheticDGP::blank(make_schema({{"a", {1, 2, 3}}, {"b", {1, 2}}}));
  dgp.coverage_coef << -0.3, 0.8, -0.6, 0.4;
  dgp.claim_coef << -1.1, 0.5, 0.9, -0.3;
  dgp.rho_coef << 0.15, -0.2, 0.1, 0.05;
  dgp.validate();
  const auto r = orthogonality_check(dgp, 5000, 3, 1e-4, 8);
  CHECK(r.covariance <= 1e-6);
  CHECK(r.naive_correlation > 1e-3);
  CHECK(r.debiased_correlation <= 1e-4);
}
