#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "pcp/error.hpp"
#include "pcp/inference.hpp"
#include "pcp/synth.hpp"

using namespace pcp;
using testing::make_schema;

TEST_CASE("gamma_n and analytic k0") {
  CHECK(gamma_n(6333) == doctest::Approx(0.98858).epsilon(1e-5));
  CHECK(analytic_k0(1, 0.95) == doctest::Approx(1.6449).epsilon(1e-4));
  const double g = gamma_n(6333);
  CHECK(std::abs(analytic_k0(12, g) - 3.10) < 0.01);
  CHECK(std::abs(analytic_k0(2, g) - 2.53) < 0.01);
  CHECK(std::abs(analytic_k0(4, g) - 2.76) < 0.01);
  CHECK_THROWS_AS(analytic_k0(0, 0.9), ValidationError);
}

TEST_CASE("max-normal draws: quantiles and subsets") {
  const MaxNormalDraws draws(3, 100000, 5);
  CHECK(draws.groups() == 3);
  CHECK(draws.draws() == 100000);
  CHECK(std::abs(draws.max_quantile(0.95, {1}) - 1.6449) < 0.02);
  CHECK(std::abs(draws.max_quantile(0.95) - analytic_k0(3, 0.95)) < 0.03);
  // deterministic given the seed
  const MaxNormalDraws again(3, 100000, 5);
  CHECK(again.max_quantile(0.9) == draws.max_quantile(0.9));
}

TEST_CASE("single group reduces to a one-sided z rule") {
  IntersectionInput in;
  in.estimates = {-0.02};
  in.se = {0.01};
  in.n = 6333;
  in.seed = 3;
  const auto r = intersection_test(in);
  CHECK(std::abs(r.k - 1.645) < 0.02);
  CHECK(r.selected == std::vector<std::size_t>{0});
  CHECK(r.statistic == doctest::Approx(-0.02 + r.k * 0.01));
  CHECK(r.rejected == (-0.02 + r.k * 0.01 < 0));
  CHECK(r.rejected);
  in.estimates = {-0.015};
  CHECK_FALSE(intersection_test(in).rejected);
}

TEST_CASE("deep inside the null nothing is rejected") {
  IntersectionInput in;
  in.estimates.assign(6, 1.0);
  in.se.assign(6, 0.01);
  in.n = 5000;
  for (const auto& r : intersection_test(in, std::vector<double>{0.01, 0.05, 0.10})) CHECK_FALSE(r.rejected);
}

TEST_CASE("selection rule, statistic and interval") {
  IntersectionInput in;
  in.estimates = {-0.01, 0.5, 0.02, 0.0};
  in.se = {0.01, 0.01, 0.02, 0.01};
  in.n = 6333;
  in.draws = 50000;
  in.seed = 11;
  const auto r = intersection_test(in);
  // group 2 sits far above the others and is screened out
  CHECK(r.selected == std::vector<std::size_t>{0, 2, 3});
  double lo = 1e9, hi = -1e9, stat = 1e9;
  for (std::size_t l = 0; l < 4; ++l) {
    lo = std::min(lo, in.estimates[l] + r.k * in.se[l]);
    hi = std::max(hi, in.estimates[l] - r.k * in.se[l]);
  }
  for (auto l : r.selected) stat = std::min(stat, in.estimates[l] + r.k * in.se[l]);
  CHECK(r.statistic == doctest::Approx(stat));
  CHECK(r.ci_lower == doctest::Approx(lo));
  CHECK(r.ci_upper == doctest::Approx(std::max(hi, lo)));
  CHECK(r.ci_upper >= r.ci_lower);
  CHECK(r.k <= r.k0 + 1e-12);
}

TEST_CASE("degenerate interval is clamped and flagged") {
  IntersectionInput in;
  in.estimates = {0.1, 0.11};
  in.se = {0.05, 0.05};
  in.n = 1000;
  const auto r = intersection_test(in);
  CHECK(r.ci_clamped);
  CHECK(r.ci_upper == r.ci_lower);
}

TEST_CASE("input validation") {
  IntersectionInput in;
  in.estimates = {0.1, 0.2};
  in.se = {0.1};
  in.n = 100;
  CHECK_THROWS_AS(intersection_test(in), ValidationError);
  in.se = {0.1, 0.0};
  CHECK_THROWS_AS(intersection_test(in), ValidationError);
  in.se = {0.1, 0.1};
  in.alpha = 1.5;
  CHECK_THROWS_AS(intersection_test(in), ValidationError);
  in.alpha = 0.05;
  in.n = 1;
  CHECK_THROWS_AS(intersection_test(in), ValidationError);
}

TEST_CASE("statistic gradients match finite differences") {
  for (auto q : {ProbQuad{0.25, 0.25, 0.25, 0.25}, ProbQuad{0.5, 0.1, 0.3, 0.1}, ProbQuad{0.58, 0.05, 0.35, 0.02}}) {
    for (auto kind : {Statistic::Covariance, Statistic::NaiveCorrelation}) {
      const auto g = statistic_gradient(q, kind);
      for (int k = 0; k < 4; ++k) {
        auto a = q.as_array(), b = q.as_array();
        const double h = 1e-6;
        a[static_cast<std::size_t>(k)] += h;
        b[static_cast<std::size_t>(k)] -= h;
        const double fd =
            (quad_statistic(ProbQuad::from_array(a), kind) - quad_statistic(ProbQuad::from_array(b), kind)) / (2 * h);
        CHECK(std::abs(fd - g[static_cast<std::size_t>(k)]) < 1e-6);
      }
    }
  }
  CHECK(delta_method_se({0.4, 0.1, 0.3, 0.2}, Eigen::Matrix4d::Zero(), Statistic::Covariance) == 0.0);
  CHECK_THROWS(quad_statistic({0.25, 0.25, 0.25, 0.25}, Statistic::DebiasedCorrelation));
}

TEST_CASE("sorted-groups evaluation on a fixed grouping") {
  const auto s = make_schema({{"x", {1, 2}}});
  std::vector<Record> recs;
  for (int i = 0; i < 400; ++i) recs.push_back({{1 + i % 2}, (i / 2) % 2, (i / 4) % 2, 1.0});
  const Dataset d(s, recs);
  std::vector<Group> groups(2);
  for (std::size_t i = 0; i < 400; ++i) groups[i % 2].indices.push_back(i);
  std::vector<double> predicted(400);
  for (std::size_t i = 0; i < 400; ++i) predicted[i] = i % 2 ? 0.1 : -0.1;
  const auto r = sorted_groups_evaluate(d, groups, predicted, Statistic::Covariance);
  REQUIRE(r.group_quads.size() == 2);
  // outcomes cycle through all four classes evenly in each group
  CHECK(r.group_quads[0].p00 == doctest::Approx(0.25));
  CHECK(r.statistic == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.se > 0.0);
  CHECK(r.p_value == doctest::Approx(0.5));
  CHECK(r.ci_lower == doctest::Approx(-1.959964 * r.se));
  CHECK(r.predicted_mean[0] == doctest::Approx(-0.1));
  CHECK(r.group_sizes == std::vector<std::size_t>{200, 200});
}

TEST_CASE("sorted groups: deterministic run with a fixed learner") {
  auto dgp = SyntheticDGP::blank(make_schema({{"a", {1, 2, 3, 4}}, {"b", {1, 2, 3}}}));
  dgp.coverage_coef << -0.3, 0.8, 1.6, -0.8, 0.4, -0.4;
  dgp.claim_coef << -1.2, 0.2, 0.5, 0.1, 0.6, -0.5;
  dgp.rho_coef << 0.1, -0.1, 0.05, 0.1, 0.0, 0.0;
  dgp.validate();
  const auto sample = sample_dataset(dgp, 3000, 4);
  SortedGroupsConfig cfg;
  cfg.splits = 3;
  cfg.hyperopt = false;
  cfg.learner.network.depth = 0;
  cfg.seed = 8;
  const auto a = sorted_groups_run(sample.data, cfg);
  const auto b = sorted_groups_run(sample.data, cfg);
  REQUIRE(a.splits.size() == 3);
  CHECK(a.statistic == b.statistic);
  CHECK(a.p_value == b.p_value);
  for (const auto& sp : a.splits) {
    CHECK(sp.group_sizes.size() == 4);
    CHECK(std::accumulate(sp.group_sizes.begin(), sp.group_sizes.end(), std::size_t{0}) == 1500);
    // group 1 collects the smallest predicted statistics
    CHECK(sp.predicted_mean[0] <= sp.predicted_mean[3]);
  }
  std::vector<double> st;
  for (const auto& sp : a.splits) st.push_back(sp.statistic);
  std::sort(st.begin(), st.end());
  CHECK(a.statistic == st[1]);

  cfg.splits = 0;
  CHECK_THROWS_AS(sorted_groups_run(sample.data, cfg), ValidationError);
}

TEST_CASE("Monte Carlo rejection rates") {
  const auto r = mc_rejection_rate(200, 1, [](std::uint64_t s) { return s % 4 == 0; });
  CHECK(r.reps == 200);
  CHECK(r.rate == doctest::Approx(static_cast<double>(r.rejections) / 200));
  CHECK(r.se == doctest::Approx(std::sqrt(r.rate * (1 - r.rate) / 200)));

  const auto interior = mc_size_power(std::vector<double>(12, 3.0), 1.0, 200, 0.05, 100, 20000, 3);
  CHECK(interior.rate == 0.0);
}
