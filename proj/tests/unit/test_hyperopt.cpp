#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "pcp/error.hpp"
#include "pcp/hyperopt.hpp"
#include "pcp/synth.hpp"

using namespace pcp;
using testing::make_schema;

namespace {

SyntheticDGP informative_dgp() {
  auto dgp = SyntheticDGP::blank(make_schema({{"a", {1, 2, 3, 4}}, {"noise", {1, 2, 3}}}));
  dgp.coverage_coef << -0.5, 1.5, 3.0, -1.5, 0.0, 0.0;
  dgp.claim_coef << -1.0, 1.0, -1.0, 0.5, 0.0, 0.0;
  dgp.validate();
  return dgp;
}

double test_loss_se(const ClassifierModel& m, const Dataset& test) {
  const auto p = m.predict_proba(test);
  std::vector<double> l;
  for (std::size_t i = 0; i < test.size(); ++i)
    l.push_back(-std::log(p(static_cast<Eigen::Index>(i), test[i].outcome_class())));
  const double mean = std::accumulate(l.begin(), l.end(), 0.0) / static_cast<double>(l.size());
  double ss = 0;
  for (double v : l) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(l.size() - 1) / static_cast<double>(l.size()));
}

}  // namespace

TEST_CASE("network grid enumerates 108 candidates in depth-width-dropout order") {
  const NetworkGrid g;
  const auto c = g.candidates();
  CHECK(c.size() == 108);
  CHECK(c.front().depth == 0);
  CHECK(c.back().depth == 3);
  CHECK(c[1].dropout == doctest::Approx(0.1));
  CHECK(c[9].width == 16);
  const auto back = NetworkGrid::from_json(g.to_json());
  CHECK(back.candidates().size() == 108);
  CHECK_THROWS_AS(NetworkGrid::from_json({{"depth", {1}}}), ValidationError);
}

TEST_CASE("singleton grids select their only candidate") {
  const auto s = sample_dataset(informative_dgp(), 600, 1);
  NetworkGrid g;
  g.depths = {1};
  g.widths = {8};
  g.dropouts = {0.2};
  g.base.max_epochs = 20;
  const auto r = hyperopt_network(s.data, g, SplitPlan{}, Target::Joint);
  REQUIRE(r.candidates.size() == 1);
  CHECK(r.selected == 0);
  CHECK(r.selected_config().network.width == 8);

  TreeGrid t = TreeGrid::default_forest();
  t.depths = {5};
  t.min_leaves = {10};
  t.max_features = {5};
  t.ensemble_size = 10;
  t.cv_folds = 0;
  const auto rf = hyperopt_trees(s.data, t, 3);
  REQUIRE(rf.candidates.size() == 1);
  CHECK(rf.selected == 0);
  CHECK(std::isnan(rf.candidates[0].validation_loss));
}

TEST_CASE("intercept-only data: D=0 is selected or ties the minimum") {
  const auto s = sample_dataset(SyntheticDGP::blank(make_schema({{"a", {1, 2, 3}}, {"b", {1, 2}}})), 20000, 2);
  NetworkGrid g;
  g.depths = {0, 1, 2};
  g.widths = {8};
  g.dropouts = {0.0, 0.3};
  const auto r = hyperopt_network(s.data, g, SplitPlan{}, Target::Joint);
  CHECK(r.candidates.size() == 6);
  double best_d0 = 1e9, best = 1e9;
  for (const auto& c : r.candidates) {
    best = std::min(best, c.test_loss);
    if (c.config.network.depth == 0) best_d0 = std::min(best_d0, c.test_loss);
  }
  CHECK(best_d0 - best <= 1e-3);
  // candidates without hidden layers share one fit
  CHECK(r.candidates[0].test_loss == r.candidates[1].test_loss);
}

TEST_CASE("tree hyperopt: forest grid reports every candidate and is deterministic") {
  const auto s = sample_dataset(informative_dgp(), 1200, 3);
  TreeGrid t = TreeGrid::default_forest();
  t.depths = {3, 5};
  t.min_leaves = {10};
  t.max_features = {2, 5};
  t.ensemble_size = 20;
  t.cv_folds = 2;
  const auto a = hyperopt_trees(s.data, t, 7);
  const auto b = hyperopt_trees(s.data, t, 7);
  CHECK(a.candidates.size() == 4);
  CHECK(a.selected == b.selected);
  for (std::size_t i = 0; i < a.candidates.size(); ++i) {
    CHECK(std::isfinite(a.candidates[i].validation_loss));
    CHECK(a.candidates[i].test_loss == b.candidates[i].test_loss);
  }
  const auto bt = TreeGrid::default_boosted();
  CHECK_FALSE(bt.learning_rates.empty());
  CHECK_THROWS_AS(TreeGrid::from_json({{"learning_rates", {0.1}}}, LearnerKind::Forest), ValidationError);
}

TEST_CASE("cross-fit: one prediction per record, near truth on a constant DGP") {
  auto dgp = SyntheticDGP::blank(make_schema({{"a", {1, 2}}}));
  dgp.coverage_coef(0) = -0.4;
  dgp.claim_coef(0) = -1.2;
  dgp.rho_coef(0) = 0.1;
  dgp.validate();
  const auto s = sample_dataset(dgp, 10000, 4);
  LearnerConfig cfg;
  cfg.network.seed = 5;
  const auto folds = make_folds(s.data, 2, 6);
  const auto cf = cross_fit_predict(s.data, cfg, folds);
  REQUIRE(cf.size() == s.data.size());
  const auto truth = s.truth.record_quads[0];
  double worst = 0;
  for (const auto& q : cf)
    for (int k = 0; k < 4; ++k) worst = std::max(worst, std::abs(q[k] - truth[k]));
  CHECK(worst < 0.02);

  const auto raw = train_learner(s.data, s.data, cfg).predict_quads(s.data);
  bool differs = false;
  for (std::size_t i = 0; i < cf.size() && !differs; ++i) differs = !(cf[i] == raw[i]);
  CHECK(differs);
}

TEST_CASE("leave-one-feature-out importance") {
  const auto s = sample_dataset(informative_dgp(), 6000, 5);
  LearnerConfig cfg;
  cfg.network.seed = 1;
  SplitPlan plan;
  plan.seed = 2;
  const auto imp = feature_group_importance(s.data, cfg, plan);
  REQUIRE(imp.size() == 3);
  CHECK(imp[0].feature == "None");
  CHECK(imp[0].delta == 0.0);
  CHECK(imp[1].feature == "a");
  CHECK(imp[1].delta > 0.05);

  const auto parts = split(s.data, plan);
  const double se = test_loss_se(train_learner(parts.train, parts.validation, cfg), parts.test);
  CHECK(std::abs(imp[2].delta) < 2 * se);
}

TEST_CASE("impurity importance sums to one and ranks the informative feature first") {
  const auto s = sample_dataset(informative_dgp(), 3000, 6);
  for (auto kind : {LearnerKind::Forest, LearnerKind::Boosted}) {
    LearnerConfig cfg;
    cfg.kind = kind;
    cfg.forest.trees = 40;
    cfg.forest.max_features = 3;
    cfg.boosted.rounds = 40;
    const auto m = train_learner(s.data, s.data, cfg);
    const auto imp = impurity_importance(m);
    CHECK(imp.columns.size() == 5);
    CHECK(imp.column_labels[0] == "a=2");
    CHECK(std::accumulate(imp.columns.begin(), imp.columns.end(), 0.0) == doctest::Approx(1.0));
    CHECK(std::accumulate(imp.per_feature.begin(), imp.per_feature.end(), 0.0) == doctest::Approx(1.0));
    CHECK(imp.per_feature[0] > imp.per_feature[1]);
  }
  LearnerConfig net;
  net.network.max_epochs = 2;
  CHECK_THROWS_AS(impurity_importance(train_learner(s.data, s.data, net)), ValidationError);
}
