#include <doctest.h>

#include <cmath>

#include "pcp/error.hpp"
#include "pcp/network.hpp"

using namespace pcp;

namespace {

std::size_t enumerate(const Mlp& net) {
  std::size_t n = 0;
  for (const auto& l : net.layers()) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

// Central finite differences of the full-batch loss.
double max_rel_error(Mlp net, const DesignMatrix& x, const TrainingTargets& t, OutputHead head) {
  // zero initial biases put rows with all-inactive units exactly on a kink
  Rng rng(17);
  std::normal_distribution<double> z(0.0, 0.5);
  Eigen::VectorXd start(net.flat().size());
  for (auto& v : start) v = z(rng);
  net.set_flat(start);
  Eigen::VectorXd grad;
  net.loss_and_gradient(x, t, head, &grad);
  Mlp probe = net;
  const Eigen::VectorXd theta = net.flat();
  double worst = 0.0;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double h = 1e-6;
    Eigen::VectorXd tp = theta, tm = theta;
    tp(k) += h;
    tm(k) -= h;
    probe.set_flat(tp);
    const double fp = probe.loss_and_gradient(x, t, head, nullptr);
    probe.set_flat(tm);
    const double fm = probe.loss_and_gradient(x, t, head, nullptr);
    const double fd = (fp - fm) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad(k)) / std::max(1e-6, std::abs(fd) + std::abs(grad(k))));
  }
  return worst;
}

}  // namespace

TEST_CASE("parameter counts") {
  NetworkConfig d0;
  CHECK(count_parameters(d0, 49) == 196);
  CHECK(reference_parameter_formula(d0, 49) == 147);

  NetworkConfig d2;
  d2.depth = 2;
  d2.width = 16;
  CHECK(reference_parameter_formula(d2, 49) == 1088);
  Rng rng(1);
  const Mlp net(49, 4, 2, 16, rng);
  CHECK(count_parameters(d2, 49) == enumerate(net));
  CHECK(net.parameter_count() == enumerate(net));
  CHECK(enumerate(net) == 49 * 16 + (16 * 16 + 16) + (16 * 4 + 4));
}

TEST_CASE("config validation and json") {
  NetworkConfig c;
  c.depth = 2;
  c.width = 16;
  c.dropout = 0.1;
  c.seed = 77;
  const auto back = NetworkConfig::from_json(c.to_json());
  CHECK(back.depth == 2);
  CHECK(back.width == 16);
  CHECK(back.dropout == 0.1);
  CHECK(back.seed == 77);
  NetworkConfig bad;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.depth = -1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_THROWS_AS(NetworkConfig::from_json({{"depht", 1}}), ValidationError);
}

TEST_CASE("backprop matches finite differences") {
  Rng rng(3);
  std::normal_distribution<double> z;
  DesignMatrix x(12, 3);
  for (Eigen::Index i = 0; i < 12; ++i) x.row(i) << 1.0, z(rng), z(rng);
  TrainingTargets t;
  for (int i = 0; i < 12; ++i) {
    t.labels.push_back(i % 4);
    t.weights.push_back(0.2 + 0.05 * i);
    t.values.push_back(i % 3 == 0 ? 1.0 : 0.1 + 0.07 * i);
  }
  SUBCASE("softmax, two hidden layers") {
    const Mlp net(3, 4, 2, 3, rng);
    CHECK(max_rel_error(net, x, t, OutputHead::Softmax) < 1e-5);
  }
  SUBCASE("softmax, no hidden layer") {
    const Mlp net(3, 4, 0, 1, rng);
    CHECK(max_rel_error(net, x, t, OutputHead::Softmax) < 1e-5);
  }
  SUBCASE("weight mixture head") {
    const Mlp net(3, 2, 1, 4, rng);
    CHECK(max_rel_error(net, x, t, OutputHead::WeightMixture) < 1e-5);
  }
}

TEST_CASE("loss: perfect and uniform predictions") {
  TrainingTargets t{{0, 1, 2, 3}, {}, {1, 1, 1, 1}};
  Eigen::MatrixXd logits = Eigen::MatrixXd::Constant(4, 4, -50.0);
  for (int i = 0; i < 4; ++i) logits(i, i) = 50.0;
  Eigen::VectorXd loss;
  std::vector<std::size_t> rows{0, 1, 2, 3};
  head_loss(logits, t, rows, OutputHead::Softmax, loss, nullptr);
  CHECK(loss.maxCoeff() < 1e-12);
  head_loss(Eigen::MatrixXd::Zero(4, 4), t, rows, OutputHead::Softmax, loss, nullptr);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(loss(i) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("intercept-only network recovers weighted class frequencies") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  const std::size_t n = 4000;
  DesignMatrix x = DesignMatrix::Ones(n, 1);
  TrainingTargets t;
  std::array<double, 4> mass{};
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(i % 7 < 4 ? i % 7 : 0);
    const double w = u(rng);
    t.labels.push_back(k);
    t.weights.push_back(w);
    mass[static_cast<std::size_t>(k)] += w;
    total += w;
  }
  NetworkConfig cfg;
  cfg.seed = 1;
  const auto fit = train_mlp(x, t, x, t, 4, OutputHead::Softmax, cfg);
  const Eigen::MatrixXd p = softmax_rows(fit.net.logits(x.topRows(1)));
  double entropy = 0;
  for (int k = 0; k < 4; ++k) {
    const double f = mass[static_cast<std::size_t>(k)] / total;
    CHECK(p(0, k) == doctest::Approx(f).epsilon(2e-3));
    entropy -= f * std::log(f);
  }
  CHECK(evaluate_loss(fit.net, x, t, OutputHead::Softmax) == doctest::Approx(entropy).epsilon(1e-4));
}

TEST_CASE("training is deterministic and keeps the best epoch") {
  Rng rng(9);
  std::normal_distribution<double> z;
  DesignMatrix x(600, 4);
  TrainingTargets t;
  for (Eigen::Index i = 0; i < 600; ++i) {
    x.row(i) << 1.0, z(rng), z(rng), z(rng);
    t.labels.push_back(x(i, 1) + 0.5 * z(rng) > 0 ? (x(i, 2) > 0 ? 3 : 2) : (x(i, 2) > 0 ? 1 : 0));
    t.weights.push_back(1.0);
  }
  NetworkConfig cfg;
  cfg.depth = 1;
  cfg.width = 8;
  cfg.dropout = 0.2;
  cfg.max_epochs = 60;
  cfg.seed = 4;
  const auto a = train_mlp(x.topRows(400), {{t.labels.begin(), t.labels.begin() + 400}, {}, std::vector<double>(400, 1.0)},
                           x.bottomRows(200), {{t.labels.begin() + 400, t.labels.end()}, {}, std::vector<double>(200, 1.0)},
                           4, OutputHead::Softmax, cfg);
  const auto b = train_mlp(x.topRows(400), {{t.labels.begin(), t.labels.begin() + 400}, {}, std::vector<double>(400, 1.0)},
                           x.bottomRows(200), {{t.labels.begin() + 400, t.labels.end()}, {}, std::vector<double>(200, 1.0)},
                           4, OutputHead::Softmax, cfg);
  CHECK(a.net.flat() == b.net.flat());
  const auto& r = a.report;
  REQUIRE(r.best_epoch >= 1);
  CHECK(r.best_validation_loss == r.validation_loss[static_cast<std::size_t>(r.best_epoch - 1)]);
  for (double v : r.validation_loss) CHECK(v >= r.best_validation_loss);
  CHECK(r.epochs_run <= 60);
  CHECK(r.validation_loss.front() > r.best_validation_loss);
}

TEST_CASE("json round trip preserves predictions") {
  Rng rng(2);
  const Mlp net(5, 4, 2, 3, rng);
  const auto back = Mlp::from_json(net.to_json());
  DesignMatrix x = DesignMatrix::Random(7, 5);
  CHECK((back.logits(x) - net.logits(x)).cwiseAbs().maxCoeff() == 0.0);
}
