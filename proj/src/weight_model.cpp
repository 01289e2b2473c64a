#include "pcp/weight_model.hpp"

#include "pcp/error.hpp"
#include "pcp/stats.hpp"

namespace pcp {

namespace {

TrainingTargets weight_targets(const Dataset& d) {
  TrainingTargets t;
  t.values = d.weights();
  t.weights.assign(d.size(), 1.0);
  return t;
}

DesignMatrix constant_design(std::size_t n) { return DesignMatrix::Ones(static_cast<Eigen::Index>(n), 1); }

WeightModel fit(const Dataset& train, const Dataset& validation, const NetworkConfig& cfg, bool intercept_only) {
  if (!(train.schema() == validation.schema())) throw ValidationError("weight model: datasets use different schemas");
  const auto x_train = intercept_only ? constant_design(train.size()) : one_hot_encode(train);
  const auto x_val = intercept_only ? constant_design(validation.size()) : one_hot_encode(validation);
  auto res = train_mlp(x_train, weight_targets(train), x_val, weight_targets(validation), 2, OutputHead::WeightMixture,
                       cfg);
  return WeightModel(train.schema_ptr(), std::move(res.net), cfg, std::move(res.report), intercept_only);
}

}  // namespace

WeightModel::WeightModel(SchemaPtr schema, Mlp net, NetworkConfig cfg, TrainingReport report, bool intercept_only)
    : schema_(std::move(schema)),
      net_(std::move(net)),
      cfg_(cfg),
      report_(std::move(report)),
      intercept_only_(intercept_only) {}

DesignMatrix WeightModel::design(const Dataset& d) const {
  if (!(d.schema() == *schema_)) throw ValidationError("weight model: dataset schema does not match");
  return intercept_only_ ? constant_design(d.size()) : one_hot_encode(d);
}

std::vector<WeightPrediction> WeightModel::predict(const Dataset& d) const {
  const Eigen::MatrixXd z = net_.logits(design(d));
  std::vector<WeightPrediction> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    auto& p = out[i];
    p.full_year = logistic(z(r, 0));
    p.partial_mean = logistic(z(r, 1));
    p.expected = p.full_year + (1.0 - p.full_year) * p.partial_mean;
  }
  return out;
}

double WeightModel::loss(const Dataset& d) const {
  return evaluate_loss(net_, design(d), weight_targets(d), OutputHead::WeightMixture);
}

nlohmann::json WeightModel::to_json() const {
  return {{"format", "pcp-weight-model"},
          {"version", 1},
          {"intercept_only", intercept_only_},
          {"config", cfg_.to_json()},
          {"schema_fingerprint", schema_->fingerprint()},
          {"parameters", net_.to_json()}};
}

WeightModel train_weight_model(const Dataset& train, const Dataset& validation, const NetworkConfig& cfg) {
  return fit(train, validation, cfg, false);
}

WeightModel train_constant_weight_model(const Dataset& train, const Dataset& validation, const NetworkConfig& cfg) {
  return fit(train, validation, cfg, true);
}

}  // namespace pcp
