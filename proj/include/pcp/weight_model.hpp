#pragma once

// Two-part model of the sampling weight: Pr(w = 1) through a logistic head and
// the mean of w given w < 1 through a sigmoid head, Beta likelihood with fixed
// dispersion for the continuous part.

#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pcp/data.hpp"
#include "pcp/network.hpp"

namespace pcp {

struct WeightPrediction {
  double full_year = 0.0;     // pi: Pr(w = 1)
  double partial_mean = 0.0;  // m: E(w | w < 1)
  double expected = 0.0;      // pi + (1 - pi) m
};

class WeightModel {
 public:
  WeightModel(SchemaPtr schema, Mlp net, NetworkConfig cfg, TrainingReport report, bool intercept_only);

  bool intercept_only() const { return intercept_only_; }
  const Mlp& network() const { return net_; }
  const TrainingReport& report() const { return report_; }

  std::vector<WeightPrediction> predict(const Dataset& d) const;
  /// Mixture negative log-likelihood per record.
  double loss(const Dataset& d) const;

  nlohmann::json to_json() const;

 private:
  DesignMatrix design(const Dataset& d) const;

  SchemaPtr schema_;
  Mlp net_;
  NetworkConfig cfg_;
  TrainingReport report_;
  bool intercept_only_;
};

WeightModel train_weight_model(const Dataset& train, const Dataset& validation, const NetworkConfig& cfg);

/// Same likelihood on a constant input: the benchmark the covariate model must beat.
WeightModel train_constant_weight_model(const Dataset& train, const Dataset& validation, const NetworkConfig& cfg);

}  // namespace pcp
