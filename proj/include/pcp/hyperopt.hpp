#pragma once

// Grid search, cross-fitted prediction and feature importance.

#include <string>
#include <vector>

#include <json.hpp>

#include "pcp/classifier.hpp"
#include "pcp/data.hpp"

namespace pcp {

struct NetworkGrid {
  std::vector<int> depths{0, 1, 2, 3};
  std::vector<int> widths{8, 16, 24};
  std::vector<double> dropouts{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  NetworkConfig base;  // optimizer, patience, seed

  /// Depth-major, then width, then dropout.
  std::vector<NetworkConfig> candidates() const;
  nlohmann::json to_json() const;
  static NetworkGrid from_json(const nlohmann::json& j);
};

struct TreeGrid {
  LearnerKind kind = LearnerKind::Forest;
  std::vector<int> depths;
  std::vector<int> min_leaves;
  std::vector<int> max_features;        // forest
  std::vector<double> learning_rates;   // boosted
  int ensemble_size = 500;
  int cv_folds = 5;  // 0 disables the cross-validated loss
  double train_fraction = 0.8;

  static TreeGrid default_forest();
  static TreeGrid default_boosted();
  std::vector<LearnerConfig> candidates(std::uint64_t seed) const;
  nlohmann::json to_json() const;
  static TreeGrid from_json(const nlohmann::json& j, LearnerKind kind);
};

struct HyperoptCandidate {
  LearnerConfig config;
  std::size_t parameters = 0;     // networks: trainable scalars
  double validation_loss = 0.0;   // networks: best early-stopping loss; trees: CV loss (NaN if off)
  double test_loss = 0.0;
  int epochs = 0;
};

struct HyperoptReport {
  LearnerKind kind = LearnerKind::Network;
  std::vector<HyperoptCandidate> candidates;
  std::size_t selected = 0;

  const LearnerConfig& selected_config() const { return candidates.at(selected).config; }
};

/// Trains every candidate on train, early-stops on validation and scores on
/// test. Ties on test loss go to fewer parameters, then lower dropout, then
/// grid order. Candidates without hidden layers share one fit.
HyperoptReport hyperopt_network(const Dataset& d, const NetworkGrid& grid, const SplitPlan& plan,
                                Target target = Target::Joint);

/// Train/test split at grid.train_fraction; optional K-fold loss on the train
/// part; selection by test loss, ties to grid order.
HyperoptReport hyperopt_trees(const Dataset& d, const TreeGrid& grid, std::uint64_t seed,
                              Target target = Target::Joint);

/// Each record predicted by a model trained on the other folds. Networks hold
/// out 15% of the training folds for early stopping.
std::vector<ProbQuad> cross_fit_predict(const Dataset& d, const LearnerConfig& cfg, const FoldAssignment& folds);

struct FeatureLoss {
  std::string feature;  // "None" for the full model
  double test_loss = 0.0;
  double delta = 0.0;   // test loss without the feature minus full-model loss
};

/// Leave-one-feature-out retraining on a fixed split; losses are on the test
/// part.
std::vector<FeatureLoss> feature_group_importance(const Dataset& d, const LearnerConfig& cfg, const SplitPlan& plan);

struct ImpurityImportance {
  std::vector<std::string> column_labels;  // "feature=code" per dummy column
  std::vector<double> columns;
  std::vector<std::string> features;
  std::vector<double> per_feature;
};

ImpurityImportance impurity_importance(const ClassifierModel& model);

}  // namespace pcp
