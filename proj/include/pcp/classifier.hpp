#pragma once

// One interface over the three learners: softmax network, random forest and
// gradient-boosted trees, predicting the four (c, r) classes or a single
// binary outcome.

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pcp/data.hpp"
#include "pcp/network.hpp"
#include "pcp/prob_quad.hpp"
#include "pcp/trees.hpp"

namespace pcp {

enum class LearnerKind { Network, Forest, Boosted };
enum class Target { Joint, Coverage, Claim };  // 4 classes, c alone, r alone

std::string to_string(LearnerKind kind);
LearnerKind learner_kind_from_string(const std::string& name);
std::string to_string(Target target);
Target target_from_string(const std::string& name);

std::size_t class_count(Target target);
std::vector<int> class_labels(const Dataset& d, Target target);

struct LearnerConfig {
  LearnerKind kind = LearnerKind::Network;
  NetworkConfig network;
  ForestConfig forest;
  BoostConfig boosted;

  std::uint64_t seed() const;
  LearnerConfig with_seed(std::uint64_t seed) const;
  nlohmann::json to_json() const;  // only the active learner's settings
  static LearnerConfig from_json(const nlohmann::json& j);
};

class ClassifierModel {
 public:
  ClassifierModel(LearnerKind kind, Target target, SchemaPtr schema, nlohmann::json config,
                  std::variant<Mlp, TreeEnsemble> params, TrainingReport report = {});

  LearnerKind kind() const { return kind_; }
  Target target() const { return target_; }
  std::size_t classes() const { return class_count(target_); }
  const CategoricalSchema& schema() const { return *schema_; }
  const SchemaPtr& schema_ptr() const { return schema_; }
  const nlohmann::json& config() const { return config_; }
  const TrainingReport& report() const { return report_; }
  const Mlp* network() const { return std::get_if<Mlp>(&params_); }
  const TreeEnsemble* ensemble() const { return std::get_if<TreeEnsemble>(&params_); }

  /// Class probabilities, one row per record.
  Eigen::MatrixXd predict_proba(const Dataset& d) const;
  Eigen::MatrixXd predict_proba(const DesignMatrix& x) const;
  /// Joint models only.
  std::vector<ProbQuad> predict_quads(const Dataset& d) const;

  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;
  /// Verifies the stored schema fingerprint against `schema`.
  static ClassifierModel from_json(const nlohmann::json& j, const SchemaPtr& schema);
  static ClassifierModel load(const std::filesystem::path& path, const SchemaPtr& schema);
  /// Uses the schema stored in the file.
  static ClassifierModel load(const std::filesystem::path& path);

 private:
  void check_schema(const CategoricalSchema& schema) const;

  LearnerKind kind_;
  Target target_;
  SchemaPtr schema_;
  nlohmann::json config_;
  std::variant<Mlp, TreeEnsemble> params_;
  TrainingReport report_;
};

/// Weighted cross-entropy per unit weight, probabilities clipped at 1e-12.
double cross_entropy_loss(const ClassifierModel& model, const Dataset& d);
double cross_entropy_loss(const Eigen::MatrixXd& probs, std::span<const int> labels, std::span<const double> weights);

/// Weighted class frequencies of the target.
std::vector<double> class_frequencies(const Dataset& d, Target target);

/// Network without hidden layers whose predictions equal `freq` for every row.
ClassifierModel constant_model(SchemaPtr schema, const std::vector<double>& freq, Target target = Target::Joint);

ClassifierModel train_network(const Dataset& train, const Dataset& validation, const NetworkConfig& cfg,
                              Target target = Target::Joint);
ClassifierModel train_forest(const Dataset& d, const ForestConfig& cfg, Target target = Target::Joint);
ClassifierModel train_boosted(const Dataset& d, const BoostConfig& cfg, Target target = Target::Joint);

/// Networks early-stop on `validation`; tree ensembles train on `train` only.
ClassifierModel train_learner(const Dataset& train, const Dataset& validation, const LearnerConfig& cfg,
                              Target target = Target::Joint);

/// 2-class model for c or r.
ClassifierModel train_binary(const Dataset& train, const Dataset& validation, const LearnerConfig& cfg,
                             Target target);

/// Epoch, train loss, validation loss.
std::string format_training_report(const TrainingReport& report);

}  // namespace pcp
