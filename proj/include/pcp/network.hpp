#pragma once

// Feedforward network: rectified-linear hidden layers, linear output logits,
// trained with Adam on mini-batches, inverted dropout and early stopping on a
// validation sample.
//
// The input row already carries a constant column, so the first layer has no
// separate bias; every later layer (hidden or output) has one.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pcp/data.hpp"
#include "pcp/stats.hpp"

namespace pcp {

struct NetworkConfig {
  int depth = 0;  // hidden layers; 0 means softmax directly on the inputs
  int width = 8;
  double dropout = 0.0;
  int patience = 10;
  int max_epochs = 500;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);
  static NetworkConfig from_json(const nlohmann::json& j, const NetworkConfig& defaults);
};

enum class OutputHead {
  Softmax,        // K-way weighted cross-entropy
  WeightMixture,  // point mass at w = 1 plus a Beta part on (0, 1)
};

/// Per-row targets. `labels` feeds the softmax head, `values` the weight head;
/// `weights` scales each row's loss.
struct TrainingTargets {
  std::vector<int> labels;
  std::vector<double> values;
  std::vector<double> weights;
};

struct TrainingReport {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  int best_epoch = 0;  // 1-based
  int epochs_run = 0;
  double best_validation_loss = 0.0;
};

/// Fixed dispersion of the Beta part of the weight head.
inline constexpr double kWeightDispersion = 5.0;

class Mlp {
 public:
  struct Layer {
    Eigen::MatrixXd weights;  // fan_in x fan_out
    Eigen::RowVectorXd bias;  // empty when the layer has no bias
  };

  Mlp() = default;
  Mlp(std::size_t inputs, std::size_t outputs, int depth, int width, Rng& rng);

  std::size_t inputs() const;
  std::size_t outputs() const;
  std::size_t parameter_count() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }

  /// Evaluation-mode logits (no dropout), one row per input row.
  Eigen::MatrixXd logits(const DesignMatrix& x) const;

  Eigen::VectorXd flat() const;
  void set_flat(const Eigen::VectorXd& params);

  /// Mean loss per unit weight over `rows` (all rows when empty), without
  /// dropout. Fills the flat gradient when `grad` is non-null.
  double loss_and_gradient(const DesignMatrix& x, const TrainingTargets& targets, OutputHead head,
                           Eigen::VectorXd* grad, std::span<const std::size_t> rows = {}) const;

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

 private:
  friend class MlpTrainer;
  std::vector<Layer> layers_;
};

/// Per-row loss for a block of logits; writes d(loss_i)/d(logits_i) into `dlogits`
/// when non-null. Probabilities are clipped at 1e-12 before logs.
void head_loss(const Eigen::MatrixXd& logits, const TrainingTargets& targets, std::span<const std::size_t> rows,
               OutputHead head, Eigen::VectorXd& loss, Eigen::MatrixXd* dlogits);

/// Weighted mean loss per unit weight of a trained network on (x, targets).
double evaluate_loss(const Mlp& net, const DesignMatrix& x, const TrainingTargets& targets, OutputHead head);

struct TrainedMlp {
  Mlp net;
  TrainingReport report;
};

/// Trains with early stopping; returns the parameters of the epoch with the
/// smallest validation loss.
TrainedMlp train_mlp(const DesignMatrix& x_train, const TrainingTargets& t_train, const DesignMatrix& x_val,
                     const TrainingTargets& t_val, std::size_t outputs, OutputHead head, const NetworkConfig& cfg);

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

/// Exact number of trainable scalars in the implemented architecture.
std::size_t count_parameters(const NetworkConfig& cfg, std::size_t n_inputs, std::size_t classes = 4);

/// n_X W + (D-1) W^2 + 3W for D > 0 and 3 n_X for D = 0, the reference-class
/// count that ignores hidden biases.
std::size_t reference_parameter_formula(const NetworkConfig& cfg, std::size_t n_inputs);

}  // namespace pcp
