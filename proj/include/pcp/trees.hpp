#pragma once

// Tree ensembles over one-hot design columns. Every non-constant column is
// binary, so a split sends x_j = 0 left and x_j = 1 right.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pcp/data.hpp"

namespace pcp {

struct ForestConfig {
  int trees = 500;
  int max_depth = 5;
  int min_leaf = 10;
  int max_features = 5;  // design columns drawn per split
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ForestConfig from_json(const nlohmann::json& j);
  static ForestConfig from_json(const nlohmann::json& j, const ForestConfig& defaults);
};

struct BoostConfig {
  int rounds = 500;
  int max_depth = 4;
  int min_leaf = 20;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static BoostConfig from_json(const nlohmann::json& j);
  static BoostConfig from_json(const nlohmann::json& j, const BoostConfig& defaults);
};

/// Binary view of a design matrix (constant column dropped).
class BinaryDesign {
 public:
  explicit BinaryDesign(const DesignMatrix& x);

  std::size_t rows() const { return rows_; }
  std::size_t columns() const { return cols_; }  // design width - 1
  bool at(std::size_t row, std::size_t col) const { return dense_[row * cols_ + col] != 0; }
  const std::vector<std::uint32_t>& active(std::size_t row) const { return active_[row]; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::uint8_t> dense_;
  std::vector<std::vector<std::uint32_t>> active_;
};

struct TreeNode {
  int column = -1;  // design column (>= 1); -1 for leaves
  int left = -1;    // x = 0
  int right = -1;   // x = 1
  std::vector<double> value;  // leaf output: class distribution or per-class score
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const std::vector<double>& leaf(const BinaryDesign& x, std::size_t row) const;
  nlohmann::json to_json() const;
  static Tree from_json(const nlohmann::json& j);
};

struct TreeEnsemble {
  enum class Kind { Forest, Boosted };
  Kind kind = Kind::Forest;
  std::size_t classes = 4;
  std::size_t width = 0;               // design width the trees were grown on
  std::vector<Tree> trees;             // boosted: rounds * classes, class-major within a round
  std::vector<double> initial_scores;  // boosted only
  double learning_rate = 0.0;          // boosted only
  std::vector<double> importance;      // impurity decrease per design column

  /// Class probabilities, one row per design row.
  Eigen::MatrixXd predict(const DesignMatrix& x) const;

  nlohmann::json to_json() const;
  static TreeEnsemble from_json(const nlohmann::json& j);
};

/// Forest: bootstrap draws proportional to w, weighted-entropy splits over a
/// random subset of columns, prediction = average of leaf class distributions.
TreeEnsemble train_forest(const DesignMatrix& x, const std::vector<int>& labels, const std::vector<double>& weights,
                          std::size_t classes, const ForestConfig& cfg);

/// Multiclass gradient boosting: per round one regression tree per class on the
/// weighted negative gradient of the softmax cross-entropy.
TreeEnsemble train_boosted(const DesignMatrix& x, const std::vector<int>& labels, const std::vector<double>& weights,
                           std::size_t classes, const BoostConfig& cfg);

}  // namespace pcp
