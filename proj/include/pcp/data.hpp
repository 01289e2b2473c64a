#pragma once

// Weighted categorical datasets: schema, records, one-hot design, splits,
// folds and group partitions.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace pcp {

struct Feature {
  std::string name;
  std::vector<int> modalities;  // ordered; first code is the dummy reference
};

class CategoricalSchema {
 public:
  explicit CategoricalSchema(std::vector<Feature> features);

  /// Car age, car group, insuree age, profession, usage, region, zone, gender.
  static CategoricalSchema default_insurance();
  static CategoricalSchema from_json(const nlohmann::json& j);
  static CategoricalSchema load(const std::filesystem::path& path);

  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;

  const std::vector<Feature>& features() const { return features_; }
  std::size_t feature_count() const { return features_.size(); }
  std::optional<std::size_t> feature_index(std::string_view name) const;

  /// Position of `code` within the feature's modality list, or -1.
  int modality_position(std::size_t feature, int code) const;

  /// 1 + sum over features of (modalities - 1).
  std::size_t design_width() const { return width_; }
  /// Column of the first dummy of `feature` in the design row.
  std::size_t block_offset(std::size_t feature) const { return offsets_[feature]; }

  /// Number of covariate cells (product of modality counts), saturating.
  double cell_count() const;

  std::string fingerprint() const;

  CategoricalSchema without_feature(std::size_t feature) const;

  bool operator==(const CategoricalSchema& other) const;

 private:
  std::vector<Feature> features_;
  std::vector<std::size_t> offsets_;
  std::size_t width_ = 1;
};

using SchemaPtr = std::shared_ptr<const CategoricalSchema>;

struct Record {
  std::vector<int> covariates;  // modality code per feature
  int c = 0;
  int r = 0;
  double w = 1.0;

  /// Index of the (c, r) pair in (00, 01, 10, 11) order.
  int outcome_class() const { return 2 * c + r; }
  bool operator==(const Record&) const = default;
};

class Dataset {
 public:
  Dataset(SchemaPtr schema, std::vector<Record> records);

  const CategoricalSchema& schema() const { return *schema_; }
  const SchemaPtr& schema_ptr() const { return schema_; }
  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const Record& operator[](std::size_t i) const { return records_[i]; }

  std::vector<double> weights() const;
  double total_weight() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset without_feature(std::size_t feature) const;

 private:
  SchemaPtr schema_;
  std::vector<Record> records_;
};

Dataset load_csv(const std::filesystem::path& path, SchemaPtr schema);
Dataset parse_csv(std::string_view text, SchemaPtr schema);
void save_csv(const Dataset& d, const std::filesystem::path& path);
std::string format_csv(const Dataset& d);

using DesignMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

DesignMatrix one_hot_encode(const Dataset& d);
Eigen::RowVectorXd encode_row(const CategoricalSchema& schema, std::span<const int> covariates);
/// Inverse of encode_row.
std::vector<int> decode_row(const CategoricalSchema& schema, const Eigen::RowVectorXd& row);

struct SplitPlan {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train, validation, test;
};

struct SplitDatasets {
  Dataset train, validation, test;
};

/// Shuffled order cut at floor(n*f_train) and floor(n*(f_train+f_val)).
SplitIndices split_indices(std::size_t n, const SplitPlan& plan);
SplitDatasets split(const Dataset& d, const SplitPlan& plan);

struct FoldAssignment {
  int folds = 5;
  std::vector<int> fold;  // fold index per record
  std::uint64_t seed = 0;

  std::vector<std::size_t> members(int k) const;
  std::vector<std::size_t> complement(int k) const;
};

FoldAssignment make_folds(std::size_t n, int folds, std::uint64_t seed);
inline FoldAssignment make_folds(const Dataset& d, int folds, std::uint64_t seed) {
  return make_folds(d.size(), folds, seed);
}

double weighted_mean(std::span<const double> values, std::span<const double> weights);

struct GroupScheme {
  enum class Kind { ByModality, ByQuartile, ByPredictedStatistic };
  Kind kind = Kind::ByModality;
  std::string feature;              // feature-based kinds
  std::vector<double> statistic;    // ByPredictedStatistic: one value per record
  int groups = 4;                   // quantile-based kinds
};

struct Group {
  std::string label;
  std::vector<std::size_t> indices;
};

std::vector<Group> partition(const Dataset& d, const GroupScheme& scheme);

}  // namespace pcp
