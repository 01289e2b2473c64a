#pragma once

// Synthetic data with analytically known conditional probabilities.
//
// Each covariate cell x gets p(x) = logistic(a.row), q(x) = logistic(b.row)
// and a target correlation rho*(x) = clamp(rho.row, -1, 1); the (c, r) quad
// follows from C = rho* sqrt(p(1-p) q(1-q)), p11 = pq + C.

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "pcp/data.hpp"
#include "pcp/prob_quad.hpp"
#include "pcp/stats.hpp"

namespace pcp {

struct WeightLaw {
  double full_year_mass = 0.4;       // Pr(w = 1) at the reference cell
  Eigen::VectorXd full_year_coef;    // optional logit shift per design column
  double beta_a = 2.0;
  double beta_b = 2.0;
};

struct SyntheticDGP {
  SchemaPtr schema;
  std::vector<std::vector<double>> marginals;  // per feature, per modality
  Eigen::VectorXd coverage_coef;               // a
  Eigen::VectorXd claim_coef;                  // b
  Eigen::VectorXd rho_coef;                    // rho*(x) = clamp(rho_coef . row)
  WeightLaw weight_law;
  std::size_t rejection_cap = 1000;

  /// Fills defaults (uniform marginals, zero coefficients), checks shapes and,
  /// when the schema has at most 1e6 cells, Frechet feasibility of every cell.
  void validate() const;

  static SyntheticDGP from_json(const nlohmann::json& j);
  static SyntheticDGP load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  /// A DGP over `schema` with zero coefficients and uniform marginals.
  static SyntheticDGP blank(SchemaPtr schema);
};

struct CellTruth {
  ProbQuad quad;
  double covariance = 0.0;
  double correlation = 0.0;
};

struct GroundTruth {
  std::map<std::vector<int>, CellTruth> cells;  // cells present in the sample
  std::vector<ProbQuad> record_quads;           // aligned with the sample
  std::vector<double> record_rho;

  std::string format_csv(const CategoricalSchema& schema) const;
};

struct SyntheticSample {
  Dataset data;
  GroundTruth truth;
};

double true_rho(const SyntheticDGP& dgp, const Eigen::RowVectorXd& row);
ProbQuad quad_from_moments(double p, double q, double rho);
ProbQuad true_prob_quad(const SyntheticDGP& dgp, std::span<const int> covariates);
CellTruth true_cell(const SyntheticDGP& dgp, std::span<const int> covariates);

SyntheticSample sample_dataset(const SyntheticDGP& dgp, std::size_t n, std::uint64_t seed);

/// Draws one weight from the law at design row `row`.
double draw_weight(const WeightLaw& law, const Eigen::RowVectorXd& row, Rng& rng);

}  // namespace pcp
