#include "pcp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "pcp/error.hpp"

namespace pcp {

namespace {

constexpr int kDgpVersion = 1;
constexpr double kFeasibilityTol = 1e-12;

Eigen::VectorXd parse_coef(const nlohmann::json& j, const CategoricalSchema& schema, const char* what) {
  const auto width = static_cast<Eigen::Index>(schema.design_width());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(width);
  if (j.is_null()) return v;
  if (j.is_array()) {
    const auto vals = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(vals.size()) != width)
      throw ValidationError(std::string("dgp: '") + what + "' needs " + std::to_string(width) + " entries");
    for (Eigen::Index k = 0; k < width; ++k) v(k) = vals[static_cast<std::size_t>(k)];
    return v;
  }
  if (!j.is_object()) throw ValidationError(std::string("dgp: '") + what + "' must be an array or object");
  v(0) = j.value("intercept", 0.0);
  if (j.contains("effects")) {
    for (const auto& [name, effects] : j.at("effects").items()) {
      const auto f = schema.feature_index(name);
      if (!f) throw ValidationError(std::string("dgp: '") + what + "' names unknown feature " + name);
      const auto e = effects.get<std::vector<double>>();
      const auto& mods = schema.features()[*f].modalities;
      // effects are given for every modality; the reference entry is subtracted out
      std::size_t skip = 0;
      if (e.size() == mods.size()) {
        v(0) += e[0];
        skip = 1;
      } else if (e.size() != mods.size() - 1) {
        throw ValidationError(std::string("dgp: '") + what + "' effects for " + name +
                              " need one entry per modality");
      }
      for (std::size_t k = skip; k < e.size(); ++k) {
        const double base = skip ? e[0] : 0.0;
        v(static_cast<Eigen::Index>(schema.block_offset(*f) + k - skip)) = e[k] - base;
      }
    }
  }
  return v;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

SyntheticDGP SyntheticDGP::blank(SchemaPtr schema) {
  SyntheticDGP dgp;
  const auto width = static_cast<Eigen::Index>(schema->design_width());
  for (const auto& f : schema->features())
    dgp.marginals.emplace_back(f.modalities.size(), 1.0 / static_cast<double>(f.modalities.size()));
  dgp.coverage_coef = Eigen::VectorXd::Zero(width);
  dgp.claim_coef = Eigen::VectorXd::Zero(width);
  dgp.rho_coef = Eigen::VectorXd::Zero(width);
  dgp.weight_law.full_year_coef = Eigen::VectorXd::Zero(width);
  dgp.schema = std::move(schema);
  return dgp;
}

void SyntheticDGP::validate() const {
  if (!schema) throw ValidationError("dgp: missing schema");
  const auto width = static_cast<Eigen::Index>(schema->design_width());
  if (marginals.size() != schema->feature_count()) throw ValidationError("dgp: one marginal per feature required");
  for (std::size_t f = 0; f < marginals.size(); ++f) {
    const auto& m = marginals[f];
    if (m.size() != schema->features()[f].modalities.size())
      throw ValidationError("dgp: marginal of " + schema->features()[f].name + " has the wrong length");
    double s = 0.0;
    for (double v : m) {
      if (!(v >= 0.0)) throw ValidationError("dgp: negative marginal probability");
      s += v;
    }
    if (!(s > 0.0)) throw ValidationError("dgp: marginal of " + schema->features()[f].name + " sums to 0");
  }
  if (coverage_coef.size() != width || claim_coef.size() != width || rho_coef.size() != width ||
      weight_law.full_year_coef.size() != width)
    throw ValidationError("dgp: coefficient vectors must match the design width");
  if (!(weight_law.full_year_mass >= 0.0 && weight_law.full_year_mass <= 1.0))
    throw ValidationError("dgp: full-year mass must lie in [0, 1]");
  if (!(weight_law.beta_a > 0.0 && weight_law.beta_b > 0.0))
    throw ValidationError("dgp: beta parameters must be positive");

  if (schema->cell_count() > 1e6) return;  // checked by rejection while sampling

  // enumerate every cell with an odometer over modality positions
  const std::size_t nf = schema->feature_count();
  std::vector<std::size_t> pos(nf, 0);
  std::vector<int> cell(nf);
  while (true) {
    for (std::size_t f = 0; f < nf; ++f) cell[f] = schema->features()[f].modalities[pos[f]];
    bool reachable = true;
    for (std::size_t f = 0; f < nf; ++f) reachable = reachable && marginals[f][pos[f]] > 0.0;
    if (reachable) (void)true_prob_quad(*this, cell);
    std::size_t f = 0;
    for (; f < nf; ++f) {
      if (++pos[f] < schema->features()[f].modalities.size()) break;
      pos[f] = 0;
    }
    if (f == nf) break;
  }
}

SyntheticDGP SyntheticDGP::from_json(const nlohmann::json& j) {
  try {
    const int version = j.value("version", kDgpVersion);
    if (version != kDgpVersion) throw ValidationError("dgp: unsupported version " + std::to_string(version));
    auto schema = std::make_shared<const CategoricalSchema>(
        j.contains("schema") ? CategoricalSchema::from_json(j.at("schema")) : CategoricalSchema::default_insurance());
    SyntheticDGP dgp = blank(schema);
    if (j.contains("marginals")) {
      for (const auto& [name, probs] : j.at("marginals").items()) {
        const auto f = schema->feature_index(name);
        if (!f) throw ValidationError("dgp: marginals name unknown feature " + name);
        dgp.marginals[*f] = probs.get<std::vector<double>>();
      }
    }
    dgp.coverage_coef = parse_coef(j.value("coverage", nlohmann::json()), *schema, "coverage");
    dgp.claim_coef = parse_coef(j.value("claim", nlohmann::json()), *schema, "claim");
    dgp.rho_coef = parse_coef(j.value("rho", nlohmann::json()), *schema, "rho");
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      dgp.weight_law.full_year_mass = w.value("full_year_mass", 0.4);
      if (w.contains("beta")) {
        const auto ab = w.at("beta").get<std::vector<double>>();
        if (ab.size() != 2) throw ValidationError("dgp: weights.beta needs two shape parameters");
        dgp.weight_law.beta_a = ab[0];
        dgp.weight_law.beta_b = ab[1];
      }
      dgp.weight_law.full_year_coef = parse_coef(w.value("full_year", nlohmann::json()), *schema, "full_year");
    }
    dgp.rejection_cap = j.value("rejection_cap", std::size_t{1000});
    dgp.validate();
    return dgp;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("dgp: ") + e.what());
  }
}

SyntheticDGP SyntheticDGP::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dgp file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("dgp " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json SyntheticDGP::to_json() const {
  nlohmann::json marg = nlohmann::json::object();
  for (std::size_t f = 0; f < schema->feature_count(); ++f) marg[schema->features()[f].name] = marginals[f];
  return {{"version", kDgpVersion},
          {"schema", schema->to_json()},
          {"marginals", marg},
          {"coverage", to_vec(coverage_coef)},
          {"claim", to_vec(claim_coef)},
          {"rho", to_vec(rho_coef)},
          {"weights",
           {{"full_year_mass", weight_law.full_year_mass},
            {"beta", {weight_law.beta_a, weight_law.beta_b}},
            {"full_year", to_vec(weight_law.full_year_coef)}}},
          {"rejection_cap", rejection_cap}};
}

double true_rho(const SyntheticDGP& dgp, const Eigen::RowVectorXd& row) {
  return std::clamp(row.dot(dgp.rho_coef), -1.0, 1.0);
}

ProbQuad quad_from_moments(double p, double q, double rho) {
  const double cov = rho * std::sqrt(p * (1.0 - p) * q * (1.0 - q));
  const double p11 = p * q + cov;
  std::array<double, 4> a{1.0 - p - q + p11, q - p11, p - p11, p11};
  for (double& v : a) {
    if (v < -kFeasibilityTol || v > 1.0 + kFeasibilityTol) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "infeasible cell: p=%.6g q=%.6g rho=%.6g implies a probability outside [0,1]",
                    p, q, rho);
      throw ValidationError(buf);
    }
    v = std::clamp(v, 0.0, 1.0);
  }
  return ProbQuad::from_array(a);
}

ProbQuad true_prob_quad(const SyntheticDGP& dgp, std::span<const int> covariates) {
  const auto row = encode_row(*dgp.schema, covariates);
  return quad_from_moments(logistic(row.dot(dgp.coverage_coef)), logistic(row.dot(dgp.claim_coef)),
                           true_rho(dgp, row));
}

CellTruth true_cell(const SyntheticDGP& dgp, std::span<const int> covariates) {
  const auto row = encode_row(*dgp.schema, covariates);
  const double p = logistic(row.dot(dgp.coverage_coef));
  const double q = logistic(row.dot(dgp.claim_coef));
  const double rho = true_rho(dgp, row);
  CellTruth t;
  t.quad = quad_from_moments(p, q, rho);
  t.covariance = rho * std::sqrt(p * (1.0 - p) * q * (1.0 - q));
  t.correlation = rho;
  return t;
}

double draw_weight(const WeightLaw& law, const Eigen::RowVectorXd& row, Rng& rng) {
  double mass = law.full_year_mass;
  if (law.full_year_coef.size() == row.size() && law.full_year_coef.any() && mass > 0.0 && mass < 1.0)
    mass = logistic(std::log(mass / (1.0 - mass)) + row.dot(law.full_year_coef));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (unif(rng) < mass) return 1.0;
  std::gamma_distribution<double> ga(law.beta_a, 1.0), gb(law.beta_b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  double w = x / (x + y);
  if (!(w > 0.0)) w = std::numeric_limits<double>::min();
  if (w >= 1.0) w = std::nextafter(1.0, 0.0);
  return w;
}

SyntheticSample sample_dataset(const SyntheticDGP& dgp, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("sample_dataset: n must be >= 1");
  dgp.validate();
  const auto& schema = *dgp.schema;
  Rng rng(seed);
  std::vector<std::discrete_distribution<int>> pickers;
  for (const auto& m : dgp.marginals) pickers.emplace_back(m.begin(), m.end());
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<Record> records;
  records.reserve(n);
  GroundTruth truth;
  truth.record_quads.reserve(n);
  truth.record_rho.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Record rec;
    rec.covariates.resize(schema.feature_count());
    CellTruth cell;
    Eigen::RowVectorXd row;
    std::size_t attempts = 0;
    while (true) {
      for (std::size_t f = 0; f < schema.feature_count(); ++f)
        rec.covariates[f] = schema.features()[f].modalities[static_cast<std::size_t>(pickers[f](rng))];
      row = encode_row(schema, rec.covariates);
      try {
        cell = true_cell(dgp, rec.covariates);
        break;
      } catch (const ValidationError&) {
        if (++attempts >= dgp.rejection_cap)
          throw ValidationError("sample_dataset: rejection cap reached; the DGP has too many infeasible cells");
      }
    }
    const double u = unif(rng);
    const auto a = cell.quad.as_array();
    int k = 0;
    double acc = a[0];
    while (k < 3 && u >= acc) acc += a[static_cast<std::size_t>(++k)];
    rec.c = k / 2;
    rec.r = k % 2;
    rec.w = draw_weight(dgp.weight_law, row, rng);
    truth.cells.emplace(rec.covariates, cell);
    truth.record_quads.push_back(cell.quad);
    truth.record_rho.push_back(cell.correlation);
    records.push_back(std::move(rec));
  }
  return {Dataset(dgp.schema, std::move(records)), std::move(truth)};
}

std::string GroundTruth::format_csv(const CategoricalSchema& schema) const {
  std::string out;
  for (const auto& f : schema.features()) out += f.name + ",";
  out += "p00,p01,p10,p11,covariance,correlation\n";
  char buf[256];
  for (const auto& [cell, t] : cells) {
    for (int code : cell) out += std::to_string(code) + ",";
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", t.quad.p00, t.quad.p01, t.quad.p10,
                  t.quad.p11, t.covariance, t.correlation);
    out += buf;
  }
  return out;
}

}  // namespace pcp
