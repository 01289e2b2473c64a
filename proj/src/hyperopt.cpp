#include "pcp/hyperopt.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "pcp/error.hpp"
#include "json_keys.hpp"
#include "pcp/stats.hpp"

namespace pcp {

namespace {

template <typename T>
std::vector<T> read_list(const nlohmann::json& j, const char* key, const std::vector<T>& fallback) {
  if (!j.contains(key)) return fallback;
  auto v = j.at(key).get<std::vector<T>>();
  if (v.empty()) throw ValidationError(std::string("grid: '") + key + "' must not be empty");
  return v;
}

}  // namespace

// ---------------------------------------------------------------- grids

std::vector<NetworkConfig> NetworkGrid::candidates() const {
  std::vector<NetworkConfig> out;
  for (int depth : depths)
    for (int width : widths)
      for (double dropout : dropouts) {
        NetworkConfig c = base;
        c.depth = depth;
        c.width = width;
        c.dropout = dropout;
        c.validate();
        out.push_back(c);
      }
  if (out.empty()) throw ValidationError("hyperopt: empty network grid");
  return out;
}

nlohmann::json NetworkGrid::to_json() const {
  return {{"depths", depths}, {"widths", widths}, {"dropouts", dropouts}, {"base", base.to_json()}};
}

NetworkGrid NetworkGrid::from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"depths", "widths", "dropouts", "base"}, "network grid");
  NetworkGrid g;
  try {
    g.depths = read_list(j, "depths", g.depths);
    g.widths = read_list(j, "widths", g.widths);
    g.dropouts = read_list(j, "dropouts", g.dropouts);
    if (j.contains("base")) g.base = NetworkConfig::from_json(j.at("base"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("network grid: ") + e.what());
  }
  return g;
}

TreeGrid TreeGrid::default_forest() {
  TreeGrid g;
  g.kind = LearnerKind::Forest;
  g.depths = {3, 5, 8};
  g.min_leaves = {5, 10, 20};
  g.max_features = {3, 5, 10};
  return g;
}

TreeGrid TreeGrid::default_boosted() {
  TreeGrid g;
  g.kind = LearnerKind::Boosted;
  g.depths = {2, 4, 6};
  g.min_leaves = {10, 20, 50};
  g.learning_rates = {0.05, 0.1, 0.3};
  return g;
}

std::vector<LearnerConfig> TreeGrid::candidates(std::uint64_t seed) const {
  std::vector<LearnerConfig> out;
  for (int depth : depths)
    for (int leaf : min_leaves) {
      if (kind == LearnerKind::Forest) {
        for (int features : max_features) {
          LearnerConfig c;
          c.kind = LearnerKind::Forest;
          c.forest = {ensemble_size, depth, leaf, features, seed};
          c.forest.validate();
          out.push_back(c);
        }
      } else {
        for (double rate : learning_rates) {
          LearnerConfig c;
          c.kind = LearnerKind::Boosted;
          c.boosted = {ensemble_size, depth, leaf, rate, seed};
          c.boosted.validate();
          out.push_back(c);
        }
      }
    }
  if (out.empty()) throw ValidationError("hyperopt: empty tree grid");
  return out;
}

nlohmann::json TreeGrid::to_json() const {
  nlohmann::json j = {{"kind", to_string(kind)},
                      {"depths", depths},
                      {"min_leaves", min_leaves},
                      {"ensemble_size", ensemble_size},
                      {"cv_folds", cv_folds},
                      {"train_fraction", train_fraction}};
  if (kind == LearnerKind::Forest)
    j["max_features"] = max_features;
  else
    j["learning_rates"] = learning_rates;
  return j;
}

TreeGrid TreeGrid::from_json(const nlohmann::json& j, LearnerKind kind) {
  if (kind == LearnerKind::Network) throw ValidationError("tree grid: learner must be forest or boosted");
  if (kind == LearnerKind::Forest)
    reject_unknown_keys(j, {"kind", "depths", "min_leaves", "max_features", "ensemble_size", "cv_folds", "train_fraction"},
                        "forest grid");
  else
    reject_unknown_keys(j, {"kind", "depths", "min_leaves", "learning_rates", "ensemble_size", "cv_folds", "train_fraction"},
                        "boosted grid");
  TreeGrid g = kind == LearnerKind::Forest ? default_forest() : default_boosted();
  try {
    g.depths = read_list(j, "depths", g.depths);
    g.min_leaves = read_list(j, "min_leaves", g.min_leaves);
    if (kind == LearnerKind::Forest)
      g.max_features = read_list(j, "max_features", g.max_features);
    else
      g.learning_rates = read_list(j, "learning_rates", g.learning_rates);
    g.ensemble_size = j.value("ensemble_size", g.ensemble_size);
    g.cv_folds = j.value("cv_folds", g.cv_folds);
    g.train_fraction = j.value("train_fraction", g.train_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("tree grid: ") + e.what());
  }
  if (g.cv_folds == 1 || g.cv_folds < 0) throw ValidationError("tree grid: cv_folds must be 0 or >= 2");
  if (!(g.train_fraction > 0.0 && g.train_fraction < 1.0))
    throw ValidationError("tree grid: train_fraction must lie in (0, 1)");
  return g;
}

// ---------------------------------------------------------------- search

HyperoptReport hyperopt_network(const Dataset& d, const NetworkGrid& grid, const SplitPlan& plan, Target target) {
  const auto configs = grid.candidates();
  const auto parts = split(d, plan);
  const std::size_t width = d.schema().design_width();

  // Without hidden layers, width and dropout have no effect: train once.
  std::vector<std::size_t> unique;
  std::vector<std::size_t> source(configs.size());
  std::optional<std::size_t> shallow;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (configs[i].depth == 0) {
      if (!shallow) {
        shallow = i;
        unique.push_back(i);
      }
      source[i] = *shallow;
    } else {
      source[i] = i;
      unique.push_back(i);
    }
  }

  std::vector<HyperoptCandidate> fitted(configs.size());
  parallel_for(unique.size(), [&](std::size_t u) {
    const std::size_t i = unique[u];
    const auto model = train_network(parts.train, parts.validation, configs[i], target);
    auto& c = fitted[i];
    c.validation_loss = model.report().best_validation_loss;
    c.test_loss = cross_entropy_loss(model, parts.test);
    c.epochs = model.report().best_epoch;
  });

  HyperoptReport report;
  report.kind = LearnerKind::Network;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    HyperoptCandidate c = fitted[source[i]];
    c.config.kind = LearnerKind::Network;
    c.config.network = configs[i];
    c.parameters = count_parameters(configs[i], width, class_count(target));
    report.candidates.push_back(c);
  }
  for (std::size_t i = 1; i < report.candidates.size(); ++i) {
    const auto& a = report.candidates[i];
    const auto& b = report.candidates[report.selected];
    if (a.test_loss < b.test_loss ||
        (a.test_loss == b.test_loss &&
         (a.parameters < b.parameters ||
          (a.parameters == b.parameters && a.config.network.dropout < b.config.network.dropout))))
      report.selected = i;
  }
  return report;
}

HyperoptReport hyperopt_trees(const Dataset& d, const TreeGrid& grid, std::uint64_t seed, Target target) {
  const auto configs = grid.candidates(seed);
  const auto idx = shuffled_indices(d.size(), derive_seed(seed, 0));
  const auto cut = static_cast<std::size_t>(std::floor(static_cast<double>(d.size()) * grid.train_fraction));
  if (cut == 0 || cut == d.size()) throw ValidationError("hyperopt: train/test split leaves an empty part");
  const std::vector<std::size_t> train_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
  const std::vector<std::size_t> test_idx(idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  const Dataset train = d.subset(train_idx);
  const Dataset test = d.subset(test_idx);
  std::optional<FoldAssignment> folds;
  if (grid.cv_folds >= 2) folds = make_folds(train, grid.cv_folds, derive_seed(seed, 1));

  HyperoptReport report;
  report.kind = grid.kind;
  report.candidates.resize(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    auto& c = report.candidates[i];
    c.config = configs[i];
    c.validation_loss = std::numeric_limits<double>::quiet_NaN();
    if (folds) {
      // pooled out-of-fold loss
      double num = 0.0, den = 0.0;
      for (int k = 0; k < folds->folds; ++k) {
        const auto fit_part = train.subset(folds->complement(k));
        const auto held = train.subset(folds->members(k));
        const auto m = train_learner(fit_part, fit_part, configs[i], target);
        const double w = held.total_weight();
        num += cross_entropy_loss(m, held) * w;
        den += w;
      }
      c.validation_loss = num / den;
    }
    const auto model = train_learner(train, train, configs[i], target);
    c.test_loss = cross_entropy_loss(model, test);
    if (c.test_loss < report.candidates[report.selected].test_loss) report.selected = i;
  }
  return report;
}

// ---------------------------------------------------------------- cross-fit

std::vector<ProbQuad> cross_fit_predict(const Dataset& d, const LearnerConfig& cfg, const FoldAssignment& folds) {
  if (folds.folds < 2) throw ValidationError("cross-fit: need at least 2 folds");
  if (folds.fold.size() != d.size()) throw ValidationError("cross-fit: fold assignment does not match dataset");
  std::vector<ProbQuad> out(d.size());
  parallel_for(static_cast<std::size_t>(folds.folds), [&](std::size_t fk) {
    const int k = static_cast<int>(fk);
    const auto held_idx = folds.members(k);
    auto train_idx = folds.complement(k);
    if (held_idx.empty() || train_idx.size() < 2)
      throw ValidationError("cross-fit: fold " + std::to_string(k + 1) + " is too small to train");
    const auto learner = cfg.with_seed(derive_seed(cfg.seed(), fk));
    const Dataset held = d.subset(held_idx);

    std::optional<ClassifierModel> model;
    if (cfg.kind == LearnerKind::Network) {
      const auto order = shuffled_indices(train_idx.size(), derive_seed(folds.seed, fk));
      const auto n_val = static_cast<std::size_t>(std::floor(0.15 * static_cast<double>(train_idx.size())));
      if (n_val == 0 || n_val == train_idx.size())
        throw ValidationError("cross-fit: fold " + std::to_string(k + 1) + " is too small for early stopping");
      std::vector<std::size_t> fit_idx, val_idx;
      for (std::size_t j = 0; j < order.size(); ++j)
        (j < n_val ? val_idx : fit_idx).push_back(train_idx[order[j]]);
      model = train_learner(d.subset(fit_idx), d.subset(val_idx), learner);
    } else {
      const Dataset train = d.subset(train_idx);
      model = train_learner(train, train, learner);
    }
    const auto quads = model->predict_quads(held);
    for (std::size_t j = 0; j < held_idx.size(); ++j) out[held_idx[j]] = quads[j];
  });
  return out;
}

// ---------------------------------------------------------------- importance

std::vector<FeatureLoss> feature_group_importance(const Dataset& d, const LearnerConfig& cfg, const SplitPlan& plan) {
  if (d.schema().feature_count() < 2) throw ValidationError("importance: need at least two features");
  const auto idx = split_indices(d.size(), plan);
  const std::size_t nf = d.schema().feature_count();
  std::vector<FeatureLoss> out(nf + 1);
  parallel_for(nf + 1, [&](std::size_t f) {
    const Dataset data = f == 0 ? d : d.without_feature(f - 1);
    const auto model = train_learner(data.subset(idx.train), data.subset(idx.validation), cfg);
    out[f].feature = f == 0 ? "None" : d.schema().features()[f - 1].name;
    out[f].test_loss = cross_entropy_loss(model, data.subset(idx.test));
  });
  for (auto& row : out) row.delta = row.test_loss - out[0].test_loss;
  out[0].delta = 0.0;
  return out;
}

ImpurityImportance impurity_importance(const ClassifierModel& model) {
  const auto* e = model.ensemble();
  if (!e) throw ValidationError("importance: impurity scores need a forest or boosted model");
  const auto& schema = model.schema();
  ImpurityImportance out;
  for (std::size_t f = 0; f < schema.feature_count(); ++f) {
    const auto& feat = schema.features()[f];
    out.features.push_back(feat.name);
    double total = 0.0;
    for (std::size_t m = 1; m < feat.modalities.size(); ++m) {
      const std::size_t col = schema.block_offset(f) + m - 1;
      out.column_labels.push_back(feat.name + "=" + std::to_string(feat.modalities[m]));
      out.columns.push_back(e->importance[col]);
      total += e->importance[col];
    }
    out.per_feature.push_back(total);
  }
  return out;
}

}  // namespace pcp
