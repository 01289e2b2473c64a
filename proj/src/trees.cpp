#include "pcp/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pcp/error.hpp"
#include "json_keys.hpp"
#include "pcp/network.hpp"
#include "pcp/stats.hpp"

namespace pcp {

namespace {

constexpr double kMinGain = 1e-12;

double entropy_times_weight(const double* counts, std::size_t classes, double total) {
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (std::size_t k = 0; k < classes; ++k) {
    if (counts[k] > 0.0) h -= counts[k] * std::log(counts[k] / total);
  }
  return h;
}

// Sample row inside a tree: design row index plus its training weight.
struct Member {
  std::uint32_t row;
  double weight;
};

void split_members(const BinaryDesign& x, std::vector<Member>& members, std::size_t col,
                   std::vector<Member>& left, std::vector<Member>& right) {
  left.clear();
  right.clear();
  for (const auto& m : members) (x.at(m.row, col) ? right : left).push_back(m);
}

// ------------------------------------------------------------ classification

struct ClassificationGrower {
  const BinaryDesign& x;
  const std::vector<int>& labels;
  std::size_t classes;
  int max_depth;
  int min_leaf;
  int max_features;
  Rng& rng;
  std::vector<double>& importance;
  double root_weight = 1.0;
  Tree tree;

  std::vector<double> col_sums;    // columns x classes, weight with x = 1
  std::vector<double> col_counts;  // member count with x = 1
  std::vector<std::size_t> pool;

  int grow(std::vector<Member> members, int depth) {
    std::vector<double> totals(classes, 0.0);
    double count = 0.0;
    for (const auto& m : members) {
      totals[static_cast<std::size_t>(labels[m.row])] += m.weight;
      count += m.weight;
    }
    const double total = std::accumulate(totals.begin(), totals.end(), 0.0);
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    int best_col = -1;
    double best_gain = kMinGain;
    const double parent_h = entropy_times_weight(totals.data(), classes, total);
    if (depth < max_depth && parent_h > 0.0 && count >= 2.0 * min_leaf) {
      const std::size_t cols = x.columns();
      col_sums.assign(cols * classes, 0.0);
      col_counts.assign(cols, 0.0);
      for (const auto& m : members) {
        const auto y = static_cast<std::size_t>(labels[m.row]);
        for (auto c : x.active(m.row)) {
          col_sums[c * classes + y] += m.weight;
          col_counts[c] += m.weight;
        }
      }
      // partial Fisher-Yates draw of candidate columns
      const std::size_t draw = std::min<std::size_t>(static_cast<std::size_t>(max_features), cols);
      for (std::size_t k = 0; k < draw; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, cols - 1);
        std::swap(pool[k], pool[pick(rng)]);
      }
      std::vector<double> left(classes);
      for (std::size_t k = 0; k < draw; ++k) {
        const std::size_t c = pool[k];
        const double n_right = col_counts[c];
        const double n_left = count - n_right;
        if (n_right < min_leaf || n_left < min_leaf) continue;
        const double* right = &col_sums[c * classes];
        double w_right = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
          left[j] = totals[j] - right[j];
          w_right += right[j];
        }
        const double gain = parent_h - entropy_times_weight(right, classes, w_right) -
                            entropy_times_weight(left.data(), classes, total - w_right);
        if (gain > best_gain) {
          best_gain = gain;
          best_col = static_cast<int>(c);
        }
      }
    }

    if (best_col < 0) {
      std::vector<double> dist(classes);
      for (std::size_t k = 0; k < classes; ++k) dist[k] = totals[k] / total;
      tree.nodes[static_cast<std::size_t>(id)].value = std::move(dist);
      return id;
    }
    importance[static_cast<std::size_t>(best_col) + 1] += best_gain / root_weight;
    std::vector<Member> l, r;
    split_members(x, members, static_cast<std::size_t>(best_col), l, r);
    members.clear();
    members.shrink_to_fit();
    const int left_id = grow(std::move(l), depth + 1);
    const int right_id = grow(std::move(r), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.column = best_col + 1;
    node.left = left_id;
    node.right = right_id;
    return id;
  }
};

// ------------------------------------------------------------ regression

struct RegressionGrower {
  const BinaryDesign& x;
  const std::vector<double>& target;   // negative gradient
  const std::vector<double>& hessian;  // |g| (1 - |g|)
  double leaf_scale;                   // (K - 1) / K
  int max_depth;
  int min_leaf;
  std::vector<double>& importance;
  Tree tree;

  std::vector<double> col_s, col_w, col_n;

  int grow(std::vector<Member> members, int depth) {
    double s = 0.0, w = 0.0, h = 0.0;
    for (const auto& m : members) {
      s += m.weight * target[m.row];
      w += m.weight;
      h += m.weight * hessian[m.row];
    }
    const auto n = static_cast<double>(members.size());
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    int best_col = -1;
    double best_gain = kMinGain;
    if (depth < max_depth && n >= 2.0 * min_leaf && w > 0.0) {
      const std::size_t cols = x.columns();
      col_s.assign(cols, 0.0);
      col_w.assign(cols, 0.0);
      col_n.assign(cols, 0.0);
      for (const auto& m : members) {
        const double ws = m.weight * target[m.row];
        for (auto c : x.active(m.row)) {
          col_s[c] += ws;
          col_w[c] += m.weight;
          col_n[c] += 1.0;
        }
      }
      const double parent = s * s / w;
      for (std::size_t c = 0; c < cols; ++c) {
        if (col_n[c] < min_leaf || n - col_n[c] < min_leaf) continue;
        const double wl = w - col_w[c];
        if (col_w[c] <= 0.0 || wl <= 0.0) continue;
        const double sl = s - col_s[c];
        const double gain = col_s[c] * col_s[c] / col_w[c] + sl * sl / wl - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_col = static_cast<int>(c);
        }
      }
    }

    if (best_col < 0) {
      tree.nodes[static_cast<std::size_t>(id)].value = {h > 1e-150 ? leaf_scale * s / h : 0.0};
      return id;
    }
    importance[static_cast<std::size_t>(best_col) + 1] += best_gain;
    std::vector<Member> l, r;
    split_members(x, members, static_cast<std::size_t>(best_col), l, r);
    members.clear();
    members.shrink_to_fit();
    const int left_id = grow(std::move(l), depth + 1);
    const int right_id = grow(std::move(r), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.column = best_col + 1;
    node.left = left_id;
    node.right = right_id;
    return id;
  }
};

void check_inputs(const DesignMatrix& x, const std::vector<int>& labels, const std::vector<double>& weights,
                  std::size_t classes) {
  if (x.rows() == 0) throw ValidationError("trees: empty training data");
  if (labels.size() != static_cast<std::size_t>(x.rows()) || weights.size() != labels.size())
    throw ValidationError("trees: labels and weights must have one entry per row");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw ValidationError("trees: label out of range");
}

void normalize(std::vector<double>& v) {
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  if (s > 0.0)
    for (double& e : v) e /= s;
}

}  // namespace

// ---------------------------------------------------------------- configs

void ForestConfig::validate() const {
  if (trees < 1) throw ValidationError("forest: trees must be >= 1");
  if (max_depth < 1) throw ValidationError("forest: max_depth must be >= 1");
  if (min_leaf < 1) throw ValidationError("forest: min_leaf must be >= 1");
  if (max_features < 1) throw ValidationError("forest: max_features must be >= 1");
}

nlohmann::json ForestConfig::to_json() const {
  return {{"trees", trees}, {"max_depth", max_depth}, {"min_leaf", min_leaf}, {"max_features", max_features},
          {"seed", seed}};
}

ForestConfig ForestConfig::from_json(const nlohmann::json& j) { return from_json(j, ForestConfig{}); }

ForestConfig ForestConfig::from_json(const nlohmann::json& j, const ForestConfig& d) {
  reject_unknown_keys(j, {"trees", "max_depth", "min_leaf", "max_features", "seed"}, "forest config");
  ForestConfig c;
  try {
    c.trees = j.value("trees", d.trees);
    c.max_depth = j.value("max_depth", d.max_depth);
    c.min_leaf = j.value("min_leaf", d.min_leaf);
    c.max_features = j.value("max_features", d.max_features);
    c.seed = j.value("seed", d.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("forest config: ") + e.what());
  }
  c.validate();
  return c;
}

void BoostConfig::validate() const {
  if (rounds < 1) throw ValidationError("boosted: rounds must be >= 1");
  if (max_depth < 1) throw ValidationError("boosted: max_depth must be >= 1");
  if (min_leaf < 1) throw ValidationError("boosted: min_leaf must be >= 1");
  if (!(learning_rate >= 0.0)) throw ValidationError("boosted: learning_rate must be >= 0");
}

nlohmann::json BoostConfig::to_json() const {
  return {{"rounds", rounds}, {"max_depth", max_depth}, {"min_leaf", min_leaf}, {"learning_rate", learning_rate},
          {"seed", seed}};
}

BoostConfig BoostConfig::from_json(const nlohmann::json& j) { return from_json(j, BoostConfig{}); }

BoostConfig BoostConfig::from_json(const nlohmann::json& j, const BoostConfig& d) {
  reject_unknown_keys(j, {"rounds", "max_depth", "min_leaf", "learning_rate", "seed"}, "boosted config");
  BoostConfig c;
  try {
    c.rounds = j.value("rounds", d.rounds);
    c.max_depth = j.value("max_depth", d.max_depth);
    c.min_leaf = j.value("min_leaf", d.min_leaf);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.seed = j.value("seed", d.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("boosted config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- design

BinaryDesign::BinaryDesign(const DesignMatrix& x)
    : rows_(static_cast<std::size_t>(x.rows())), cols_(x.cols() > 0 ? static_cast<std::size_t>(x.cols() - 1) : 0) {
  dense_.assign(rows_ * cols_, 0);
  active_.resize(rows_);
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t c = 0; c < cols_; ++c) {
      if (x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c + 1)) != 0.0) {
        dense_[i * cols_ + c] = 1;
        active_[i].push_back(static_cast<std::uint32_t>(c));
      }
    }
  }
}

// ---------------------------------------------------------------- trees

const std::vector<double>& Tree::leaf(const BinaryDesign& x, std::size_t row) const {
  std::size_t id = 0;
  while (nodes[id].column >= 0) {
    const bool one = x.at(row, static_cast<std::size_t>(nodes[id].column - 1));
    id = static_cast<std::size_t>(one ? nodes[id].right : nodes[id].left);
  }
  return nodes[id].value;
}

nlohmann::json Tree::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& n : nodes) {
    if (n.column < 0)
      arr.push_back({{"value", n.value}});
    else
      arr.push_back({{"column", n.column}, {"left", n.left}, {"right", n.right}});
  }
  return arr;
}

Tree Tree::from_json(const nlohmann::json& j) {
  Tree t;
  for (const auto& nj : j) {
    TreeNode n;
    if (nj.contains("column")) {
      n.column = nj.at("column").get<int>();
      n.left = nj.at("left").get<int>();
      n.right = nj.at("right").get<int>();
    } else {
      n.value = nj.at("value").get<std::vector<double>>();
    }
    t.nodes.push_back(std::move(n));
  }
  const auto count = static_cast<int>(t.nodes.size());
  for (const auto& n : t.nodes) {
    if (n.column >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count))
      throw ValidationError("model: malformed tree");
  }
  if (t.nodes.empty()) throw ValidationError("model: empty tree");
  return t;
}

Eigen::MatrixXd TreeEnsemble::predict(const DesignMatrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != width) throw ValidationError("trees: design width mismatch");
  const BinaryDesign bx(x);
  const auto n = static_cast<Eigen::Index>(bx.rows());
  const auto k = static_cast<Eigen::Index>(classes);
  if (kind == Kind::Forest) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, k);
    for (const auto& t : trees) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& v = t.leaf(bx, static_cast<std::size_t>(i));
        for (Eigen::Index c = 0; c < k; ++c) p(i, c) += v[static_cast<std::size_t>(c)];
      }
    }
    p /= static_cast<double>(trees.size());
    return p;
  }
  Eigen::MatrixXd scores(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < k; ++c) scores(i, c) = initial_scores[static_cast<std::size_t>(c)];
  for (std::size_t t = 0; t < trees.size(); ++t) {
    const auto c = static_cast<Eigen::Index>(t % classes);
    for (Eigen::Index i = 0; i < n; ++i)
      scores(i, c) += learning_rate * trees[t].leaf(bx, static_cast<std::size_t>(i))[0];
  }
  return softmax_rows(scores);
}

nlohmann::json TreeEnsemble::to_json() const {
  nlohmann::json tj = nlohmann::json::array();
  for (const auto& t : trees) tj.push_back(t.to_json());
  return {{"ensemble", kind == Kind::Forest ? "forest" : "boosted"},
          {"classes", classes},
          {"width", width},
          {"initial_scores", initial_scores},
          {"learning_rate", learning_rate},
          {"importance", importance},
          {"trees", tj}};
}

TreeEnsemble TreeEnsemble::from_json(const nlohmann::json& j) {
  TreeEnsemble e;
  const auto kind = j.at("ensemble").get<std::string>();
  if (kind != "forest" && kind != "boosted") throw ValidationError("model: unknown ensemble kind " + kind);
  e.kind = kind == "forest" ? Kind::Forest : Kind::Boosted;
  e.classes = j.at("classes").get<std::size_t>();
  e.width = j.at("width").get<std::size_t>();
  e.initial_scores = j.at("initial_scores").get<std::vector<double>>();
  e.learning_rate = j.at("learning_rate").get<double>();
  e.importance = j.at("importance").get<std::vector<double>>();
  for (const auto& tj : j.at("trees")) e.trees.push_back(Tree::from_json(tj));
  if (e.trees.empty()) throw ValidationError("model: ensemble without trees");
  if (e.kind == Kind::Boosted && e.initial_scores.size() != e.classes)
    throw ValidationError("model: boosted ensemble needs one initial score per class");
  return e;
}

// ---------------------------------------------------------------- training

TreeEnsemble train_forest(const DesignMatrix& x, const std::vector<int>& labels, const std::vector<double>& weights,
                          std::size_t classes, const ForestConfig& cfg) {
  cfg.validate();
  check_inputs(x, labels, weights, classes);
  const BinaryDesign bx(x);
  const std::size_t n = bx.rows();

  TreeEnsemble ens;
  ens.kind = TreeEnsemble::Kind::Forest;
  ens.classes = classes;
  ens.width = static_cast<std::size_t>(x.cols());
  ens.trees.resize(static_cast<std::size_t>(cfg.trees));
  std::vector<std::vector<double>> importances(ens.trees.size(), std::vector<double>(ens.width, 0.0));

  parallel_for(ens.trees.size(), [&](std::size_t t) {
    Rng rng(derive_seed(cfg.seed, t));
    std::discrete_distribution<std::size_t> draw(weights.begin(), weights.end());
    std::vector<double> counts(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) counts[draw(rng)] += 1.0;
    std::vector<Member> members;
    for (std::size_t i = 0; i < n; ++i)
      if (counts[i] > 0.0) members.push_back({static_cast<std::uint32_t>(i), counts[i]});

    ClassificationGrower g{bx, labels, classes, cfg.max_depth, cfg.min_leaf, cfg.max_features, rng, importances[t]};
    g.root_weight = static_cast<double>(n);
    g.pool.resize(bx.columns());
    std::iota(g.pool.begin(), g.pool.end(), std::size_t{0});
    g.grow(std::move(members), 0);
    ens.trees[t] = std::move(g.tree);
  });

  ens.importance.assign(ens.width, 0.0);
  for (const auto& imp : importances)
    for (std::size_t c = 0; c < ens.width; ++c) ens.importance[c] += imp[c];
  normalize(ens.importance);
  return ens;
}

TreeEnsemble train_boosted(const DesignMatrix& x, const std::vector<int>& labels, const std::vector<double>& weights,
                           std::size_t classes, const BoostConfig& cfg) {
  cfg.validate();
  check_inputs(x, labels, weights, classes);
  const BinaryDesign bx(x);
  const std::size_t n = bx.rows();

  TreeEnsemble ens;
  ens.kind = TreeEnsemble::Kind::Boosted;
  ens.classes = classes;
  ens.width = static_cast<std::size_t>(x.cols());
  ens.learning_rate = cfg.learning_rate;
  ens.importance.assign(ens.width, 0.0);

  // constant model: log of the weighted class frequencies
  std::vector<double> freq(classes, 0.0);
  for (std::size_t i = 0; i < n; ++i) freq[static_cast<std::size_t>(labels[i])] += weights[i];
  normalize(freq);
  ens.initial_scores.resize(classes);
  for (std::size_t k = 0; k < classes; ++k) ens.initial_scores[k] = std::log(std::max(freq[k], 1e-12));

  Eigen::MatrixXd scores(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(classes));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < classes; ++k)
      scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = ens.initial_scores[k];

  std::vector<Member> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = {static_cast<std::uint32_t>(i), weights[i]};
  const double leaf_scale = static_cast<double>(classes - 1) / static_cast<double>(classes);
  std::vector<double> target(n), hessian(n);

  for (int round = 0; round < cfg.rounds; ++round) {
    const Eigen::MatrixXd p = softmax_rows(scores);
    std::vector<Tree> round_trees(classes);
    for (std::size_t k = 0; k < classes; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const double pk = p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        const double g = (labels[i] == static_cast<int>(k) ? 1.0 : 0.0) - pk;
        target[i] = g;
        hessian[i] = std::abs(g) * (1.0 - std::abs(g));
      }
      RegressionGrower g{bx, target, hessian, leaf_scale, cfg.max_depth, cfg.min_leaf, ens.importance};
      g.grow(all, 0);
      round_trees[k] = std::move(g.tree);
    }
    for (std::size_t k = 0; k < classes; ++k) {
      for (std::size_t i = 0; i < n; ++i)
        scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) +=
            cfg.learning_rate * round_trees[k].leaf(bx, i)[0];
      ens.trees.push_back(std::move(round_trees[k]));
    }
  }
  normalize(ens.importance);
  return ens;
}

}  // namespace pcp
