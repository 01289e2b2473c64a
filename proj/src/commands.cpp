#include "pcp/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pcp/classifier.hpp"
#include "pcp/data.hpp"
#include "pcp/error.hpp"
#include "pcp/functionals.hpp"
#include "pcp/hyperopt.hpp"
#include "pcp/inference.hpp"
#include "pcp/stats.hpp"
#include "pcp/synth.hpp"
#include "pcp/tables.hpp"
#include "pcp/weight_model.hpp"
#include "json_keys.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pcp {

namespace {

constexpr int kConfigVersion = 1;
constexpr std::size_t kDensityGrid = 512;

// Seed streams derived from the master seed.
enum Stream : std::uint64_t { kSplit = 1, kFolds, kLearner, kDraws, kSorted, kSimulate, kImportance, kHyperopt };

json read_json_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + what + " " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(what + " " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- config

struct GroupSpec {
  std::string feature;
  GroupScheme::Kind kind = GroupScheme::Kind::ByModality;

  std::string name() const { return feature + (kind == GroupScheme::Kind::ByModality ? " by modality" : " by quartile"); }
};

struct RunConfig {
  json raw;
  fs::path base;
  std::uint64_t seed = 0;
  fs::path output = "out";
  std::optional<fs::path> data;
  std::optional<fs::path> schema;
  LearnerConfig learner;
  SplitPlan split;
  int folds = 5;
  std::vector<GroupSpec> groups;  // empty: every feature
  std::vector<double> levels{0.01, 0.05, 0.10};
  std::size_t draws = 100000;
  std::vector<Statistic> statistics{Statistic::Covariance, Statistic::DebiasedCorrelation};
  Statistic sorted_statistic = Statistic::Covariance;
  SortedGroupsConfig sorted;
  NetworkGrid network_grid;
  TreeGrid forest_grid = TreeGrid::default_forest();
  TreeGrid boosted_grid = TreeGrid::default_boosted();
  NetworkConfig weight_model;
  json simulate;
  std::string fingerprint;

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base / p; }
};

const std::set<std::string> kConfigKeys = {"version", "seed",  "output",  "data",        "schema",       "learner",
                                           "split",   "folds", "groups",  "test",        "sorted",       "hyperopt",
                                           "statistic", "weight_model", "simulate"};

Statistic parse_statistic(const std::string& s) {
  if (s == "covariance") return Statistic::Covariance;
  if (s == "correlation") return Statistic::NaiveCorrelation;
  throw ValidationError("unknown statistic '" + s + "' (expected covariance or correlation)");
}

RunConfig load_config(const CommandOptions& opt) {
  RunConfig c;
  c.raw = read_json_file(opt.config, "config");
  c.base = fs::absolute(opt.config).parent_path();
  const json& j = c.raw;
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  if (!j.contains("version")) throw ValidationError("config: missing 'version'");
  if (j.at("version") != kConfigVersion) throw ValidationError("config: unsupported version " + j.at("version").dump());
  for (const auto& [key, _] : j.items())
    if (!kConfigKeys.count(key)) throw ValidationError("config: unknown key '" + key + "'");

  try {
    c.seed = j.value("seed", std::uint64_t{0});
    if (opt.seed) c.seed = *opt.seed;
    c.output = opt.out ? *opt.out : c.resolve(j.value("output", std::string("out")));
    if (j.contains("data")) c.data = c.resolve(j.at("data").get<std::string>());
    if (j.contains("schema")) c.schema = c.resolve(j.at("schema").get<std::string>());

    if (j.contains("learner")) {
      const auto& l = j.at("learner");
      c.learner = LearnerConfig::from_json(l.is_string() ? read_json_file(c.resolve(l.get<std::string>()), "learner")
                                                         : l);
    }
    if (opt.learner) c.learner.kind = learner_kind_from_string(*opt.learner);
    c.learner = c.learner.with_seed(derive_seed(c.seed, kLearner));

    if (j.contains("split")) {
      const auto& s = j.at("split");
      reject_unknown_keys(s, {"train", "validation", "test"}, "config: split");
      c.split.train = s.value("train", c.split.train);
      c.split.validation = s.value("validation", c.split.validation);
      c.split.test = s.value("test", c.split.test);
    }
    c.split.seed = derive_seed(c.seed, kSplit);
    c.split.validate();
    c.folds = j.value("folds", c.folds);
    if (c.folds < 2) throw ValidationError("config: folds must be >= 2");

    if (j.contains("groups")) {
      for (const auto& g : j.at("groups")) {
        reject_unknown_keys(g, {"feature", "kind"}, "config: groups entry");
        GroupSpec spec;
        spec.feature = g.at("feature").get<std::string>();
        const auto kind = g.value("kind", std::string("modality"));
        if (kind == "modality")
          spec.kind = GroupScheme::Kind::ByModality;
        else if (kind == "quartile")
          spec.kind = GroupScheme::Kind::ByQuartile;
        else
          throw ValidationError("config: group kind must be modality or quartile");
        c.groups.push_back(spec);
      }
    }
    if (j.contains("test")) {
      const auto& t = j.at("test");
      reject_unknown_keys(t, {"levels", "draws"}, "config: test");
      c.levels = t.value("levels", c.levels);
      c.draws = t.value("draws", c.draws);
    }
    if (c.levels.empty()) throw ValidationError("config: test.levels must not be empty");
    for (double a : c.levels)
      if (!(a > 0.0 && a < 1.0)) throw ValidationError("config: test levels must lie in (0, 1)");
    if (c.draws < 10000) throw ValidationError("config: test.draws must be >= 10000");

    if (j.contains("statistic")) c.sorted_statistic = parse_statistic(j.at("statistic").get<std::string>());
    if (opt.statistic) {
      c.sorted_statistic = parse_statistic(*opt.statistic);
      c.statistics = {c.sorted_statistic == Statistic::Covariance ? Statistic::Covariance
                                                                  : Statistic::DebiasedCorrelation};
    }

    if (j.contains("hyperopt")) {
      const auto& h = j.at("hyperopt");
      reject_unknown_keys(h, {"network", "forest", "boosted"}, "config: hyperopt");
      if (h.contains("network")) c.network_grid = NetworkGrid::from_json(h.at("network"));
      if (h.contains("forest")) c.forest_grid = TreeGrid::from_json(h.at("forest"), LearnerKind::Forest);
      if (h.contains("boosted")) c.boosted_grid = TreeGrid::from_json(h.at("boosted"), LearnerKind::Boosted);
    }
    c.network_grid.base.seed = derive_seed(c.seed, kHyperopt);

    auto& s = c.sorted;
    if (j.contains("sorted")) {
      const auto& sj = j.at("sorted");
      reject_unknown_keys(sj, {"groups", "splits", "main_fraction", "hyperopt", "max_redraws"}, "config: sorted");
      s.groups = sj.value("groups", s.groups);
      s.splits = sj.value("splits", s.splits);
      s.main_fraction = sj.value("main_fraction", s.main_fraction);
      s.hyperopt = sj.value("hyperopt", s.hyperopt);
      s.max_redraws = sj.value("max_redraws", s.max_redraws);
    }
    s.statistic = c.sorted_statistic;
    s.learner = c.learner;
    s.network_grid = c.network_grid;
    s.tree_grid = c.learner.kind == LearnerKind::Boosted ? c.boosted_grid : c.forest_grid;
    s.seed = derive_seed(c.seed, kSorted);
    s.validate();

    if (j.contains("weight_model")) c.weight_model = NetworkConfig::from_json(j.at("weight_model"));
    c.weight_model.seed = derive_seed(c.seed, kLearner + 100);
    if (j.contains("simulate")) {
      reject_unknown_keys(j.at("simulate"), {"n", "dgp"}, "config: simulate");
      c.simulate = j.at("simulate");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }

  if (c.data && !fs::exists(*c.data)) throw ValidationError("config: data file not found: " + c.data->string());
  if (c.schema && !fs::exists(*c.schema)) throw ValidationError("config: schema file not found: " + c.schema->string());

  json effective = c.raw;
  effective["seed"] = c.seed;
  effective["learner_kind"] = to_string(c.learner.kind);
  effective["statistic_override"] = opt.statistic.value_or("");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(effective.dump())));
  c.fingerprint = buf;
  return c;
}

SchemaPtr load_schema(const RunConfig& c) {
  return std::make_shared<const CategoricalSchema>(c.schema ? CategoricalSchema::load(*c.schema)
                                                            : CategoricalSchema::default_insurance());
}

Dataset load_data(const RunConfig& c) {
  if (!c.data) throw ValidationError("config: this command needs 'data'");
  return load_csv(*c.data, load_schema(c));
}

// ---------------------------------------------------------------- output

class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw ValidationError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  const fs::path& path() const { return dir_; }

  void write(const std::string& name, const std::string& content) {
    const fs::path p = dir_ / name;
    files_.insert(name);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + p.string());
    out << content;
    if (!out) throw ValidationError("write failed: " + p.string());
  }

  void table(const std::string& stem, const Table& t) {
    write(stem + ".csv", t.to_csv());
    write(stem + ".txt", t.to_text());
  }

  void remove_all() noexcept {
    for (const auto& f : files_) {
      std::error_code ec;
      fs::remove(dir_ / f, ec);
    }
  }

  std::vector<std::string> files() const { return {files_.begin(), files_.end()}; }

 private:
  fs::path dir_;
  std::set<std::string> files_;
};

// ---------------------------------------------------------------- shared pieces

struct Predictions {
  std::vector<ProbQuad> raw;
  std::vector<ProbQuad> cross_fit;
};

Predictions predict_all(const RunConfig& c, const Dataset& d) {
  Predictions p;
  const auto parts = split(d, c.split);
  p.raw = train_learner(parts.train, parts.validation, c.learner).predict_quads(d);
  p.cross_fit = cross_fit_predict(d, c.learner, make_folds(d, c.folds, derive_seed(c.seed, kFolds)));
  return p;
}

std::vector<std::pair<std::string, std::vector<Group>>> group_schemes(const RunConfig& c, const Dataset& d) {
  std::vector<std::pair<std::string, std::vector<Group>>> out;
  if (!c.groups.empty()) {
    for (const auto& g : c.groups) {
      GroupScheme s;
      s.kind = g.kind;
      s.feature = g.feature;
      out.emplace_back(g.name(), partition(d, s));
    }
    return out;
  }
  for (const auto& f : d.schema().features()) {
    GroupScheme s;
    s.feature = f.name;
    s.kind = GroupScheme::Kind::ByModality;
    out.emplace_back(GroupSpec{f.name, s.kind}.name(), partition(d, s));
    if (f.modalities.size() >= 4) {
      s.kind = GroupScheme::Kind::ByQuartile;
      try {
        out.emplace_back(GroupSpec{f.name, s.kind}.name(), partition(d, s));
      } catch (const ValidationError&) {
        // too few observed modalities for quartiles
      }
    }
  }
  return out;
}

std::vector<double> column(const std::vector<PerObsStats>& s, bool correlation) {
  std::vector<double> v(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) v[i] = correlation ? s[i].correlation : s[i].covariance;
  return v;
}

std::string decision(bool rejected) { return rejected ? "rejected" : "not rejected"; }

// Gaussian kernel density on a regular grid, Silverman bandwidth.
Table density_table(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                    std::span<const double> weights) {
  Table t({"series", "x", "density"});
  for (const auto& [name, values] : series) {
    std::vector<double> v, w;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (std::isfinite(values[i])) {
        v.push_back(values[i]);
        w.push_back(weights[i]);
      }
    if (v.empty()) continue;
    const auto s = summarize(v, w);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const double iqr = quantile_type7(sorted, 0.75) - quantile_type7(sorted, 0.25);
    double sw = 0.0, sw2 = 0.0;
    for (double x : w) {
      sw += x;
      sw2 += x * x;
    }
    const double n_eff = sw * sw / sw2;
    double spread = iqr > 0.0 ? std::min(s.dispersion, iqr / 1.34) : s.dispersion;
    if (!(spread > 0.0)) spread = std::max(1e-6, 1e-3 * std::abs(s.mean));
    const double h = 0.9 * spread * std::pow(n_eff, -0.2);
    const double lo = s.min - 3.0 * h, hi = s.max + 3.0 * h;
    const double norm = 1.0 / (sw * h * std::sqrt(2.0 * std::numbers::pi));
    for (std::size_t g = 0; g < kDensityGrid; ++g) {
      const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(kDensityGrid - 1);
      double f = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double u = (x - v[i]) / h;
        f += w[i] * std::exp(-0.5 * u * u);
      }
      t.add_row({name, fmt_exact(x), fmt_exact(f * norm)});
    }
  }
  return t;
}

Table boxplot_table(const Dataset& d, const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  Table t({"series", "feature", "modality", "count", "min", "q1", "median", "q3", "max"});
  const auto& schema = d.schema();
  for (const auto& [name, values] : series) {
    for (std::size_t f = 0; f < schema.feature_count(); ++f) {
      const auto& feat = schema.features()[f];
      std::map<int, std::vector<double>> by_code;
      for (int code : feat.modalities) by_code[code];
      for (std::size_t i = 0; i < d.size(); ++i)
        if (std::isfinite(values[i])) by_code[d[i].covariates[f]].push_back(values[i]);
      for (int code : feat.modalities) {
        auto& v = by_code[code];
        if (v.empty()) {
          t.add_row({name, feat.name, std::to_string(code), "0", "nan", "nan", "nan", "nan", "nan"});
          continue;
        }
        std::sort(v.begin(), v.end());
        t.add_row({name, feat.name, std::to_string(code), std::to_string(v.size()), fmt_exact(v.front()),
                   fmt_exact(quantile_type7(v, 0.25)), fmt_exact(quantile_type7(v, 0.5)),
                   fmt_exact(quantile_type7(v, 0.75)), fmt_exact(v.back())});
      }
    }
  }
  return t;
}

void add_group_rows(Table& t, const std::string& scheme, const std::vector<GroupEstimate>& est) {
  for (const auto& g : est)
    t.add_row({scheme, g.group, to_string(g.kind), fmt_exact(g.estimate), fmt_exact(g.se), fmt(g.effective_size, 8),
               std::to_string(g.records), std::to_string(g.used)});
}

Table group_table() {
  return Table({"scheme", "group", "statistic", "estimate", "se", "effective_size", "records", "used"});
}

// ---------------------------------------------------------------- commands

std::string cmd_simulate(const RunConfig& c, OutputDir& out) {
  if (c.simulate.is_null()) throw ValidationError("config: simulate needs a 'simulate' section");
  const json& s = c.simulate;
  json dgp_json;
  if (!s.contains("dgp")) {
    dgp_json = json::object();
  } else if (s.at("dgp").is_string()) {
    dgp_json = read_json_file(c.resolve(s.at("dgp").get<std::string>()), "dgp");
  } else {
    dgp_json = s.at("dgp");
  }
  if (!dgp_json.contains("schema") && c.schema) dgp_json["schema"] = CategoricalSchema::load(*c.schema).to_json();
  const auto dgp = SyntheticDGP::from_json(dgp_json);
  const auto n = s.value("n", std::size_t{6333});
  if (n < 1) throw ValidationError("simulate: n must be >= 1");
  const auto sample = sample_dataset(dgp, n, derive_seed(c.seed, kSimulate));
  out.write("data.csv", format_csv(sample.data));
  out.write("truth.csv", sample.truth.format_csv(*dgp.schema));
  out.write("schema.json", dgp.schema->to_json().dump(2) + "\n");
  out.write("dgp.json", dgp.to_json().dump(2) + "\n");
  return "simulated " + std::to_string(n) + " records";
}

Table hyperopt_table(const HyperoptReport& rep) {
  std::vector<std::string> header{"candidate"};
  if (rep.kind == LearnerKind::Network)
    header.insert(header.end(), {"depth", "width", "dropout", "parameters", "validation_loss", "test_loss", "best_epoch"});
  else if (rep.kind == LearnerKind::Forest)
    header.insert(header.end(), {"max_depth", "min_leaf", "max_features", "cv_loss", "test_loss"});
  else
    header.insert(header.end(), {"max_depth", "min_leaf", "learning_rate", "cv_loss", "test_loss"});
  header.push_back("selected");
  Table t(header);
  for (std::size_t i = 0; i < rep.candidates.size(); ++i) {
    const auto& c = rep.candidates[i];
    std::vector<std::string> row{std::to_string(i + 1)};
    if (rep.kind == LearnerKind::Network) {
      const auto& n = c.config.network;
      row.insert(row.end(), {std::to_string(n.depth), std::to_string(n.width), fmt(n.dropout, 3),
                             std::to_string(c.parameters), fmt_exact(c.validation_loss), fmt_exact(c.test_loss),
                             std::to_string(c.epochs)});
    } else if (rep.kind == LearnerKind::Forest) {
      const auto& f = c.config.forest;
      row.insert(row.end(), {std::to_string(f.max_depth), std::to_string(f.min_leaf), std::to_string(f.max_features),
                             fmt_exact(c.validation_loss), fmt_exact(c.test_loss)});
    } else {
      const auto& b = c.config.boosted;
      row.insert(row.end(), {std::to_string(b.max_depth), std::to_string(b.min_leaf), fmt(b.learning_rate, 6),
                             fmt_exact(c.validation_loss), fmt_exact(c.test_loss)});
    }
    row.push_back(i == rep.selected ? "yes" : "no");
    t.add_row(row);
  }
  return t;
}

std::string cmd_hyperopt(const RunConfig& c, OutputDir& out) {
  const auto d = load_data(c);
  HyperoptReport rep;
  if (c.learner.kind == LearnerKind::Network) {
    rep = hyperopt_network(d, c.network_grid, c.split);
  } else {
    const TreeGrid& grid = c.learner.kind == LearnerKind::Forest ? c.forest_grid : c.boosted_grid;
    rep = hyperopt_trees(d, grid, derive_seed(c.seed, kHyperopt));
  }
  out.table("hyperopt", hyperopt_table(rep));
  out.write("selected_config.json", rep.selected_config().to_json().dump(2) + "\n");
  return "evaluated " + std::to_string(rep.candidates.size()) + " candidates; selected #" +
         std::to_string(rep.selected + 1);
}

std::string cmd_fit(const RunConfig& c, OutputDir& out) {
  const auto d = load_data(c);
  const auto parts = split(d, c.split);
  const auto model = train_learner(parts.train, parts.validation, c.learner);
  out.write("model.json", model.to_json().dump() + "\n");
  if (c.learner.kind == LearnerKind::Network) out.write("training_report.csv", format_training_report(model.report()));

  Table losses({"target", "constant_loss", "model_loss", "improvement"});
  auto row = [&](const std::string& name, double constant, double fitted) {
    losses.add_row({name, fmt_exact(constant), fmt_exact(fitted), fmt_exact(constant - fitted)});
  };
  const auto schema = d.schema_ptr();
  row("(c,r)", cross_entropy_loss(constant_model(schema, class_frequencies(parts.train, Target::Joint)), parts.test),
      cross_entropy_loss(model, parts.test));
  for (Target t : {Target::Coverage, Target::Claim}) {
    const auto m = train_binary(parts.train, parts.validation, c.learner, t);
    row(to_string(t), cross_entropy_loss(constant_model(schema, class_frequencies(parts.train, t), t), parts.test),
        cross_entropy_loss(m, parts.test));
  }
  const auto wm = train_weight_model(parts.train, parts.validation, c.weight_model);
  const auto wc = train_constant_weight_model(parts.train, parts.validation, c.weight_model);
  row("w", wc.loss(parts.test), wm.loss(parts.test));
  out.write("weight_model.json", wm.to_json().dump() + "\n");
  out.table("losses", losses);
  return "trained " + to_string(c.learner.kind) + " model (" + std::to_string(parts.train.size()) + " training records)";
}

std::string cmd_estimate(const RunConfig& c, OutputDir& out) {
  const auto d = load_data(c);
  const auto pred = predict_all(c, d);
  const auto raw = per_obs_stats(pred.raw);
  const auto cf = per_obs_stats(pred.cross_fit);
  const auto w = d.weights();

  Table obs({"index", "raw_p00", "raw_p01", "raw_p10", "raw_p11", "raw_covariance", "raw_correlation", "cf_p00",
             "cf_p01", "cf_p10", "cf_p11", "cf_covariance", "cf_correlation", "cf_grad1", "cf_grad2", "w"});
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& a = raw[i];
    const auto& b = cf[i];
    obs.add_row({std::to_string(i + 1), fmt_exact(a.quad.p00), fmt_exact(a.quad.p01), fmt_exact(a.quad.p10),
                 fmt_exact(a.quad.p11), fmt_exact(a.covariance), fmt_exact(a.correlation), fmt_exact(b.quad.p00),
                 fmt_exact(b.quad.p01), fmt_exact(b.quad.p10), fmt_exact(b.quad.p11), fmt_exact(b.covariance),
                 fmt_exact(b.correlation), fmt_exact(b.grad1), fmt_exact(b.grad2), fmt_exact(w[i])});
  }
  out.write("per_observation.csv", obs.to_csv());

  const std::vector<std::pair<std::string, std::vector<double>>> series{
      {"raw covariance", column(raw, false)},
      {"raw correlation", column(raw, true)},
      {"cross-fitted covariance", column(cf, false)},
      {"cross-fitted correlation", column(cf, true)}};
  Table summary({"series", "mean", "dispersion", "min", "max", "count"});
  for (const auto& [name, v] : series) {
    const auto s = summarize(v, w);
    summary.add_row({name, fmt(s.mean, 6), fmt(s.dispersion, 6), fmt(s.min, 6), fmt(s.max, 6), std::to_string(s.count)});
  }
  out.table("summary", summary);
  out.write("density.csv", density_table(series, w).to_csv());
  out.write("boxplot.csv", boxplot_table(d, {series[2], series[3]}).to_csv());

  Table groups = group_table();
  for (const auto& [name, grp] : group_schemes(c, d))
    for (Statistic s : {Statistic::Covariance, Statistic::NaiveCorrelation, Statistic::DebiasedCorrelation})
      add_group_rows(groups, name, group_estimates(cf, w, grp, s));
  out.table("groups", groups);
  return "estimated statistics for " + std::to_string(d.size()) + " records";
}

std::string cmd_test_intersection(const RunConfig& c, OutputDir& out) {
  const auto d = load_data(c);
  const auto cf = per_obs_stats(cross_fit_predict(d, c.learner, make_folds(d, c.folds, derive_seed(c.seed, kFolds))));
  const auto w = d.weights();

  Table tests({"scheme", "statistic", "groups", "level", "k0", "k", "test_statistic", "pcp", "ci_lower", "ci_upper",
               "ci_clamped", "selected"});
  Table groups = group_table();
  std::size_t rejections = 0, total = 0;
  std::uint64_t stream = 0;
  for (const auto& [name, grp] : group_schemes(c, d)) {
    for (Statistic s : c.statistics) {
      const auto est = group_estimates(cf, w, grp, s);
      add_group_rows(groups, name, est);
      IntersectionInput in;
      for (const auto& g : est) {
        in.estimates.push_back(g.estimate);
        in.se.push_back(g.se);
      }
      in.n = d.size();
      in.draws = c.draws;
      in.seed = derive_seed(derive_seed(c.seed, kDraws), stream++);
      for (const auto& r : intersection_test(in, c.levels)) {
        std::string sel;
        for (auto l : r.selected) sel += (sel.empty() ? "" : " ") + std::to_string(l + 1);
        tests.add_row({name, to_string(s), std::to_string(est.size()), fmt(r.alpha, 4), fmt(r.k0, 6), fmt(r.k, 6),
                       fmt(r.statistic, 6), decision(r.rejected), fmt(r.ci_lower, 6), fmt(r.ci_upper, 6),
                       r.ci_clamped ? "yes" : "no", sel});
        rejections += r.rejected;
        ++total;
      }
    }
  }
  out.table("intersection", tests);
  out.table("group_estimates", groups);
  return std::to_string(total) + " tests, " + std::to_string(rejections) + " rejections";
}

std::string cmd_test_sorted(const RunConfig& c, OutputDir& out) {
  const auto d = load_data(c);
  const auto res = sorted_groups_run(d, c.sorted);
  std::vector<std::string> header{"split", "seed", "redraws", "statistic", "se", "t", "p_value", "ci_lower", "ci_upper"};
  for (int g = 0; g < c.sorted.groups; ++g) header.push_back("group" + std::to_string(g + 1) + "_statistic");
  for (int g = 0; g < c.sorted.groups; ++g) header.push_back("group" + std::to_string(g + 1) + "_predicted");
  Table splits(header);
  for (std::size_t s = 0; s < res.splits.size(); ++s) {
    const auto& sp = res.splits[s];
    std::vector<std::string> row{std::to_string(s + 1), std::to_string(sp.seed), std::to_string(sp.redraws),
                                 fmt_exact(sp.statistic), fmt_exact(sp.se), fmt_exact(sp.t), fmt_exact(sp.p_value),
                                 fmt_exact(sp.ci_lower), fmt_exact(sp.ci_upper)};
    for (double v : sp.group_statistic) row.push_back(fmt_exact(v));
    for (double v : sp.predicted_mean) row.push_back(fmt_exact(v));
    splits.add_row(row);
  }
  out.write("sorted_splits.csv", splits.to_csv());

  Table median({"quantity", "value"});
  median.add_row({"statistic", to_string(c.sorted.statistic == Statistic::Covariance ? Statistic::Covariance
                                                                                      : Statistic::NaiveCorrelation)});
  median.add_row({"splits", std::to_string(res.splits.size())});
  median.add_row({"estimate (group 1)", fmt(res.statistic, 6)});
  median.add_row({"standard error", fmt(res.se, 6)});
  median.add_row({"test statistic", fmt(res.t, 6)});
  median.add_row({"p-value (one-sided)", fmt(res.p_value, 6)});
  median.add_row({"ci lower", fmt(res.ci_lower, 6)});
  median.add_row({"ci upper", fmt(res.ci_upper, 6)});
  for (std::size_t g = 0; g < res.group_statistic.size(); ++g)
    median.add_row({"group " + std::to_string(g + 1) + " estimate", fmt(res.group_statistic[g], 6)});
  out.table("sorted_median", median);
  return "median test statistic " + fmt(res.t, 4) + ", p-value " + fmt(res.p_value, 4);
}

std::string cmd_importance(const RunConfig& c, OutputDir& out) {
  const auto d = load_data(c);
  Table loss({"learner", "omitted", "test_loss", "delta"});
  Table impurity({"learner", "feature", "importance"});
  Table columns({"learner", "column", "importance"});
  const auto parts_idx = split_indices(d.size(), c.split);
  for (LearnerKind kind : {LearnerKind::Network, LearnerKind::Forest, LearnerKind::Boosted}) {
    LearnerConfig cfg = c.learner;
    cfg.kind = kind;
    cfg = cfg.with_seed(derive_seed(c.seed, kImportance));
    for (const auto& row : feature_group_importance(d, cfg, c.split))
      loss.add_row({to_string(kind), row.feature, fmt_exact(row.test_loss), fmt_exact(row.delta)});
    if (kind == LearnerKind::Network) continue;
    const auto model = train_learner(d.subset(parts_idx.train), d.subset(parts_idx.validation), cfg);
    const auto imp = impurity_importance(model);
    for (std::size_t f = 0; f < imp.features.size(); ++f)
      impurity.add_row({to_string(kind), imp.features[f], fmt_exact(imp.per_feature[f])});
    for (std::size_t k = 0; k < imp.columns.size(); ++k)
      columns.add_row({to_string(kind), imp.column_labels[k], fmt_exact(imp.columns[k])});
  }
  out.table("importance_loss", loss);
  out.table("importance_impurity", impurity);
  out.write("importance_columns.csv", columns.to_csv());
  return "importance computed for 3 learners";
}

std::string cmd_report(const RunConfig&, OutputDir& out) {
  std::vector<fs::path> manifests;
  for (const auto& entry : fs::directory_iterator(out.path())) {
    const auto name = entry.path().filename().string();
    if (name.starts_with("manifest_") && name.ends_with(".json") && name != "manifest_report.json")
      manifests.push_back(entry.path());
  }
  std::sort(manifests.begin(), manifests.end());
  if (manifests.empty()) throw ValidationError("report: no command outputs found in " + out.path().string());
  std::ostringstream text;
  json index = json::object();
  for (const auto& m : manifests) {
    const auto j = read_json_file(m, "manifest");
    const auto cmd = j.at("command").get<std::string>();
    index[cmd] = {{"config_fingerprint", j.at("config_fingerprint")}, {"files", j.at("files")}};
    text << "== " << cmd << " ==\n\n";
    for (const auto& f : j.at("files")) {
      const auto name = f.get<std::string>();
      if (!name.ends_with(".txt")) continue;
      std::ifstream in(out.path() / name);
      if (!in) throw ValidationError("report: missing file " + name + " listed by " + m.filename().string());
      text << "-- " << name << " --\n" << in.rdbuf() << '\n';
    }
  }
  out.write("report.txt", text.str());
  out.write("report.json", index.dump(2) + "\n");
  return "report assembled from " + std::to_string(manifests.size()) + " command outputs";
}

using Handler = std::string (*)(const RunConfig&, OutputDir&);

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> h{
      {"simulate", cmd_simulate},           {"hyperopt", cmd_hyperopt},       {"fit", cmd_fit},
      {"estimate", cmd_estimate},           {"test-intersection", cmd_test_intersection},
      {"test-sorted", cmd_test_sorted},     {"importance", cmd_importance},   {"report", cmd_report}};
  return h;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"simulate",    "hyperopt",          "fit",        "estimate",
                                              "test-intersection", "test-sorted", "importance", "report"};
  return names;
}

CommandResult run_command(const CommandOptions& options) {
  const auto it = handlers().find(options.command);
  if (it == handlers().end()) throw ValidationError("unknown command '" + options.command + "'");
  const auto start = std::chrono::steady_clock::now();
  const RunConfig config = load_config(options);
  OutputDir out(config.output);
  try {
    CommandResult result;
    result.summary = it->second(config, out);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string manifest_name = "manifest_" + options.command + ".json";
    json manifest = {{"version", 1},
                     {"artifact_version", kArtifactVersion},
                     {"command", options.command},
                     {"config_fingerprint", config.fingerprint},
                     {"seeds", {{"master", config.seed}}},
                     {"files", out.files()},
                     {"timings", {{"total_seconds", seconds}}}};
    out.write(manifest_name, manifest.dump(2) + "\n");
    result.output_dir = out.path();
    result.files = out.files();
    return result;
  } catch (...) {
    out.remove_all();
    throw;
  }
}

}  // namespace pcp
