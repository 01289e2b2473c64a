#include "pcp/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pcp/error.hpp"
#include "json_keys.hpp"

namespace pcp {

namespace {

constexpr int kModelFormatVersion = 1;
constexpr double kClip = 1e-12;

TrainingTargets make_targets(const Dataset& d, Target target) {
  TrainingTargets t;
  t.labels = class_labels(d, target);
  t.weights = d.weights();
  return t;
}

nlohmann::json report_to_json(const TrainingReport& r) {
  return {{"train_loss", r.train_loss},
          {"validation_loss", r.validation_loss},
          {"best_epoch", r.best_epoch},
          {"epochs_run", r.epochs_run},
          {"best_validation_loss", r.best_validation_loss}};
}

TrainingReport report_from_json(const nlohmann::json& j) {
  TrainingReport r;
  if (j.is_null()) return r;
  r.train_loss = j.value("train_loss", std::vector<double>{});
  r.validation_loss = j.value("validation_loss", std::vector<double>{});
  r.best_epoch = j.value("best_epoch", 0);
  r.epochs_run = j.value("epochs_run", 0);
  r.best_validation_loss = j.value("best_validation_loss", 0.0);
  return r;
}

}  // namespace

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::Network: return "network";
    case LearnerKind::Forest: return "forest";
    default: return "boosted";
  }
}

LearnerKind learner_kind_from_string(const std::string& name) {
  if (name == "network") return LearnerKind::Network;
  if (name == "forest") return LearnerKind::Forest;
  if (name == "boosted") return LearnerKind::Boosted;
  throw ValidationError("unknown learner '" + name + "' (expected network, forest or boosted)");
}

std::string to_string(Target target) {
  switch (target) {
    case Target::Joint: return "joint";
    case Target::Coverage: return "c";
    default: return "r";
  }
}

Target target_from_string(const std::string& name) {
  if (name == "joint") return Target::Joint;
  if (name == "c") return Target::Coverage;
  if (name == "r") return Target::Claim;
  throw ValidationError("unknown target '" + name + "' (expected joint, c or r)");
}

std::size_t class_count(Target target) { return target == Target::Joint ? 4 : 2; }

std::vector<int> class_labels(const Dataset& d, Target target) {
  std::vector<int> y(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& rec = d[i];
    y[i] = target == Target::Joint ? rec.outcome_class() : target == Target::Coverage ? rec.c : rec.r;
  }
  return y;
}

// ---------------------------------------------------------------- config

std::uint64_t LearnerConfig::seed() const {
  switch (kind) {
    case LearnerKind::Network: return network.seed;
    case LearnerKind::Forest: return forest.seed;
    default: return boosted.seed;
  }
}

LearnerConfig LearnerConfig::with_seed(std::uint64_t s) const {
  LearnerConfig c = *this;
  c.network.seed = s;
  c.forest.seed = s;
  c.boosted.seed = s;
  return c;
}

nlohmann::json LearnerConfig::to_json() const {
  nlohmann::json j = {{"kind", to_string(kind)}};
  switch (kind) {
    case LearnerKind::Network: j["network"] = network.to_json(); break;
    case LearnerKind::Forest: j["forest"] = forest.to_json(); break;
    case LearnerKind::Boosted: j["boosted"] = boosted.to_json(); break;
  }
  return j;
}

LearnerConfig LearnerConfig::from_json(const nlohmann::json& j) {
  LearnerConfig c;
  reject_unknown_keys(j, {"kind", "network", "forest", "boosted"}, "learner config");
  c.kind = learner_kind_from_string(j.value("kind", std::string("network")));
  if (j.contains("network")) c.network = NetworkConfig::from_json(j.at("network"));
  if (j.contains("forest")) c.forest = ForestConfig::from_json(j.at("forest"));
  if (j.contains("boosted")) c.boosted = BoostConfig::from_json(j.at("boosted"));
  return c;
}

// ---------------------------------------------------------------- model

ClassifierModel::ClassifierModel(LearnerKind kind, Target target, SchemaPtr schema, nlohmann::json config,
                                 std::variant<Mlp, TreeEnsemble> params, TrainingReport report)
    : kind_(kind),
      target_(target),
      schema_(std::move(schema)),
      config_(std::move(config)),
      params_(std::move(params)),
      report_(std::move(report)) {
  if (!schema_) throw ValidationError("model: missing schema");
  const bool is_net = std::holds_alternative<Mlp>(params_);
  if (is_net != (kind_ == LearnerKind::Network)) throw ValidationError("model: parameters do not match kind");
  const std::size_t width = schema_->design_width();
  if (const auto* net = network()) {
    if (net->inputs() != width || net->outputs() != classes())
      throw ValidationError("model: network shape does not match schema and target");
  } else {
    const auto& e = *ensemble();
    if (e.width != width || e.classes != classes())
      throw ValidationError("model: ensemble shape does not match schema and target");
  }
}

void ClassifierModel::check_schema(const CategoricalSchema& schema) const {
  if (!(schema == *schema_)) throw ValidationError("model: dataset schema does not match the model's schema");
}

Eigen::MatrixXd ClassifierModel::predict_proba(const Dataset& d) const {
  check_schema(d.schema());
  return predict_proba(one_hot_encode(d));
}

Eigen::MatrixXd ClassifierModel::predict_proba(const DesignMatrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != schema_->design_width())
    throw ValidationError("model: design width mismatch");
  if (const auto* net = network()) return softmax_rows(net->logits(x));
  return ensemble()->predict(x);
}

std::vector<ProbQuad> ClassifierModel::predict_quads(const Dataset& d) const {
  if (target_ != Target::Joint) throw ValidationError("model: quads need a 4-class model");
  const Eigen::MatrixXd p = predict_proba(d);
  std::vector<ProbQuad> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out[i] = {p(r, 0), p(r, 1), p(r, 2), p(r, 3)};
  }
  return out;
}

nlohmann::json ClassifierModel::to_json() const {
  nlohmann::json params = network() ? network()->to_json() : ensemble()->to_json();
  return {{"format", "pcp-model"},
          {"version", kModelFormatVersion},
          {"kind", to_string(kind_)},
          {"target", to_string(target_)},
          {"classes", classes()},
          {"config", config_},
          {"schema_fingerprint", schema_->fingerprint()},
          {"schema", schema_->to_json()},
          {"parameters", params},
          {"report", report_to_json(report_)}};
}

void ClassifierModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write model file " + path.string());
  out << to_json().dump() << '\n';
}

ClassifierModel ClassifierModel::from_json(const nlohmann::json& j, const SchemaPtr& schema) {
  try {
    if (j.value("format", std::string()) != "pcp-model") throw ValidationError("model: not a model file");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw ValidationError("model: unsupported version " + j.at("version").dump());
    if (j.at("schema_fingerprint").get<std::string>() != schema->fingerprint())
      throw ValidationError("model: schema fingerprint mismatch");
    const auto kind = learner_kind_from_string(j.at("kind").get<std::string>());
    const auto target = target_from_string(j.at("target").get<std::string>());
    std::variant<Mlp, TreeEnsemble> params;
    if (kind == LearnerKind::Network)
      params = Mlp::from_json(j.at("parameters"));
    else
      params = TreeEnsemble::from_json(j.at("parameters"));
    return ClassifierModel(kind, target, schema, j.value("config", nlohmann::json::object()), std::move(params),
                           report_from_json(j.value("report", nlohmann::json())));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model: malformed file: ") + e.what());
  }
}

namespace {
nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model file " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("model file " + path.string() + ": " + e.what());
  }
}
}  // namespace

ClassifierModel ClassifierModel::load(const std::filesystem::path& path, const SchemaPtr& schema) {
  return from_json(read_json(path), schema);
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& path) {
  const auto j = read_json(path);
  if (!j.contains("schema")) throw ValidationError("model: file carries no schema");
  auto schema = std::make_shared<const CategoricalSchema>(CategoricalSchema::from_json(j.at("schema")));
  return from_json(j, schema);
}

// ---------------------------------------------------------------- losses

double cross_entropy_loss(const Eigen::MatrixXd& probs, std::span<const int> labels, std::span<const double> weights) {
  if (labels.empty()) throw ValidationError("loss: empty data");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    num -= weights[i] * std::log(std::max(probs(static_cast<Eigen::Index>(i), labels[i]), kClip));
    den += weights[i];
  }
  return num / den;
}

double cross_entropy_loss(const ClassifierModel& model, const Dataset& d) {
  const auto labels = class_labels(d, model.target());
  const auto w = d.weights();
  return cross_entropy_loss(model.predict_proba(d), labels, w);
}

std::vector<double> class_frequencies(const Dataset& d, Target target) {
  std::vector<double> f(class_count(target), 0.0);
  const auto labels = class_labels(d, target);
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    f[static_cast<std::size_t>(labels[i])] += d[i].w;
    total += d[i].w;
  }
  for (double& v : f) v /= total;
  return f;
}

ClassifierModel constant_model(SchemaPtr schema, const std::vector<double>& freq, Target target) {
  if (freq.size() != class_count(target)) throw ValidationError("constant model: wrong class count");
  Rng rng(0);
  Mlp net(schema->design_width(), freq.size(), 0, 1, rng);
  auto& w = net.mutable_layers().front().weights;
  w.setZero();
  for (std::size_t k = 0; k < freq.size(); ++k) w(0, static_cast<Eigen::Index>(k)) = std::log(std::max(freq[k], kClip));
  NetworkConfig cfg;
  return ClassifierModel(LearnerKind::Network, target, std::move(schema), cfg.to_json(), std::move(net));
}

// ---------------------------------------------------------------- training

ClassifierModel train_network(const Dataset& train, const Dataset& validation, const NetworkConfig& cfg,
                              Target target) {
  if (!(train.schema() == validation.schema())) throw ValidationError("train: datasets use different schemas");
  auto fit = train_mlp(one_hot_encode(train), make_targets(train, target), one_hot_encode(validation),
                       make_targets(validation, target), class_count(target), OutputHead::Softmax, cfg);
  return ClassifierModel(LearnerKind::Network, target, train.schema_ptr(), cfg.to_json(), std::move(fit.net),
                         std::move(fit.report));
}

ClassifierModel train_forest(const Dataset& d, const ForestConfig& cfg, Target target) {
  auto e = train_forest(one_hot_encode(d), class_labels(d, target), d.weights(), class_count(target), cfg);
  return ClassifierModel(LearnerKind::Forest, target, d.schema_ptr(), cfg.to_json(), std::move(e));
}

ClassifierModel train_boosted(const Dataset& d, const BoostConfig& cfg, Target target) {
  auto e = train_boosted(one_hot_encode(d), class_labels(d, target), d.weights(), class_count(target), cfg);
  return ClassifierModel(LearnerKind::Boosted, target, d.schema_ptr(), cfg.to_json(), std::move(e));
}

ClassifierModel train_learner(const Dataset& train, const Dataset& validation, const LearnerConfig& cfg,
                              Target target) {
  switch (cfg.kind) {
    case LearnerKind::Network: return train_network(train, validation, cfg.network, target);
    case LearnerKind::Forest: return train_forest(train, cfg.forest, target);
    default: return train_boosted(train, cfg.boosted, target);
  }
}

ClassifierModel train_binary(const Dataset& train, const Dataset& validation, const LearnerConfig& cfg,
                             Target target) {
  if (target == Target::Joint) throw ValidationError("train_binary: target must be c or r");
  return train_learner(train, validation, cfg, target);
}

std::string format_training_report(const TrainingReport& report) {
  std::ostringstream out;
  out << "epoch,train_loss,validation_loss\n";
  char buf[96];
  for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g\n", e + 1, report.train_loss[e], report.validation_loss[e]);
    out << buf;
  }
  return out.str();
}

}  // namespace pcp
