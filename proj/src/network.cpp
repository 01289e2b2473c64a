#include "pcp/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/digamma.hpp>

#include "pcp/error.hpp"
#include "json_keys.hpp"

namespace pcp {

namespace {

constexpr double kClip = 1e-12;

Eigen::MatrixXd gather_rows(const DesignMatrix& x, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

double clip_prob(double p) { return std::clamp(p, kClip, 1.0 - kClip); }

}  // namespace

// ---------------------------------------------------------------- config

void NetworkConfig::validate() const {
  if (depth < 0) throw ValidationError("network: depth must be >= 0");
  if (width < 1) throw ValidationError("network: width must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("network: dropout must lie in [0, 1)");
  if (patience < 1) throw ValidationError("network: patience must be >= 1");
  if (max_epochs < 1) throw ValidationError("network: max_epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("network: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ValidationError("network: learning_rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("network: moment decays must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("network: epsilon must be > 0");
}

nlohmann::json NetworkConfig::to_json() const {
  return {{"depth", depth},          {"width", width},
          {"dropout", dropout},      {"patience", patience},
          {"max_epochs", max_epochs}, {"batch_size", batch_size},
          {"learning_rate", learning_rate}, {"beta1", beta1},
          {"beta2", beta2},          {"epsilon", epsilon},
          {"seed", seed}};
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) { return from_json(j, NetworkConfig{}); }

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j, const NetworkConfig& d) {
  reject_unknown_keys(j, {"depth", "width", "dropout", "patience", "max_epochs", "batch_size", "learning_rate", "beta1",
                          "beta2", "epsilon", "seed"},
                      "network config");
  NetworkConfig c;
  try {
    c.depth = j.value("depth", d.depth);
    c.width = j.value("width", d.width);
    c.dropout = j.value("dropout", d.dropout);
    c.patience = j.value("patience", d.patience);
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.beta1 = j.value("beta1", d.beta1);
    c.beta2 = j.value("beta2", d.beta2);
    c.epsilon = j.value("epsilon", d.epsilon);
    c.seed = j.value("seed", d.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("network config: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t count_parameters(const NetworkConfig& cfg, std::size_t n_inputs, std::size_t classes) {
  const auto w = static_cast<std::size_t>(cfg.width);
  if (cfg.depth == 0) return n_inputs * classes;
  const auto hidden_links = static_cast<std::size_t>(cfg.depth - 1);
  return n_inputs * w + hidden_links * (w * w + w) + (w * classes + classes);
}

std::size_t reference_parameter_formula(const NetworkConfig& cfg, std::size_t n_inputs) {
  const auto w = static_cast<std::size_t>(cfg.width);
  if (cfg.depth == 0) return 3 * n_inputs;
  return n_inputs * w + static_cast<std::size_t>(cfg.depth - 1) * w * w + 3 * w;
}

// ---------------------------------------------------------------- mlp

Mlp::Mlp(std::size_t inputs, std::size_t outputs, int depth, int width, Rng& rng) {
  std::vector<std::size_t> sizes{inputs};
  for (int l = 0; l < depth; ++l) sizes.push_back(static_cast<std::size_t>(width));
  sizes.push_back(outputs);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(sizes[l]);
    const auto fan_out = static_cast<Eigen::Index>(sizes[l + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> unif(-limit, limit);
    Layer layer;
    layer.weights.resize(fan_in, fan_out);
    for (Eigen::Index i = 0; i < fan_in; ++i)
      for (Eigen::Index o = 0; o < fan_out; ++o) layer.weights(i, o) = unif(rng);
    if (l > 0) layer.bias = Eigen::RowVectorXd::Zero(fan_out);
    layers_.push_back(std::move(layer));
  }
}

std::size_t Mlp::inputs() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weights.rows()); }
std::size_t Mlp::outputs() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weights.cols()); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

Eigen::MatrixXd Mlp::logits(const DesignMatrix& x) const {
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = a * layers_[l].weights;
    if (layers_[l].bias.size()) z.rowwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

Eigen::VectorXd Mlp::flat() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index k = 0;
  for (const auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weights.rows(); ++i)
      for (Eigen::Index o = 0; o < l.weights.cols(); ++o) out(k++) = l.weights(i, o);
    for (Eigen::Index o = 0; o < l.bias.size(); ++o) out(k++) = l.bias(o);
  }
  return out;
}

void Mlp::set_flat(const Eigen::VectorXd& params) {
  if (static_cast<std::size_t>(params.size()) != parameter_count())
    throw ValidationError("set_flat: parameter vector has the wrong length");
  Eigen::Index k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weights.rows(); ++i)
      for (Eigen::Index o = 0; o < l.weights.cols(); ++o) l.weights(i, o) = params(k++);
    for (Eigen::Index o = 0; o < l.bias.size(); ++o) l.bias(o) = params(k++);
  }
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_) {
    std::vector<double> w(l.weights.data(), l.weights.data() + l.weights.size());
    std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back({{"rows", l.weights.rows()}, {"cols", l.weights.cols()}, {"weights", w}, {"bias", b}});
  }
  return {{"layers", layers}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  Mlp net;
  for (const auto& lj : j.at("layers")) {
    Layer l;
    const auto rows = lj.at("rows").get<Eigen::Index>();
    const auto cols = lj.at("cols").get<Eigen::Index>();
    const auto w = lj.at("weights").get<std::vector<double>>();
    const auto b = lj.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols) throw ValidationError("model: layer size mismatch");
    l.weights = Eigen::Map<const Eigen::MatrixXd>(w.data(), rows, cols);
    if (!b.empty()) {
      if (static_cast<Eigen::Index>(b.size()) != cols) throw ValidationError("model: bias size mismatch");
      l.bias = Eigen::Map<const Eigen::RowVectorXd>(b.data(), cols);
    }
    net.layers_.push_back(std::move(l));
  }
  if (net.layers_.empty()) throw ValidationError("model: network without layers");
  return net;
}

// ---------------------------------------------------------------- heads

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    double s = 0.0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      p(r, k) = std::exp(logits(r, k) - mx);
      s += p(r, k);
    }
    p.row(r) /= s;
  }
  return p;
}

void head_loss(const Eigen::MatrixXd& logits, const TrainingTargets& targets, std::span<const std::size_t> rows,
               OutputHead head, Eigen::VectorXd& loss, Eigen::MatrixXd* dlogits) {
  const Eigen::Index n = logits.rows();
  loss.resize(n);
  if (dlogits) dlogits->resize(n, logits.cols());
  auto row_index = [&](Eigen::Index r) { return rows.empty() ? static_cast<std::size_t>(r) : rows[static_cast<std::size_t>(r)]; };

  if (head == OutputHead::Softmax) {
    const Eigen::MatrixXd p = softmax_rows(logits);
    for (Eigen::Index r = 0; r < n; ++r) {
      const int y = targets.labels[row_index(r)];
      loss(r) = -std::log(std::max(p(r, y), kClip));
      if (dlogits) {
        dlogits->row(r) = p.row(r);
        (*dlogits)(r, y) -= 1.0;
      }
    }
    return;
  }

  const double phi = kWeightDispersion;
  const double lg_phi = std::lgamma(phi);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double w = targets.values[row_index(r)];
    const double pi = clip_prob(logistic(logits(r, 0)));
    const double m = clip_prob(logistic(logits(r, 1)));
    if (w >= 1.0) {
      loss(r) = -std::log(pi);
      if (dlogits) {
        (*dlogits)(r, 0) = pi - 1.0;
        (*dlogits)(r, 1) = 0.0;
      }
    } else {
      const double a = m * phi;
      const double b = (1.0 - m) * phi;
      const double log_w = std::log(w);
      const double log_1w = std::log1p(-w);
      const double log_beta = lg_phi - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * log_w + (b - 1.0) * log_1w;
      loss(r) = -std::log1p(-pi) - log_beta;
      if (dlogits) {
        (*dlogits)(r, 0) = pi;
        const double dm = phi * (boost::math::digamma(a) - boost::math::digamma(b) - log_w + log_1w);
        (*dlogits)(r, 1) = dm * m * (1.0 - m);
      }
    }
  }
}

double evaluate_loss(const Mlp& net, const DesignMatrix& x, const TrainingTargets& targets, OutputHead head) {
  return net.loss_and_gradient(x, targets, head, nullptr);
}

// ---------------------------------------------------------------- backprop

class MlpTrainer {
 public:
  MlpTrainer(Mlp& net, double dropout) : net_(net), dropout_(dropout) {
    const auto nl = net_.layers_.size();
    grads_.resize(nl);
    for (std::size_t l = 0; l < nl; ++l) {
      grads_[l].weights = Eigen::MatrixXd::Zero(net_.layers_[l].weights.rows(), net_.layers_[l].weights.cols());
      grads_[l].bias = Eigen::RowVectorXd::Zero(net_.layers_[l].bias.size());
    }
    pre_.resize(nl);
    mask_.resize(nl);
    acts_.resize(nl + 1);
  }

  // Forward + backward over a batch; returns sum_i w_i loss_i and the weight total.
  std::pair<double, double> step(const Eigen::MatrixXd& xb, const TrainingTargets& targets,
                                 std::span<const std::size_t> rows, OutputHead head, Rng* rng) {
    const auto nl = net_.layers_.size();
    const bool drop = rng && dropout_ > 0.0;
    const double keep = 1.0 - dropout_;
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    acts_[0] = xb;
    for (std::size_t l = 0; l < nl; ++l) {
      const auto& layer = net_.layers_[l];
      Eigen::MatrixXd z = acts_[l] * layer.weights;
      if (layer.bias.size()) z.rowwise() += layer.bias;
      if (l + 1 < nl) {
        pre_[l] = z;
        z = z.cwiseMax(0.0);
        if (drop) {
          mask_[l].resize(z.rows(), z.cols());
          for (Eigen::Index i = 0; i < z.rows(); ++i)
            for (Eigen::Index k = 0; k < z.cols(); ++k) mask_[l](i, k) = unif(*rng) < keep ? 1.0 / keep : 0.0;
          z.array() *= mask_[l].array();
        }
      }
      acts_[l + 1] = std::move(z);
    }

    Eigen::VectorXd loss;
    Eigen::MatrixXd delta;
    head_loss(acts_[nl], targets, rows, head, loss, &delta);
    double wsum = 0.0, lsum = 0.0;
    for (Eigen::Index r = 0; r < loss.size(); ++r) {
      const double w = targets.weights[rows[static_cast<std::size_t>(r)]];
      wsum += w;
      lsum += w * loss(r);
    }
    for (Eigen::Index r = 0; r < delta.rows(); ++r)
      delta.row(r) *= targets.weights[rows[static_cast<std::size_t>(r)]] / wsum;

    for (std::size_t l = nl; l-- > 0;) {
      grads_[l].weights.noalias() = acts_[l].transpose() * delta;
      if (net_.layers_[l].bias.size()) grads_[l].bias = delta.colwise().sum();
      if (l == 0) break;
      Eigen::MatrixXd back = delta * net_.layers_[l].weights.transpose();
      back.array() *= (pre_[l - 1].array() > 0.0).cast<double>();
      if (drop) back.array() *= mask_[l - 1].array();
      delta = std::move(back);
    }
    return {lsum, wsum};
  }

  const std::vector<Mlp::Layer>& grads() const { return grads_; }

 private:
  Mlp& net_;
  double dropout_;
  std::vector<Mlp::Layer> grads_;
  std::vector<Eigen::MatrixXd> pre_, mask_, acts_;
};

double Mlp::loss_and_gradient(const DesignMatrix& x, const TrainingTargets& targets, OutputHead head,
                              Eigen::VectorXd* grad, std::span<const std::size_t> rows) const {
  std::vector<std::size_t> owned;
  if (rows.empty()) {
    owned = all_rows(static_cast<std::size_t>(x.rows()));
    rows = owned;
  }
  if (!grad) {
    const Eigen::MatrixXd z = logits(gather_rows(x, rows));
    Eigen::VectorXd loss;
    head_loss(z, targets, rows, head, loss, nullptr);
    double lsum = 0.0, wsum = 0.0;
    for (Eigen::Index r = 0; r < loss.size(); ++r) {
      const double w = targets.weights[rows[static_cast<std::size_t>(r)]];
      lsum += w * loss(r);
      wsum += w;
    }
    return lsum / wsum;
  }
  Mlp copy = *this;
  MlpTrainer trainer(copy, 0.0);
  const auto [lsum, wsum] = trainer.step(gather_rows(x, rows), targets, rows, head, nullptr);
  grad->resize(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index k = 0;
  for (const auto& g : trainer.grads()) {
    for (Eigen::Index i = 0; i < g.weights.rows(); ++i)
      for (Eigen::Index o = 0; o < g.weights.cols(); ++o) (*grad)(k++) = g.weights(i, o);
    for (Eigen::Index o = 0; o < g.bias.size(); ++o) (*grad)(k++) = g.bias(o);
  }
  return lsum / wsum;
}

// ---------------------------------------------------------------- training

TrainedMlp train_mlp(const DesignMatrix& x_train, const TrainingTargets& t_train, const DesignMatrix& x_val,
                     const TrainingTargets& t_val, std::size_t outputs, OutputHead head, const NetworkConfig& cfg) {
  cfg.validate();
  if (x_train.rows() == 0 || x_val.rows() == 0) throw ValidationError("train: empty training or validation data");
  Rng rng(cfg.seed);
  Mlp net(static_cast<std::size_t>(x_train.cols()), outputs, cfg.depth, cfg.width, rng);

  std::vector<Mlp::Layer> m1, m2;
  for (const auto& l : net.layers()) {
    m1.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()), Eigen::RowVectorXd::Zero(l.bias.size())});
    m2.push_back(m1.back());
  }

  TrainedMlp best{net, {}};
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  auto order = all_rows(static_cast<std::size_t>(x_train.rows()));
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  long t = 0;
  MlpTrainer trainer(net, cfg.dropout);
  TrainingReport report;

  auto adam = [&](auto& param, auto& grad, auto& m, auto& v, double lr_t) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
    param.array() -= lr_t * m.array() / (v.array().sqrt() + cfg.epsilon);
  };

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double lsum = 0.0, wsum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(batch, order.size() - start));
      const auto [bl, bw] = trainer.step(gather_rows(x_train, rows), t_train, rows, head, &rng);
      lsum += bl;
      wsum += bw;
      ++t;
      const double lr_t = cfg.learning_rate * std::sqrt(1.0 - std::pow(cfg.beta2, static_cast<double>(t))) /
                          (1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
      for (std::size_t l = 0; l < m1.size(); ++l) {
        auto& layer = net.mutable_layers()[l];
        const auto& g = trainer.grads()[l];
        adam(layer.weights, g.weights, m1[l].weights, m2[l].weights, lr_t);
        if (layer.bias.size()) adam(layer.bias, g.bias, m1[l].bias, m2[l].bias, lr_t);
      }
    }
    const double train_loss = lsum / wsum;
    const double val_loss = evaluate_loss(net, x_val, t_val, head);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
      throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch));
    report.train_loss.push_back(train_loss);
    report.validation_loss.push_back(val_loss);
    report.epochs_run = epoch;
    if (val_loss < best_loss) {
      best_loss = val_loss;
      best.net = net;
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  report.best_validation_loss = best_loss;
  best.report = std::move(report);
  return best;
}

}  // namespace pcp
