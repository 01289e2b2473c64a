#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace oracle {

double table_covariance(double n00, double n01, double n10, double n11) {
  const double n = n00 + n01 + n10 + n11;
  return n11 / n - ((n10 + n11) / n) * ((n01 + n11) / n);
}

double table_correlation(double n00, double n01, double n10, double n11) {
  // phi coefficient
  const double rows = (n00 + n01) * (n10 + n11);
  const double cols = (n00 + n10) * (n01 + n11);
  if (rows <= 0.0 || cols <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (n11 * n00 - n10 * n01) / std::sqrt(rows * cols);
}

std::vector<CellStats> cell_frequency_stats(const pcp::Dataset& d) {
  // brute force: rescan the whole dataset for every record
  std::vector<CellStats> out(d.size());
  std::map<std::vector<int>, CellStats> seen;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& key = d[i].covariates;
    if (auto it = seen.find(key); it != seen.end()) {
      out[i] = it->second;
      continue;
    }
    double n[2][2] = {{0, 0}, {0, 0}};
    for (const auto& rec : d.records())
      if (rec.covariates == key) n[rec.c][rec.r] += rec.w;
    CellStats s;
    s.covariance = table_covariance(n[0][0], n[0][1], n[1][0], n[1][1]);
    s.correlation = table_correlation(n[0][0], n[0][1], n[1][0], n[1][1]);
    seen[key] = s;
    out[i] = s;
  }
  return out;
}

namespace {

Eigen::MatrixXd probs_from_coef(const pcp::DesignMatrix& x, const Eigen::MatrixXd& coef) {
  const Eigen::Index n = x.rows(), k = coef.cols() + 1;
  Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(n, k);
  eta.rightCols(k - 1) = x * coef;
  Eigen::MatrixXd p(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = eta.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (eta.row(i).array() - m).exp();
    p.row(i) = e / e.sum();
  }
  return p;
}

double log_likelihood(const Eigen::MatrixXd& p, std::span<const int> labels, std::span<const double> w) {
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) s += w[i] * std::log(p(static_cast<Eigen::Index>(i), labels[i]));
  return s;
}

}  // namespace

Eigen::MatrixXd MultinomialLogit::probabilities(const pcp::DesignMatrix& x) const { return probs_from_coef(x, coef); }

MultinomialLogit fit_multinomial_logit(const pcp::DesignMatrix& x, std::span<const int> labels,
                                       std::span<const double> weights, int classes) {
  const Eigen::Index n = x.rows(), d = x.cols(), m = classes - 1, dim = d * m;
  MultinomialLogit fit;
  fit.coef = Eigen::MatrixXd::Zero(d, m);
  Eigen::MatrixXd p = probs_from_coef(x, fit.coef);
  double ll = log_likelihood(p, labels, weights);

  for (fit.iterations = 1; fit.iterations <= 100; ++fit.iterations) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = weights[static_cast<std::size_t>(i)];
      const Eigen::RowVectorXd xi = x.row(i);
      const Eigen::MatrixXd xx = w * xi.transpose() * xi;
      for (Eigen::Index a = 0; a < m; ++a) {
        const double ya = labels[static_cast<std::size_t>(i)] == a + 1 ? 1.0 : 0.0;
        g.segment(a * d, d) += w * (ya - p(i, a + 1)) * xi.transpose();
        for (Eigen::Index b = 0; b < m; ++b) {
          const double v = p(i, a + 1) * ((a == b ? 1.0 : 0.0) - p(i, b + 1));
          h.block(a * d, b * d, d, d) += v * xx;
        }
      }
    }
    fit.gradient_norm = g.lpNorm<Eigen::Infinity>();
    // h is the negative Hessian; a tiny ridge keeps empty cells finite
    h.diagonal().array() += 1e-10;
    const Eigen::VectorXd step = h.ldlt().solve(g);
    double t = 1.0;
    bool moved = false;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      Eigen::MatrixXd trial = fit.coef;
      for (Eigen::Index a = 0; a < m; ++a) trial.col(a) += t * step.segment(a * d, d);
      const Eigen::MatrixXd pt = probs_from_coef(x, trial);
      const double llt = log_likelihood(pt, labels, weights);
      if (llt >= ll) {
        fit.coef = trial;
        p = pt;
        moved = llt > ll;
        ll = llt;
        break;
      }
    }
    if (!moved || t * step.lpNorm<Eigen::Infinity>() < 1e-10) break;
  }
  return fit;
}

double weighted_log_loss(const Eigen::MatrixXd& probs, std::span<const int> labels,
                         std::span<const double> weights) {
  double s = 0.0, sw = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    s -= weights[i] * std::log(std::max(probs(static_cast<Eigen::Index>(i), labels[i]), 1e-12));
    sw += weights[i];
  }
  return s / sw;
}

double wls_intercept(std::span<const double> y, const std::vector<std::vector<double>>& columns,
                     std::span<const double> weights) {
  const auto n = static_cast<Eigen::Index>(y.size());
  const auto k = static_cast<Eigen::Index>(columns.size() + 1);
  Eigen::MatrixXd x(n, k);
  Eigen::VectorXd yy(n), sw(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    sw(i) = std::sqrt(weights[u]);
    x(i, 0) = sw(i);
    for (Eigen::Index j = 1; j < k; ++j) x(i, j) = sw(i) * columns[static_cast<std::size_t>(j - 1)][u];
    yy(i) = sw(i) * y[u];
  }
  return x.colPivHouseholderQr().solve(yy)(0);
}

}  // namespace oracle
