#include "pcp/pcp.h"

#include <cmath>
#include <limits>
#include <memory>
#include <new>
#include <string>

#include <json.hpp>

#include "pcp/classifier.hpp"
#include "pcp/commands.hpp"
#include "pcp/data.hpp"
#include "pcp/error.hpp"
#include "pcp/functionals.hpp"
#include "pcp/inference.hpp"
#include "pcp/synth.hpp"

struct pcp_dataset {
  pcp::Dataset data;
};

struct pcp_model {
  pcp::ClassifierModel model;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_summary;

template <typename F>
pcp_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return PCP_OK;
  } catch (const pcp::ValidationError& e) {
    last_error = e.what();
    return PCP_ERR_VALIDATION;
  } catch (const pcp::NumericalError& e) {
    last_error = e.what();
    return PCP_ERR_NUMERICAL;
  } catch (const nlohmann::json::exception& e) {
    last_error = e.what();
    return PCP_ERR_VALIDATION;
  } catch (const std::filesystem::filesystem_error& e) {
    last_error = e.what();
    return PCP_ERR_IO;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return PCP_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return PCP_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return PCP_ERR_INTERNAL;
  }
}

pcp_status checked(const void* p, const char* what) {
  if (p) return PCP_OK;
  last_error = std::string(what) + " must not be NULL";
  return PCP_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* pcp_version(void) { return pcp::kArtifactVersion; }
const char* pcp_last_error(void) { return last_error.c_str(); }
const char* pcp_last_summary(void) { return last_summary.c_str(); }

pcp_status pcp_dataset_load(const char* csv_path, const char* schema_path, pcp_dataset** out) {
  if (auto s = checked(csv_path, "csv_path")) return s;
  if (auto s = checked(out, "out")) return s;
  return guarded([&] {
    auto schema = std::make_shared<const pcp::CategoricalSchema>(
        schema_path ? pcp::CategoricalSchema::load(schema_path) : pcp::CategoricalSchema::default_insurance());
    *out = new pcp_dataset{pcp::load_csv(csv_path, schema)};
  });
}

pcp_status pcp_dataset_save(const pcp_dataset* data, const char* csv_path) {
  if (auto s = checked(data, "data")) return s;
  if (auto s = checked(csv_path, "csv_path")) return s;
  return guarded([&] { pcp::save_csv(data->data, csv_path); });
}

size_t pcp_dataset_size(const pcp_dataset* data) { return data ? data->data.size() : 0; }

size_t pcp_dataset_design_width(const pcp_dataset* data) { return data ? data->data.schema().design_width() : 0; }

void pcp_dataset_free(pcp_dataset* data) { delete data; }

pcp_status pcp_synth_sample(const char* dgp_json, size_t n, uint64_t seed, pcp_dataset** out) {
  if (auto s = checked(out, "out")) return s;
  if (n == 0) {
    last_error = "n must be >= 1";
    return PCP_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    const auto j = dgp_json ? nlohmann::json::parse(dgp_json) : nlohmann::json::object();
    const auto dgp = pcp::SyntheticDGP::from_json(j);
    *out = new pcp_dataset{pcp::sample_dataset(dgp, n, seed).data};
  });
}

pcp_status pcp_model_train(const pcp_dataset* data, const char* learner_json, uint64_t seed, pcp_model** out) {
  if (auto s = checked(data, "data")) return s;
  if (auto s = checked(out, "out")) return s;
  return guarded([&] {
    const auto j = learner_json ? nlohmann::json::parse(learner_json) : nlohmann::json::object();
    const auto cfg = pcp::LearnerConfig::from_json(j).with_seed(seed);
    pcp::SplitPlan plan;
    plan.seed = seed;
    const auto parts = pcp::split(data->data, plan);
    *out = new pcp_model{pcp::train_learner(parts.train, parts.validation, cfg)};
  });
}

pcp_status pcp_model_predict(const pcp_model* model, const pcp_dataset* data, double* quads_out) {
  if (auto s = checked(model, "model")) return s;
  if (auto s = checked(data, "data")) return s;
  if (auto s = checked(quads_out, "quads_out")) return s;
  return guarded([&] {
    const auto p = model->model.predict_proba(data->data);
    const auto k = static_cast<std::size_t>(p.cols());
    for (std::size_t i = 0; i < data->data.size(); ++i)
      for (std::size_t c = 0; c < k; ++c)
        quads_out[i * k + c] = p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
  });
}

pcp_status pcp_model_loss(const pcp_model* model, const pcp_dataset* data, double* loss_out) {
  if (auto s = checked(model, "model")) return s;
  if (auto s = checked(data, "data")) return s;
  if (auto s = checked(loss_out, "loss_out")) return s;
  return guarded([&] { *loss_out = pcp::cross_entropy_loss(model->model, data->data); });
}

pcp_status pcp_model_save(const pcp_model* model, const char* path) {
  if (auto s = checked(model, "model")) return s;
  if (auto s = checked(path, "path")) return s;
  return guarded([&] { model->model.save(path); });
}

pcp_status pcp_model_load(const char* path, pcp_model** out) {
  if (auto s = checked(path, "path")) return s;
  if (auto s = checked(out, "out")) return s;
  return guarded([&] { *out = new pcp_model{pcp::ClassifierModel::load(path)}; });
}

void pcp_model_free(pcp_model* model) { delete model; }

pcp_status pcp_quad_statistics(const double* quads, size_t n, double* covariance_out, double* correlation_out) {
  if (auto s = checked(quads, "quads")) return s;
  return guarded([&] {
    for (std::size_t i = 0; i < n; ++i) {
      const pcp::ProbQuad q{quads[4 * i], quads[4 * i + 1], quads[4 * i + 2], quads[4 * i + 3]};
      if (!q.valid()) throw pcp::ValidationError("quad " + std::to_string(i + 1) + " is not a probability vector");
      if (covariance_out) covariance_out[i] = pcp::covariance_from_quad(q);
      if (correlation_out)
        correlation_out[i] = pcp::degenerate_marginals(q) ? std::numeric_limits<double>::quiet_NaN()
                                                          : pcp::correlation_from_quad(q);
    }
  });
}

pcp_status pcp_intersection_test(const double* estimates, const double* se, size_t groups, size_t n, double alpha,
                                 size_t draws, uint64_t seed, pcp_intersection_result* out) {
  if (auto s = checked(estimates, "estimates")) return s;
  if (auto s = checked(se, "se")) return s;
  if (auto s = checked(out, "out")) return s;
  return guarded([&] {
    pcp::IntersectionInput in;
    in.estimates.assign(estimates, estimates + groups);
    in.se.assign(se, se + groups);
    in.n = n;
    in.alpha = alpha;
    in.draws = draws;
    in.seed = seed;
    const auto r = pcp::intersection_test(in);
    *out = {r.gamma, r.k0, r.k, r.statistic, r.ci_lower, r.ci_upper, r.rejected ? 1 : 0, r.ci_clamped ? 1 : 0,
            r.selected.size()};
  });
}

pcp_status pcp_analytic_k0(int groups, double gamma, double* out) {
  if (auto s = checked(out, "out")) return s;
  return guarded([&] { *out = pcp::analytic_k0(groups, gamma); });
}

pcp_status pcp_run_command(const char* command, const char* config_path, const pcp_run_options* options) {
  if (auto s = checked(command, "command")) return s;
  if (auto s = checked(config_path, "config_path")) return s;
  return guarded([&] {
    pcp::CommandOptions opt;
    opt.command = command;
    opt.config = config_path;
    if (options) {
      if (options->has_seed) opt.seed = options->seed;
      if (options->out) opt.out = std::filesystem::path(options->out);
      if (options->learner) opt.learner = std::string(options->learner);
      if (options->statistic) opt.statistic = std::string(options->statistic);
    }
    last_summary = pcp::run_command(opt).summary;
  });
}

}  // extern "C"
