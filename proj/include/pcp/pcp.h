/* C interface to the pcp library. All functions return a pcp_status; on
 * failure pcp_last_error() describes the problem (per calling thread). */
#ifndef PCP_PCP_H
#define PCP_PCP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  define PCP_API __declspec(dllexport)
#elif defined(__GNUC__)
#  define PCP_API __attribute__((visibility("default")))
#else
#  define PCP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pcp_status {
  PCP_OK = 0,
  PCP_ERR_VALIDATION = 1,
  PCP_ERR_NUMERICAL = 2,
  PCP_ERR_IO = 3,
  PCP_ERR_INVALID_ARGUMENT = 4,
  PCP_ERR_INTERNAL = 5
} pcp_status;

typedef struct pcp_dataset pcp_dataset;
typedef struct pcp_model pcp_model;

typedef struct pcp_intersection_result {
  double gamma;
  double k0;
  double k;
  double statistic;
  double ci_lower;
  double ci_upper;
  int rejected;
  int ci_clamped;
  size_t selected_count;
} pcp_intersection_result;

typedef struct pcp_run_options {
  int has_seed;
  uint64_t seed;
  const char* out;        /* NULL: from config */
  const char* learner;    /* NULL, "network", "forest" or "boosted" */
  const char* statistic;  /* NULL, "covariance" or "correlation" */
} pcp_run_options;

PCP_API const char* pcp_version(void);
PCP_API const char* pcp_last_error(void);
/* One-line summary of the last successful pcp_run_command on this thread. */
PCP_API const char* pcp_last_summary(void);

/* schema_path may be NULL for the default eight-feature schema. */
PCP_API pcp_status pcp_dataset_load(const char* csv_path, const char* schema_path, pcp_dataset** out);
PCP_API pcp_status pcp_dataset_save(const pcp_dataset* data, const char* csv_path);
PCP_API size_t pcp_dataset_size(const pcp_dataset* data);
PCP_API size_t pcp_dataset_design_width(const pcp_dataset* data);
PCP_API void pcp_dataset_free(pcp_dataset* data);

/* dgp_json may be NULL for the default generator (no signal). */
PCP_API pcp_status pcp_synth_sample(const char* dgp_json, size_t n, uint64_t seed, pcp_dataset** out);

/* learner_json: {"kind": "network", "network": {...}} or NULL for defaults.
 * Splits 70/15/15 with `seed` and trains on the first two parts. */
PCP_API pcp_status pcp_model_train(const pcp_dataset* data, const char* learner_json, uint64_t seed,
                                   pcp_model** out);
/* quads_out holds 4 * pcp_dataset_size(data) values, (p00, p01, p10, p11) per record. */
PCP_API pcp_status pcp_model_predict(const pcp_model* model, const pcp_dataset* data, double* quads_out);
PCP_API pcp_status pcp_model_loss(const pcp_model* model, const pcp_dataset* data, double* loss_out);
PCP_API pcp_status pcp_model_save(const pcp_model* model, const char* path);
PCP_API pcp_status pcp_model_load(const char* path, pcp_model** out);
PCP_API void pcp_model_free(pcp_model* model);

/* Covariance and correlation per quad; correlation is NaN for degenerate marginals. */
PCP_API pcp_status pcp_quad_statistics(const double* quads, size_t n, double* covariance_out,
                                       double* correlation_out);

PCP_API pcp_status pcp_intersection_test(const double* estimates, const double* se, size_t groups, size_t n,
                                         double alpha, size_t draws, uint64_t seed,
                                         pcp_intersection_result* out);
PCP_API pcp_status pcp_analytic_k0(int groups, double gamma, double* out);

/* Runs a subcommand (simulate, hyperopt, fit, estimate, test-intersection,
 * test-sorted, importance, report). options may be NULL. */
PCP_API pcp_status pcp_run_command(const char* command, const char* config_path, const pcp_run_options* options);

#ifdef __cplusplus
}
#endif

#endif
