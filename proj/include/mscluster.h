/*
 * mscluster - joint survival-graph patient subtyping
 *
 * C interface to the shared library: opaque handles, integer status codes,
 * and a thread-local error message for the last failing call. All functions
 * returning msc_status set *out only on MSC_OK.
 */
#ifndef MSCLUSTER_H
#define MSCLUSTER_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MSC_API __declspec(dllexport)
#else
#define MSC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum msc_status {
  MSC_OK = 0,
  MSC_ERR_VALIDATION = 1,
  MSC_ERR_SCHEMA = 2,
  MSC_ERR_JOIN = 3,
  MSC_ERR_IO = 4,
  MSC_ERR_PARSE = 5,
  MSC_ERR_NUMERIC = 6,
  MSC_ERR_STEP_SIZE = 7,
  MSC_ERR_CONDITIONING = 8,
  MSC_ERR_CALIBRATION = 9,
  MSC_ERR_UNDEFINED_METRIC = 10,
  MSC_ERR_DIVERGENCE = 11,
  MSC_ERR_EMPTY_FEATURE = 12,
  MSC_ERR_NULL_ARGUMENT = 100,
  MSC_ERR_UNKNOWN = 101
} msc_status;

typedef struct msc_dataset msc_dataset;
typedef struct msc_simconfig msc_simconfig;
typedef struct msc_cohort msc_cohort;
typedef struct msc_hyperparams msc_hyperparams;
typedef struct msc_fit_result msc_fit_result;

MSC_API const char* msc_version(void);

/* Message for the most recent failing call on this thread; never NULL. */
MSC_API const char* msc_last_error(void);

/* ---- datasets ---------------------------------------------------------- */

/* Long-format transitions CSV (patient_id, transition_id, time, status) plus
 * a wide covariates CSV; the transition DAG is given as parallel from/to
 * state arrays in transition order. */
MSC_API msc_status msc_dataset_load(const char* covariates_csv, const char* transitions_csv,
                                    const int* from_states, const int* to_states,
                                    int num_transitions, msc_dataset** out);

/* Loads covariates.csv/transitions.csv (+ transition_spec.csv if present)
 * from a directory written by msc_cohort_write or the simulate command. */
MSC_API msc_status msc_dataset_load_dir(const char* data_dir, msc_dataset** out);

MSC_API msc_status msc_dataset_standardize(msc_dataset* ds);
MSC_API msc_status msc_dataset_correlation_filter(msc_dataset* ds, double threshold,
                                                  const char* method /* pearson|spearman */);
MSC_API msc_status msc_dataset_write(const msc_dataset* ds, const char* covariates_csv,
                                     const char* transitions_csv);
MSC_API int msc_dataset_n(const msc_dataset* ds);
MSC_API int msc_dataset_p(const msc_dataset* ds);
MSC_API int msc_dataset_num_transitions(const msc_dataset* ds);
MSC_API void msc_dataset_free(msc_dataset* ds);

/* ---- simulation -------------------------------------------------------- */

MSC_API msc_status msc_simconfig_create(msc_simconfig** out);
MSC_API msc_status msc_simconfig_load(const char* config_path, msc_simconfig** out);
/* Keys mirror the simulate config file (n, p, K, C, tau, rho, s, seed, ...). */
MSC_API msc_status msc_simconfig_set(msc_simconfig* cfg, const char* key, const char* value);
MSC_API void msc_simconfig_free(msc_simconfig* cfg);

MSC_API msc_status msc_simulate(const msc_simconfig* cfg, msc_cohort** out);
MSC_API msc_status msc_cohort_write(const msc_cohort* cohort, const char* out_dir);
MSC_API msc_status msc_cohort_dataset(const msc_cohort* cohort, msc_dataset** out);
MSC_API int msc_cohort_n(const msc_cohort* cohort);
MSC_API msc_status msc_cohort_true_clusters(const msc_cohort* cohort, int* labels, size_t len);
MSC_API double msc_cohort_censoring_horizon(const msc_cohort* cohort);
MSC_API void msc_cohort_free(msc_cohort* cohort);

/* ---- hyperparameters ---------------------------------------------------- */

MSC_API msc_status msc_hyperparams_create(msc_hyperparams** out);
MSC_API msc_status msc_hyperparams_load(const char* path, msc_hyperparams** out);
/* Keys: eta, gamma, mu, lambda_mode (adaptive|global), kappa, lambda, alpha,
 * c, outer_tol, max_outer, inner_tol, max_inner, edge_tol. */
MSC_API msc_status msc_hyperparams_set(msc_hyperparams* hp, const char* key, const char* value);
MSC_API void msc_hyperparams_free(msc_hyperparams* hp);

/* ---- fitting ------------------------------------------------------------ */

MSC_API msc_status msc_fit(const msc_dataset* ds, const msc_hyperparams* hp, msc_fit_result** out);
MSC_API msc_status msc_baseline_fit(const msc_dataset* ds,
                                    const char* variant /* cox_only|fixed_rbf_graph|knn_graph */,
                                    const msc_hyperparams* hp, msc_fit_result** out);

MSC_API int msc_fit_result_converged(const msc_fit_result* res);
MSC_API int msc_fit_result_iterations(const msc_fit_result* res);
MSC_API int msc_fit_result_clusters_valid(const msc_fit_result* res);
MSC_API msc_status msc_fit_result_labels(const msc_fit_result* res, int* labels, size_t len);
MSC_API msc_status msc_fit_result_objective_trace(const msc_fit_result* res, double* values,
                                                  size_t len, size_t* written);
MSC_API int msc_fit_result_beta_size(const msc_fit_result* res, int transition);
MSC_API msc_status msc_fit_result_beta(const msc_fit_result* res, int transition, double* values,
                                       size_t len);
MSC_API msc_status msc_fit_result_weight(const msc_fit_result* res, int transition, double* out);
/* Row-major n*n similarity matrix. */
MSC_API msc_status msc_fit_result_similarity(const msc_fit_result* res, double* values, size_t len);
MSC_API void msc_fit_result_free(msc_fit_result* res);

/* ---- command runners (what the CLI calls) ------------------------------- */
/* Return process-style exit codes: 0 ok, 2 parse/validation, 1 other. */

MSC_API int msc_cmd_simulate(const char* config_path, const char* out_dir, int64_t seed_override);
MSC_API int msc_cmd_fit(const char* data_dir, const char* hyperparams_path, const char* out_dir,
                        int emit_similarity);
MSC_API int msc_cmd_evaluate(const char* data_dir, const char* fit_dir, const char* out_dir);
MSC_API int msc_cmd_gridsearch(const char* data_dir, const char* grid_csv, const char* out_dir,
                               int threads);
MSC_API int msc_cmd_benchmark(const char* plan_path, const char* out_dir, int threads);

#ifdef __cplusplus
}
#endif

#endif /* MSCLUSTER_H */
