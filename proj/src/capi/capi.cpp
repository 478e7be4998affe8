#include "mscluster.h"

#include <cstring>
#include <string>

#include "../core/csv.hpp"
#include "../core/optimizer.hpp"
#include "../core/runner.hpp"
#include "../core/simulation.hpp"

using namespace mscluster;

namespace {

thread_local std::string g_last_error = "";

msc_status status_of(errc code) {
  switch (code) {
    case errc::ok: return MSC_OK;
    case errc::validation: return MSC_ERR_VALIDATION;
    case errc::schema: return MSC_ERR_SCHEMA;
    case errc::join: return MSC_ERR_JOIN;
    case errc::io: return MSC_ERR_IO;
    case errc::parse: return MSC_ERR_PARSE;
    case errc::numeric: return MSC_ERR_NUMERIC;
    case errc::step_size: return MSC_ERR_STEP_SIZE;
    case errc::conditioning: return MSC_ERR_CONDITIONING;
    case errc::calibration: return MSC_ERR_CALIBRATION;
    case errc::undefined_metric: return MSC_ERR_UNDEFINED_METRIC;
    case errc::divergence: return MSC_ERR_DIVERGENCE;
    case errc::empty_feature: return MSC_ERR_EMPTY_FEATURE;
  }
  return MSC_ERR_UNKNOWN;
}

template <typename Fn>
msc_status guarded(Fn&& fn) {
  try {
    fn();
    return MSC_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MSC_ERR_UNKNOWN;
  } catch (...) {
    g_last_error = "unknown error";
    return MSC_ERR_UNKNOWN;
  }
}

msc_status null_arg(const char* what) {
  g_last_error = std::string("null argument: ") + what;
  return MSC_ERR_NULL_ARGUMENT;
}

}  // namespace

struct msc_dataset {
  MultiStateDataset ds;
};

struct msc_simconfig {
  SimulationConfig cfg;
};

struct msc_cohort {
  SimulatedCohort cohort;
  SimulationConfig cfg;
};

struct msc_hyperparams {
  Hyperparams hp;
};

struct msc_fit_result {
  FitResult res;
};

extern "C" {

const char* msc_version(void) { return "1.0.0"; }

const char* msc_last_error(void) { return g_last_error.c_str(); }

/* ---- datasets ---------------------------------------------------------- */

msc_status msc_dataset_load(const char* covariates_csv, const char* transitions_csv,
                            const int* from_states, const int* to_states, int num_transitions,
                            msc_dataset** out) {
  if (!covariates_csv || !transitions_csv || !from_states || !to_states || !out)
    return null_arg("msc_dataset_load");
  return guarded([&]() {
    TransitionSpec spec;
    for (int k = 0; k < num_transitions; ++k)
      spec.transitions.emplace_back(from_states[k], to_states[k]);
    auto* handle = new msc_dataset{load_dataset(covariates_csv, transitions_csv, spec)};
    *out = handle;
  });
}

msc_status msc_dataset_load_dir(const char* data_dir, msc_dataset** out) {
  if (!data_dir || !out) return null_arg("msc_dataset_load_dir");
  return guarded([&]() { *out = new msc_dataset{load_dataset_dir(data_dir)}; });
}

msc_status msc_dataset_standardize(msc_dataset* ds) {
  if (!ds) return null_arg("msc_dataset_standardize");
  return guarded([&]() {
    auto [next, rep] = standardize(ds->ds);
    ds->ds = std::move(next);
  });
}

msc_status msc_dataset_correlation_filter(msc_dataset* ds, double threshold, const char* method) {
  if (!ds || !method) return null_arg("msc_dataset_correlation_filter");
  return guarded([&]() {
    CorrelationMethod m;
    if (std::strcmp(method, "pearson") == 0) {
      m = CorrelationMethod::pearson;
    } else if (std::strcmp(method, "spearman") == 0) {
      m = CorrelationMethod::spearman;
    } else {
      fail(errc::validation, "method must be pearson or spearman");
    }
    auto [next, rep] = correlation_filter(ds->ds, threshold, m);
    ds->ds = std::move(next);
  });
}

msc_status msc_dataset_write(const msc_dataset* ds, const char* covariates_csv,
                             const char* transitions_csv) {
  if (!ds || !covariates_csv || !transitions_csv) return null_arg("msc_dataset_write");
  return guarded([&]() { write_dataset(ds->ds, covariates_csv, transitions_csv); });
}

int msc_dataset_n(const msc_dataset* ds) { return ds ? ds->ds.n() : 0; }
int msc_dataset_p(const msc_dataset* ds) { return ds ? ds->ds.p() : 0; }
int msc_dataset_num_transitions(const msc_dataset* ds) {
  return ds ? ds->ds.num_transitions() : 0;
}
void msc_dataset_free(msc_dataset* ds) { delete ds; }

/* ---- simulation -------------------------------------------------------- */

msc_status msc_simconfig_create(msc_simconfig** out) {
  if (!out) return null_arg("msc_simconfig_create");
  return guarded([&]() { *out = new msc_simconfig{}; });
}

msc_status msc_simconfig_load(const char* config_path, msc_simconfig** out) {
  if (!config_path || !out) return null_arg("msc_simconfig_load");
  return guarded([&]() {
    *out = new msc_simconfig{simulation_config_from(parse_config_file(config_path))};
  });
}

msc_status msc_simconfig_set(msc_simconfig* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return null_arg("msc_simconfig_set");
  return guarded([&]() {
    // Snapshot the current config as key=value pairs, override one key, and
    // reparse so keys behave exactly as in the config file.
    const SimulationConfig& cur = cfg->cfg;
    std::map<std::string, std::string> snapshot;
    snapshot["n"] = std::to_string(cur.n);
    snapshot["p"] = std::to_string(cur.p);
    snapshot["K"] = std::to_string(cur.K);
    snapshot["C"] = std::to_string(cur.C);
    snapshot["tau"] = csv::format_double(cur.tau);
    snapshot["rho"] = csv::format_double(cur.rho);
    snapshot["s"] = csv::format_double(cur.s);
    snapshot["target_censoring"] = csv::format_double(cur.target_censoring);
    snapshot["target_gap"] = csv::format_double(cur.target_gap);
    snapshot["seed"] = std::to_string(cur.seed);
    snapshot["sigma_x"] = csv::format_double(cur.sigma_x);
    snapshot["sigma_lambda"] = csv::format_double(cur.sigma_lambda);
    auto join = [](const std::vector<double>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + csv::format_double(v[i]);
      return s;
    };
    if (!cur.pi.empty()) snapshot["pi"] = join(cur.pi);
    if (!cur.sigma_diag.empty()) snapshot["sigma_diag"] = join(cur.sigma_diag);
    if (!cur.weibull_scale.empty()) snapshot["weibull_scale"] = join(cur.weibull_scale);
    if (!cur.weibull_shape.empty()) snapshot["weibull_shape"] = join(cur.weibull_shape);
    snapshot[key] = value;
    cfg->cfg = simulation_config_from(snapshot);
  });
}

void msc_simconfig_free(msc_simconfig* cfg) { delete cfg; }

msc_status msc_simulate(const msc_simconfig* cfg, msc_cohort** out) {
  if (!cfg || !out) return null_arg("msc_simulate");
  return guarded([&]() { *out = new msc_cohort{generate(cfg->cfg), cfg->cfg}; });
}

msc_status msc_cohort_write(const msc_cohort* cohort, const char* out_dir) {
  if (!cohort || !out_dir) return null_arg("msc_cohort_write");
  return guarded([&]() { write_cohort_files(cohort->cohort, cohort->cfg, out_dir); });
}

msc_status msc_cohort_dataset(const msc_cohort* cohort, msc_dataset** out) {
  if (!cohort || !out) return null_arg("msc_cohort_dataset");
  return guarded([&]() { *out = new msc_dataset{cohort->cohort.ds}; });
}

int msc_cohort_n(const msc_cohort* cohort) { return cohort ? cohort->cohort.ds.n() : 0; }

msc_status msc_cohort_true_clusters(const msc_cohort* cohort, int* labels, size_t len) {
  if (!cohort || !labels) return null_arg("msc_cohort_true_clusters");
  return guarded([&]() {
    require(len >= cohort->cohort.true_clusters.size(), errc::validation,
            "label buffer too small");
    std::copy(cohort->cohort.true_clusters.begin(), cohort->cohort.true_clusters.end(), labels);
  });
}

double msc_cohort_censoring_horizon(const msc_cohort* cohort) {
  return cohort ? cohort->cohort.q_used : 0.0;
}

void msc_cohort_free(msc_cohort* cohort) { delete cohort; }

/* ---- hyperparameters ---------------------------------------------------- */

msc_status msc_hyperparams_create(msc_hyperparams** out) {
  if (!out) return null_arg("msc_hyperparams_create");
  return guarded([&]() { *out = new msc_hyperparams{}; });
}

msc_status msc_hyperparams_load(const char* path, msc_hyperparams** out) {
  if (!path || !out) return null_arg("msc_hyperparams_load");
  return guarded(
      [&]() { *out = new msc_hyperparams{hyperparams_from(parse_config_file(path))}; });
}

msc_status msc_hyperparams_set(msc_hyperparams* hp, const char* key, const char* value) {
  if (!hp || !key || !value) return null_arg("msc_hyperparams_set");
  return guarded([&]() {
    Hyperparams& h = hp->hp;
    std::map<std::string, std::string> snapshot;
    snapshot["eta"] = csv::format_double(h.eta);
    snapshot["gamma"] = csv::format_double(h.gamma);
    snapshot["mu"] = csv::format_double(h.mu);
    snapshot["lambda_mode"] = h.adaptive ? "adaptive" : "global";
    snapshot["kappa"] = std::to_string(h.kappa);
    snapshot["lambda"] = csv::format_double(h.lambda);
    snapshot["alpha"] = csv::format_double(h.alpha_spec);
    snapshot["c"] = std::to_string(h.c);
    snapshot["outer_tol"] = csv::format_double(h.outer_tol);
    snapshot["max_outer"] = std::to_string(h.max_outer);
    snapshot["inner_tol"] = csv::format_double(h.inner_tol);
    snapshot["max_inner"] = std::to_string(h.max_inner);
    snapshot["edge_tol"] = csv::format_double(h.edge_tol);
    require(snapshot.count(key), errc::parse, std::string("unknown hyperparameter key '") + key + "'");
    snapshot[key] = value;
    h = hyperparams_from(snapshot);
  });
}

void msc_hyperparams_free(msc_hyperparams* hp) { delete hp; }

/* ---- fitting ------------------------------------------------------------ */

msc_status msc_fit(const msc_dataset* ds, const msc_hyperparams* hp, msc_fit_result** out) {
  if (!ds || !hp || !out) return null_arg("msc_fit");
  return guarded([&]() { *out = new msc_fit_result{fit(ds->ds, hp->hp)}; });
}

msc_status msc_baseline_fit(const msc_dataset* ds, const char* variant, const msc_hyperparams* hp,
                            msc_fit_result** out) {
  if (!ds || !variant || !hp || !out) return null_arg("msc_baseline_fit");
  return guarded([&]() {
    BaselineVariant v;
    if (std::strcmp(variant, "cox_only") == 0) {
      v = BaselineVariant::cox_only;
    } else if (std::strcmp(variant, "fixed_rbf_graph") == 0) {
      v = BaselineVariant::fixed_rbf_graph;
    } else if (std::strcmp(variant, "knn_graph") == 0) {
      v = BaselineVariant::knn_graph;
    } else {
      fail(errc::validation, std::string("unknown baseline variant '") + variant + "'");
    }
    *out = new msc_fit_result{baseline_fit(ds->ds, v, hp->hp)};
  });
}

int msc_fit_result_converged(const msc_fit_result* res) {
  return res && res->res.converged ? 1 : 0;
}

int msc_fit_result_iterations(const msc_fit_result* res) { return res ? res->res.iterations : 0; }

int msc_fit_result_clusters_valid(const msc_fit_result* res) {
  return res && res->res.clusters_valid ? 1 : 0;
}

msc_status msc_fit_result_labels(const msc_fit_result* res, int* labels, size_t len) {
  if (!res || !labels) return null_arg("msc_fit_result_labels");
  return guarded([&]() {
    require(len >= res->res.clusters.labels.size(), errc::validation, "label buffer too small");
    std::copy(res->res.clusters.labels.begin(), res->res.clusters.labels.end(), labels);
  });
}

msc_status msc_fit_result_objective_trace(const msc_fit_result* res, double* values, size_t len,
                                          size_t* written) {
  if (!res || !values || !written) return null_arg("msc_fit_result_objective_trace");
  return guarded([&]() {
    const auto& trace = res->res.objective_trace;
    require(len >= trace.size(), errc::validation, "trace buffer too small");
    std::copy(trace.begin(), trace.end(), values);
    *written = trace.size();
  });
}

int msc_fit_result_beta_size(const msc_fit_result* res, int transition) {
  if (!res || transition < 0 || transition >= static_cast<int>(res->res.beta.beta.size()))
    return -1;
  return static_cast<int>(res->res.beta.beta[transition].size());
}

msc_status msc_fit_result_beta(const msc_fit_result* res, int transition, double* values,
                               size_t len) {
  if (!res || !values) return null_arg("msc_fit_result_beta");
  return guarded([&]() {
    require(transition >= 0 && transition < static_cast<int>(res->res.beta.beta.size()),
            errc::validation, "transition index out of range");
    const Vector& b = res->res.beta.beta[transition];
    require(len >= static_cast<size_t>(b.size()), errc::validation, "beta buffer too small");
    for (Eigen::Index i = 0; i < b.size(); ++i) values[i] = b(i);
  });
}

msc_status msc_fit_result_weight(const msc_fit_result* res, int transition, double* out) {
  if (!res || !out) return null_arg("msc_fit_result_weight");
  return guarded([&]() {
    require(transition >= 0 && transition < static_cast<int>(res->res.weights.w.size()),
            errc::validation, "transition index out of range");
    *out = res->res.weights.w[transition];
  });
}

msc_status msc_fit_result_similarity(const msc_fit_result* res, double* values, size_t len) {
  if (!res || !values) return null_arg("msc_fit_result_similarity");
  return guarded([&]() {
    const Matrix& S = res->res.S.S;
    size_t need = static_cast<size_t>(S.rows()) * S.cols();
    require(len >= need, errc::validation, "similarity buffer too small");
    for (Eigen::Index i = 0; i < S.rows(); ++i)
      for (Eigen::Index j = 0; j < S.cols(); ++j)
        values[static_cast<size_t>(i) * S.cols() + j] = S(i, j);
  });
}

void msc_fit_result_free(msc_fit_result* res) { delete res; }

/* ---- command runners ----------------------------------------------------- */

int msc_cmd_simulate(const char* config_path, const char* out_dir, int64_t seed_override) {
  if (!config_path || !out_dir) return 2;
  return cmd_simulate(config_path, out_dir, seed_override);
}

int msc_cmd_fit(const char* data_dir, const char* hyperparams_path, const char* out_dir,
                int emit_similarity) {
  if (!data_dir || !hyperparams_path || !out_dir) return 2;
  FitOptions opts;
  opts.emit_similarity = emit_similarity != 0;
  return cmd_fit(data_dir, hyperparams_path, out_dir, opts);
}

int msc_cmd_evaluate(const char* data_dir, const char* fit_dir, const char* out_dir) {
  if (!data_dir || !fit_dir || !out_dir) return 2;
  return cmd_evaluate(data_dir, fit_dir, out_dir);
}

int msc_cmd_gridsearch(const char* data_dir, const char* grid_csv, const char* out_dir,
                       int threads) {
  if (!data_dir || !grid_csv || !out_dir) return 2;
  return cmd_gridsearch(data_dir, grid_csv, out_dir, threads);
}

int msc_cmd_benchmark(const char* plan_path, const char* out_dir, int threads) {
  if (!plan_path || !out_dir) return 2;
  return cmd_benchmark(plan_path, out_dir, threads);
}

}  // extern "C"
