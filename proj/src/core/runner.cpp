#include "runner.hpp"

#include <sys/resource.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "csv.hpp"
#include "evaluation.hpp"

namespace fs = std::filesystem;

namespace mscluster {

double wall_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

double peak_rss_mb() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream ss(line.substr(6));
      double kb = 0.0;
      ss >> kb;
      return kb / 1024.0;
    }
  }
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) == 0) return usage.ru_maxrss / 1024.0;
  return 0.0;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), errc::io, "cannot open config '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto strip = [](std::string s) {
      std::size_t b = s.find_first_not_of(" \t\r");
      std::size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = strip(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    require(eq != std::string::npos, errc::parse,
            path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = strip(line.substr(0, eq));
    std::string value = strip(line.substr(eq + 1));
    require(!key.empty(), errc::parse, path + ":" + std::to_string(lineno) + ": empty key");
    require(!kv.count(key), errc::parse,
            path + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

namespace {

std::vector<double> parse_list(const std::string& s, const std::string& context) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(csv::to_double(item, context));
  require(!out.empty(), errc::parse, context + ": empty list");
  return out;
}

double parse_num(const std::map<std::string, std::string>& kv, const std::string& key, double dflt) {
  auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  return csv::to_double(it->second, "config key " + key);
}

int parse_int(const std::map<std::string, std::string>& kv, const std::string& key, int dflt) {
  double v = parse_num(kv, key, dflt);
  int iv = static_cast<int>(v);
  require(v == iv, errc::parse, "config key " + key + " must be an integer");
  return iv;
}

const std::set<std::string> kSimKeys = {
    "n",     "p",           "K",          "C",        "pi",          "tau",
    "rho",   "sigma_diag",  "s",          "weibull_scale", "weibull_shape",
    "target_censoring",     "sigma_x",    "sigma_lambda",  "target_gap", "seed"};

const std::set<std::string> kHpKeys = {"eta",     "gamma",     "mu",        "lambda_mode",
                                       "kappa",   "lambda",    "alpha",     "c",
                                       "outer_tol", "max_outer", "inner_tol", "max_inner",
                                       "edge_tol"};

}  // namespace

SimulationConfig simulation_config_from(const std::map<std::string, std::string>& kv) {
  for (auto& [key, value] : kv)
    require(kSimKeys.count(key), errc::parse, "unknown simulation config key '" + key + "'");
  SimulationConfig cfg;
  cfg.n = parse_int(kv, "n", cfg.n);
  cfg.p = parse_int(kv, "p", cfg.p);
  cfg.K = parse_int(kv, "K", cfg.K);
  cfg.C = parse_int(kv, "C", cfg.C);
  cfg.tau = parse_num(kv, "tau", cfg.tau);
  cfg.rho = parse_num(kv, "rho", cfg.rho);
  cfg.s = parse_num(kv, "s", cfg.s);
  cfg.target_censoring = parse_num(kv, "target_censoring", cfg.target_censoring);
  cfg.target_gap = parse_num(kv, "target_gap", cfg.target_gap);
  cfg.seed = static_cast<std::uint64_t>(parse_num(kv, "seed", static_cast<double>(cfg.seed)));
  if (kv.count("pi")) cfg.pi = parse_list(kv.at("pi"), "pi");
  if (kv.count("sigma_diag")) cfg.sigma_diag = parse_list(kv.at("sigma_diag"), "sigma_diag");
  if (kv.count("weibull_scale")) cfg.weibull_scale = parse_list(kv.at("weibull_scale"), "weibull_scale");
  if (kv.count("weibull_shape")) cfg.weibull_shape = parse_list(kv.at("weibull_shape"), "weibull_shape");
  if (kv.count("sigma_x")) {
    cfg.sigma_x = kv.at("sigma_x") == "auto" ? -1.0 : csv::to_double(kv.at("sigma_x"), "sigma_x");
  }
  if (kv.count("sigma_lambda")) {
    cfg.sigma_lambda = kv.at("sigma_lambda") == "auto"
                           ? -1.0
                           : csv::to_double(kv.at("sigma_lambda"), "sigma_lambda");
  }
  cfg.validate();
  return cfg;
}

Hyperparams hyperparams_from(const std::map<std::string, std::string>& kv,
                             const std::string& prefix) {
  std::map<std::string, std::string> local;
  for (auto& [key, value] : kv) {
    if (prefix.empty()) {
      local[key] = value;
    } else if (key.rfind(prefix, 0) == 0) {
      local[key.substr(prefix.size())] = value;
    }
  }
  if (prefix.empty())
    for (auto& [key, value] : local)
      require(kHpKeys.count(key), errc::parse, "unknown hyperparameter key '" + key + "'");
  Hyperparams hp;
  hp.eta = parse_num(local, "eta", hp.eta);
  hp.gamma = parse_num(local, "gamma", hp.gamma);
  hp.mu = parse_num(local, "mu", hp.mu);
  if (local.count("lambda_mode")) {
    const std::string& mode = local.at("lambda_mode");
    require(mode == "adaptive" || mode == "global", errc::parse,
            "lambda_mode must be adaptive or global");
    hp.adaptive = mode == "adaptive";
  }
  hp.kappa = parse_int(local, "kappa", hp.kappa);
  hp.lambda = parse_num(local, "lambda", hp.lambda);
  hp.alpha_spec = parse_num(local, "alpha", hp.alpha_spec);
  hp.c = parse_int(local, "c", hp.c);
  hp.outer_tol = parse_num(local, "outer_tol", hp.outer_tol);
  hp.max_outer = parse_int(local, "max_outer", hp.max_outer);
  hp.inner_tol = parse_num(local, "inner_tol", hp.inner_tol);
  hp.max_inner = parse_int(local, "max_inner", hp.max_inner);
  hp.edge_tol = parse_num(local, "edge_tol", hp.edge_tol);
  return hp;
}

ExperimentPlan plan_from(const std::map<std::string, std::string>& kv) {
  ExperimentPlan plan;
  std::map<std::string, std::string> base_kv, hp_kv;
  for (auto& [key, value] : kv) {
    if (key.rfind("base.", 0) == 0) {
      base_kv[key.substr(5)] = value;
    } else if (key.rfind("hyperparams.", 0) == 0) {
      hp_kv[key.substr(12)] = value;
    } else if (key == "sweep_dimension") {
      plan.sweep_dimension = value;
    } else if (key == "values") {
      plan.values = parse_list(value, "values");
    } else if (key == "replicates") {
      plan.replicates = parse_int(kv, key, plan.replicates);
    } else if (key == "runtime_replicates") {
      plan.runtime_replicates = parse_int(kv, key, plan.runtime_replicates);
    } else if (key == "ablation_replicates") {
      plan.ablation_replicates = parse_int(kv, key, plan.ablation_replicates);
    } else if (key == "runtime_ns") {
      plan.runtime_ns.clear();
      for (double v : parse_list(value, "runtime_ns")) plan.runtime_ns.push_back(static_cast<int>(v));
    } else if (key == "variants") {
      plan.variants.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) plan.variants.push_back(item);
    } else {
      fail(errc::parse, "unknown plan key '" + key + "'");
    }
  }
  plan.base = simulation_config_from(base_kv);
  plan.hp = hyperparams_from(hp_kv, "");
  require(!plan.values.empty(), errc::parse, "plan needs a nonempty values list");
  require(plan.replicates >= 1, errc::parse, "replicates must be >= 1");
  const std::set<std::string> dims = {"n", "p", "K", "C", "censoring", "tau"};
  require(dims.count(plan.sweep_dimension), errc::parse,
          "sweep_dimension must be one of n,p,K,C,censoring,tau");
  const std::set<std::string> variants = {"full", "cox_only", "fixed_rbf_graph", "knn_graph"};
  for (auto& v : plan.variants)
    require(variants.count(v), errc::parse, "unknown model variant '" + v + "'");
  return plan;
}

MultiStateDataset load_dataset_dir(const std::string& data_dir, std::vector<std::string>* warnings) {
  std::string cov = data_dir + "/covariates.csv";
  std::string trans = data_dir + "/transitions.csv";
  std::string spec_path = data_dir + "/transition_spec.csv";
  TransitionSpec spec;
  if (fs::exists(spec_path)) {
    auto t = csv::read_file(spec_path);
    int c_from = t.col_required("from_state");
    int c_to = t.col_required("to_state");
    for (auto& r : t.rows)
      spec.transitions.emplace_back(static_cast<int>(csv::to_double(r[c_from], spec_path)),
                                    static_cast<int>(csv::to_double(r[c_to], spec_path)));
    spec.validate();
  } else {
    auto t = csv::read_file(trans);
    int kcol = t.col_required("transition_id");
    int kmax = 0;
    for (auto& r : t.rows) kmax = std::max(kmax, static_cast<int>(csv::to_double(r[kcol], trans)));
    require(kmax >= 1, errc::validation, trans + ": no transitions");
    spec = TransitionSpec::chain(kmax);
  }
  return load_dataset(cov, trans, spec, warnings);
}

TruthFiles load_truth(const std::string& data_dir, const std::vector<std::string>& patient_ids) {
  TruthFiles truth;
  std::string clusters_path = data_dir + "/truth_clusters.csv";
  if (!fs::exists(clusters_path)) return truth;
  auto t = csv::read_file(clusters_path);
  int c_id = t.col_required("patient_id");
  int c_cl = t.col_required("cluster");
  std::map<std::string, int> by_id;
  for (auto& r : t.rows) by_id[r[c_id]] = static_cast<int>(csv::to_double(r[c_cl], clusters_path));
  truth.clusters.reserve(patient_ids.size());
  for (auto& pid : patient_ids) {
    auto it = by_id.find(pid);
    require(it != by_id.end(), errc::join, "truth_clusters.csv missing patient '" + pid + "'");
    truth.clusters.push_back(it->second);
  }
  std::string s_path = data_dir + "/s_star.csv";
  if (fs::exists(s_path)) truth.s_star = csv::read_matrix(s_path);
  truth.present = true;
  return truth;
}

namespace {

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case errc::parse:
    case errc::validation:
    case errc::schema:
      return 2;
    default:
      return 1;
  }
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, errc::io, "cannot create directory '" + dir + "'");
}

void write_kv_file(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream out(path);
  require(out.good(), errc::io, "cannot write '" + path + "'");
  for (auto& [k, v] : kv) out << k << "=" << v << "\n";
}

std::string fmt(double v) { return csv::format_double(v); }

struct MetricsAccumulator {
  std::vector<std::pair<std::string, std::string>> rows;
  void add(const std::string& key, double value) { rows.emplace_back(key, fmt(value)); }
  void add(const std::string& key, const std::string& value) { rows.emplace_back(key, value); }
};

// Per-transition survival metrics restricted to at-risk patients.
void survival_metrics(const MultiStateDataset& ds, const FitResult& res, MetricsAccumulator& acc) {
  double ci_sum = 0.0, auroc_sum = 0.0;
  int ci_used = 0, auroc_used = 0;
  for (int k = 0; k < ds.num_transitions(); ++k) {
    std::vector<int> rows;
    for (int i = 0; i < ds.n(); ++i)
      if (ds.at_risk[k](i) == 1.0) rows.push_back(i);
    Vector risk_all = risk_scores(ds, res.beta, k);
    Vector risk(rows.size()), times(rows.size()), events(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
      risk(t) = risk_all(rows[t]);
      times(t) = ds.time[k](rows[t]);
      events(t) = ds.event[k](rows[t]);
    }
    try {
      double ci = c_index(risk, times, events);
      acc.add("c_index_transition_" + std::to_string(k + 1), ci);
      ci_sum += ci;
      ++ci_used;
    } catch (const Error&) {
      acc.add("c_index_transition_" + std::to_string(k + 1), "nan");
    }
    try {
      double auc = time_dependent_auroc(risk, times, events);
      acc.add("td_auroc_transition_" + std::to_string(k + 1), auc);
      auroc_sum += auc;
      ++auroc_used;
    } catch (const Error&) {
      acc.add("td_auroc_transition_" + std::to_string(k + 1), "nan");
    }
  }
  acc.add("c_index_mean", ci_used ? ci_sum / ci_used : std::nan(""));
  acc.add("td_auroc_mean", auroc_used ? auroc_sum / auroc_used : std::nan(""));
  auto sparsity = sparsity_ratio(res.beta);
  double sp_sum = 0.0;
  for (std::size_t k = 0; k < sparsity.size(); ++k) {
    acc.add("sparsity_transition_" + std::to_string(k + 1), sparsity[k]);
    sp_sum += sparsity[k];
  }
  acc.add("sparsity_mean", sp_sum / sparsity.size());
}

void cluster_metrics(const MultiStateDataset& ds, const FitResult& res, const TruthFiles& truth,
                     MetricsAccumulator& acc) {
  if (!res.clusters_valid) {
    acc.add("clusters_valid", "0");
    return;
  }
  acc.add("clusters_valid", "1");
  acc.add("cluster_method",
          res.clusters.method == ClusterAssignment::Method::components ? "components" : "kmeans-on-U");
  std::set<int> distinct(res.clusters.labels.begin(), res.clusters.labels.end());
  acc.add("clusters_found", static_cast<double>(distinct.size()));
  for (int k = 0; k < ds.num_transitions(); ++k) {
    std::vector<int> rows;
    for (int i = 0; i < ds.n(); ++i)
      if (ds.at_risk[k](i) == 1.0) rows.push_back(i);
    Vector times(rows.size()), events(rows.size());
    std::vector<int> groups(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
      times(t) = ds.time[k](rows[t]);
      events(t) = ds.event[k](rows[t]);
      groups[t] = res.clusters.labels[rows[t]];
    }
    try {
      auto lr = logrank_test(times, events, groups);
      acc.add("logrank_chi2_transition_" + std::to_string(k + 1), lr.chi2);
      acc.add("logrank_df_transition_" + std::to_string(k + 1), static_cast<double>(lr.df));
      acc.add("logrank_p_transition_" + std::to_string(k + 1), lr.p);
    } catch (const Error&) {
      acc.add("logrank_p_transition_" + std::to_string(k + 1), "nan");
    }
  }
  if (truth.present) {
    acc.add("ari", adjusted_rand_index(res.clusters.labels, truth.clusters));
    acc.add("ami", adjusted_mutual_information(res.clusters.labels, truth.clusters));
    int n = ds.n();
    Matrix mask(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        mask(i, j) = truth.clusters[i] == truth.clusters[j] ? 1.0 : 0.0;
    Matrix s_star = truth.s_star.size() ? truth.s_star : Matrix::Zero(n, n);
    try {
      acc.add("edge_auc", edge_auc(res.S.S, s_star, mask));
    } catch (const Error&) {
      acc.add("edge_auc", "nan");
    }
  }
}

void write_curves(const MultiStateDataset& ds, const FitResult& res, const std::string& out_dir) {
  if (!res.clusters_valid) return;
  for (int k = 0; k < ds.num_transitions(); ++k) {
    csv::Writer w(out_dir + "/km_transition_" + std::to_string(k + 1) + ".csv");
    w.row({"group", "time", "survival", "at_risk", "transition_probability"});
    std::set<int> groups(res.clusters.labels.begin(), res.clusters.labels.end());
    for (int g : groups) {
      std::vector<double> t_v, e_v;
      for (int i = 0; i < ds.n(); ++i)
        if (ds.at_risk[k](i) == 1.0 && res.clusters.labels[i] == g) {
          t_v.push_back(ds.time[k](i));
          e_v.push_back(ds.event[k](i));
        }
      if (t_v.empty()) continue;
      Vector times = Eigen::Map<Vector>(t_v.data(), t_v.size());
      Vector events = Eigen::Map<Vector>(e_v.data(), e_v.size());
      auto curve = kaplan_meier(times, events);
      for (std::size_t i = 0; i < curve.times.size(); ++i)
        w.row({std::to_string(g), fmt(curve.times[i]), fmt(curve.survival[i]),
               std::to_string(curve.at_risk[i]), fmt(1.0 - curve.survival[i])});
    }
    w.close();
  }
}

void write_fit_outputs(const MultiStateDataset& ds, const FitResult& res,
                       const std::string& out_dir, bool emit_similarity) {
  {
    csv::Writer w(out_dir + "/clusters.csv");
    w.row({"patient_id", "cluster"});
    for (int i = 0; i < ds.n(); ++i)
      w.row({ds.patient_ids[i],
             res.clusters_valid ? std::to_string(res.clusters.labels[i]) : "NA"});
    w.close();
  }
  {
    csv::Writer w(out_dir + "/beta.csv");
    w.row({"transition_id", "feature", "value"});
    for (int k = 0; k < ds.num_transitions(); ++k)
      for (int j = 0; j < ds.p_k(k); ++j)
        w.row({std::to_string(k + 1), ds.feature_names[ds.transition_cols[k][j]],
               fmt(res.beta.beta[k](j))});
    w.close();
  }
  {
    csv::Writer w(out_dir + "/weights.csv");
    w.row({"transition_id", "weight"});
    for (int k = 0; k < ds.num_transitions(); ++k)
      w.row({std::to_string(k + 1), fmt(res.weights.w[k])});
    w.close();
  }
  {
    csv::Writer w(out_dir + "/objective_trace.csv");
    w.row({"iteration", "step", "objective"});
    for (auto& rec : res.step_trace)
      w.row({std::to_string(rec.iteration), std::to_string(rec.step), fmt(rec.objective)});
    w.close();
  }
  if (emit_similarity) {
    csv::write_matrix(out_dir + "/S.csv", res.S.S);
    csv::write_matrix(out_dir + "/L.csv", build_laplacian(res.S).L);
  }
  write_curves(ds, res, out_dir);
}

std::pair<MultiStateDataset, std::vector<std::string>> preprocess(const MultiStateDataset& raw,
                                                                  const FitOptions& opts) {
  std::vector<std::string> notes;
  auto [standardized, rep1] = standardize(raw);
  for (auto& d : rep1.dropped) notes.push_back("dropped " + d.name + " (" + d.reason + ")");
  MultiStateDataset ds = std::move(standardized);
  if (opts.correlation_filter) {
    CorrelationMethod method;
    if (opts.correlation_method == "pearson") {
      method = CorrelationMethod::pearson;
    } else if (opts.correlation_method == "spearman") {
      method = CorrelationMethod::spearman;
    } else {
      fail(errc::parse, "correlation method must be pearson or spearman");
    }
    auto [filtered, rep2] = correlation_filter(ds, opts.correlation_threshold, method);
    for (auto& d : rep2.dropped) notes.push_back("dropped " + d.name + " (" + d.reason + ")");
    ds = std::move(filtered);
  }
  return {std::move(ds), std::move(notes)};
}

}  // namespace

void write_cohort_files(const SimulatedCohort& cohort, const SimulationConfig& cfg,
                        const std::string& out_dir) {
  ensure_dir(out_dir);
  write_dataset(cohort.ds, out_dir + "/covariates.csv", out_dir + "/transitions.csv");
  {
    csv::Writer w(out_dir + "/transition_spec.csv");
    w.row({"transition_id", "from_state", "to_state"});
    for (int k = 0; k < cohort.ds.num_transitions(); ++k)
      w.row({std::to_string(k + 1), std::to_string(cohort.ds.spec.transitions[k].first),
             std::to_string(cohort.ds.spec.transitions[k].second)});
    w.close();
  }
  {
    csv::Writer w(out_dir + "/truth_clusters.csv");
    w.row({"patient_id", "cluster"});
    for (int i = 0; i < cohort.ds.n(); ++i)
      w.row({cohort.ds.patient_ids[i], std::to_string(cohort.true_clusters[i])});
    w.close();
  }
  {
    csv::Writer w(out_dir + "/truth_beta.csv");
    w.row({"transition_id", "feature", "value"});
    for (int k = 0; k < cohort.ds.num_transitions(); ++k)
      for (int j = 0; j < cohort.ds.p(); ++j)
        w.row({std::to_string(k + 1), cohort.ds.feature_names[j], fmt(cohort.true_beta[k](j))});
    w.close();
  }
  csv::write_matrix(out_dir + "/s_star.csv", cohort.s_star);

  std::vector<std::pair<std::string, std::string>> eff;
  eff.emplace_back("n", std::to_string(cfg.n));
  eff.emplace_back("p", std::to_string(cfg.p));
  eff.emplace_back("K", std::to_string(cfg.K));
  eff.emplace_back("C", std::to_string(cfg.C));
  eff.emplace_back("tau", fmt(cfg.tau));
  eff.emplace_back("rho", fmt(cfg.rho));
  eff.emplace_back("s", fmt(cfg.s));
  eff.emplace_back("target_censoring", fmt(cfg.target_censoring));
  eff.emplace_back("seed", std::to_string(cfg.seed));
  eff.emplace_back("sigma_x", fmt(cohort.sigma_x));
  eff.emplace_back("sigma_lambda", fmt(cohort.sigma_lambda));
  eff.emplace_back("q", fmt(cohort.q_used));
  eff.emplace_back("achieved_gap", fmt(cohort.achieved_gap));
  write_kv_file(out_dir + "/effective_config.txt", eff);
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::int64_t seed_override) {
  try {
    auto kv = parse_config_file(config_path);
    SimulationConfig cfg = simulation_config_from(kv);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    SimulatedCohort cohort = generate(cfg);
    write_cohort_files(cohort, cfg, out_dir);
    for (auto& wmsg : cohort.warnings) std::cerr << "warning: " << wmsg << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << "simulate: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "simulate: " << e.what() << "\n";
    return 1;
  }
}

int cmd_fit(const std::string& data_dir, const std::string& hyperparams_path,
            const std::string& out_dir, const FitOptions& opts) {
  try {
    double t0 = wall_seconds();
    std::vector<std::string> warnings;
    MultiStateDataset raw = load_dataset_dir(data_dir, &warnings);
    auto [ds, notes] = preprocess(raw, opts);
    Hyperparams hp = hyperparams_from(parse_config_file(hyperparams_path));
    ensure_dir(out_dir);

    FitResult res = fit(ds, hp);
    write_fit_outputs(ds, res, out_dir, opts.emit_similarity);

    TruthFiles truth = load_truth(data_dir, ds.patient_ids);
    MetricsAccumulator acc;
    acc.add("n", static_cast<double>(ds.n()));
    acc.add("p", static_cast<double>(ds.p()));
    acc.add("K", static_cast<double>(ds.num_transitions()));
    acc.add("converged", res.converged ? "1" : "0");
    acc.add("iterations", static_cast<double>(res.iterations));
    acc.add("objective_final",
            res.objective_trace.empty() ? std::nan("") : res.objective_trace.back());
    survival_metrics(ds, res, acc);
    cluster_metrics(ds, res, truth, acc);
    if (res.clusters_valid) {
      std::set<int> distinct(res.clusters.labels.begin(), res.clusters.labels.end());
      if (distinct.size() == 2) {
        try {
          auto audit = cluster_feature_audit(ds, res.clusters.labels);
          acc.add("audit_auc", audit.auc);
          csv::Writer w(out_dir + "/significant_features.csv");
          w.row({"feature", "p_value"});
          for (auto& f : audit.significant) w.row({f.name, fmt(f.p_value)});
          w.close();
        } catch (const Error&) {
          acc.add("audit_auc", "nan");
        }
      }
    }
    acc.add("runtime_s", wall_seconds() - t0);
    acc.add("peak_mem_mb", peak_rss_mb());
    write_kv_file(out_dir + "/metrics.txt", acc.rows);
    for (auto& nmsg : notes) std::cerr << "note: " << nmsg << "\n";
    for (auto& wmsg : res.warnings) std::cerr << "warning: " << wmsg << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << "fit: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "fit: " << e.what() << "\n";
    return 1;
  }
}

int cmd_evaluate(const std::string& data_dir, const std::string& fit_dir,
                 const std::string& out_dir) {
  try {
    double t0 = wall_seconds();
    MultiStateDataset raw = load_dataset_dir(data_dir);
    auto [standardized, rep] = standardize(raw);
    MultiStateDataset ds = std::move(standardized);

    // Reconstruct coefficients by joining feature names against the
    // standardized dataset.
    auto beta_table = csv::read_file(fit_dir + "/beta.csv");
    int c_k = beta_table.col_required("transition_id");
    int c_f = beta_table.col_required("feature");
    int c_v = beta_table.col_required("value");
    std::map<std::string, int> col_of;
    for (int j = 0; j < ds.p(); ++j) col_of[ds.feature_names[j]] = j;
    int K = ds.num_transitions();
    std::vector<std::vector<int>> cols(K);
    std::vector<std::vector<double>> vals(K);
    for (auto& r : beta_table.rows) {
      int k = static_cast<int>(csv::to_double(r[c_k], "beta.csv")) - 1;
      require(k >= 0 && k < K, errc::validation, "beta.csv transition id out of range");
      auto it = col_of.find(r[c_f]);
      require(it != col_of.end(), errc::join, "beta.csv feature '" + r[c_f] + "' not in dataset");
      cols[k].push_back(it->second);
      vals[k].push_back(csv::to_double(r[c_v], "beta.csv"));
    }
    FitResult res;
    res.S = SimilarityMatrix::uniform(ds.n());
    for (int k = 0; k < K; ++k) {
      require(!cols[k].empty(), errc::validation,
              "beta.csv has no rows for transition " + std::to_string(k + 1));
      Vector b(cols[k].size());
      for (std::size_t t = 0; t < cols[k].size(); ++t) b(t) = vals[k][t];
      res.beta.beta.push_back(b);
      ds.transition_cols[k] = cols[k];
    }
    res.weights.w.assign(K, 1.0);

    auto clusters_table = csv::read_file(fit_dir + "/clusters.csv");
    int cc_id = clusters_table.col_required("patient_id");
    int cc_cl = clusters_table.col_required("cluster");
    std::map<std::string, std::string> label_of;
    for (auto& r : clusters_table.rows) label_of[r[cc_id]] = r[cc_cl];
    res.clusters_valid = true;
    for (auto& pid : ds.patient_ids) {
      auto it = label_of.find(pid);
      require(it != label_of.end(), errc::join, "clusters.csv missing patient '" + pid + "'");
      if (it->second == "NA") {
        res.clusters_valid = false;
        res.clusters.labels.push_back(0);
      } else {
        res.clusters.labels.push_back(static_cast<int>(csv::to_double(it->second, "clusters.csv")));
      }
    }
    if (fs::exists(fit_dir + "/S.csv")) {
      res.S.S = csv::read_matrix(fit_dir + "/S.csv");
      require(res.S.S.rows() == ds.n() && res.S.S.cols() == ds.n(), errc::validation,
              "S.csv shape does not match dataset");
    }

    ensure_dir(out_dir);
    TruthFiles truth = load_truth(data_dir, ds.patient_ids);
    MetricsAccumulator acc;
    acc.add("n", static_cast<double>(ds.n()));
    survival_metrics(ds, res, acc);
    cluster_metrics(ds, res, truth, acc);
    acc.add("runtime_s", wall_seconds() - t0);
    acc.add("peak_mem_mb", peak_rss_mb());
    write_kv_file(out_dir + "/metrics.txt", acc.rows);
    return 0;
  } catch (const Error& e) {
    std::cerr << "evaluate: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "evaluate: " << e.what() << "\n";
    return 1;
  }
}

namespace {

std::vector<Hyperparams> parse_grid_csv(const std::string& grid_csv) {
  auto t = csv::read_file(grid_csv);
  int c_eta = t.col_required("eta");
  int c_gamma = t.col_required("gamma");
  int c_mu = t.col_required("mu");
  int c_kl = t.col_required("kappa_or_lambda");
  int c_alpha = t.col_required("alpha");
  int c_c = t.col_required("c");
  std::vector<Hyperparams> grid;
  for (auto& r : t.rows) {
    Hyperparams hp;
    hp.eta = csv::to_double(r[c_eta], grid_csv);
    hp.gamma = csv::to_double(r[c_gamma], grid_csv);
    hp.mu = csv::to_double(r[c_mu], grid_csv);
    hp.alpha_spec = csv::to_double(r[c_alpha], grid_csv);
    hp.c = static_cast<int>(csv::to_double(r[c_c], grid_csv));
    // integer literal = adaptive kappa; decimal point = global lambda
    if (r[c_kl].find('.') == std::string::npos) {
      hp.adaptive = true;
      hp.kappa = static_cast<int>(csv::to_double(r[c_kl], grid_csv));
    } else {
      hp.adaptive = false;
      hp.lambda = csv::to_double(r[c_kl], grid_csv);
    }
    grid.push_back(hp);
  }
  require(!grid.empty(), errc::validation, grid_csv + ": empty grid");
  return grid;
}

std::string hp_description(const Hyperparams& hp) {
  std::ostringstream ss;
  ss << "eta=" << hp.eta << " gamma=" << hp.gamma << " mu=" << hp.mu;
  if (hp.adaptive)
    ss << " kappa=" << hp.kappa;
  else
    ss << " lambda=" << hp.lambda;
  ss << " alpha=" << hp.alpha_spec << " c=" << hp.c;
  return ss.str();
}

}  // namespace

int cmd_gridsearch(const std::string& data_dir, const std::string& grid_csv,
                   const std::string& out_dir, int threads) {
  (void)threads;  // candidates are fitted sequentially for deterministic warnings
  try {
    MultiStateDataset raw = load_dataset_dir(data_dir);
    auto [ds, notes] = preprocess(raw, FitOptions{});
    auto grid = parse_grid_csv(grid_csv);
    ensure_dir(out_dir);
    GridSearchResult res = grid_search(ds, grid, ds.num_transitions() - 1);

    csv::Writer w(out_dir + "/candidates.csv");
    w.row({"index", "eta", "gamma", "mu", "lambda_mode", "kappa", "lambda", "alpha", "c",
           "c_index", "logrank_p", "beta_l0", "converged", "selected"});
    for (std::size_t i = 0; i < res.candidates.size(); ++i) {
      const auto& cand = res.candidates[i];
      w.row({std::to_string(i), fmt(cand.hp.eta), fmt(cand.hp.gamma), fmt(cand.hp.mu),
             cand.hp.adaptive ? "adaptive" : "global", std::to_string(cand.hp.kappa),
             fmt(cand.hp.lambda), fmt(cand.hp.alpha_spec), std::to_string(cand.hp.c),
             fmt(cand.c_index), fmt(cand.logrank_p), std::to_string(cand.beta_l0),
             cand.converged ? "1" : "0",
             static_cast<int>(i) == res.selected ? "1" : "0"});
    }
    w.close();

    std::ofstream sel(out_dir + "/selected.txt");
    require(sel.good(), errc::io, "cannot write selected.txt");
    if (res.selected < 0)
      sel << "NONE\n";
    else
      sel << res.selected << " " << hp_description(res.candidates[res.selected].hp) << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << "gridsearch: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "gridsearch: " << e.what() << "\n";
    return 1;
  }
}

namespace {

struct CellResult {
  bool failed = false;
  std::string error;
  std::map<std::string, std::map<std::string, double>> metrics_by_variant;
};

SimulationConfig apply_dimension(SimulationConfig cfg, const std::string& dim, double value) {
  if (dim == "n")
    cfg.n = static_cast<int>(value);
  else if (dim == "p")
    cfg.p = static_cast<int>(value);
  else if (dim == "K")
    cfg.K = static_cast<int>(value);
  else if (dim == "C")
    cfg.C = static_cast<int>(value);
  else if (dim == "censoring")
    cfg.target_censoring = value;
  else if (dim == "tau")
    cfg.tau = value;
  return cfg;
}

std::map<std::string, double> evaluate_variant(const MultiStateDataset& ds, const FitResult& res,
                                               const std::vector<int>& truth_clusters,
                                               const Matrix& s_star, double seconds) {
  std::map<std::string, double> m;
  double ci_sum = 0.0, auc_sum = 0.0;
  int ci_used = 0, auc_used = 0;
  for (int k = 0; k < ds.num_transitions(); ++k) {
    std::vector<int> rows;
    for (int i = 0; i < ds.n(); ++i)
      if (ds.at_risk[k](i) == 1.0) rows.push_back(i);
    Vector risk_all = risk_scores(ds, res.beta, k);
    Vector risk(rows.size()), times(rows.size()), events(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
      risk(t) = risk_all(rows[t]);
      times(t) = ds.time[k](rows[t]);
      events(t) = ds.event[k](rows[t]);
    }
    try {
      ci_sum += c_index(risk, times, events);
      ++ci_used;
    } catch (const Error&) {
    }
    try {
      auc_sum += time_dependent_auroc(risk, times, events);
      ++auc_used;
    } catch (const Error&) {
    }
  }
  m["c_index"] = ci_used ? ci_sum / ci_used : std::nan("");
  m["td_auroc"] = auc_used ? auc_sum / auc_used : std::nan("");
  auto sparsity = sparsity_ratio(res.beta);
  double sp = 0.0;
  for (double v : sparsity) sp += v;
  m["sparsity_ratio"] = sp / sparsity.size();
  if (res.clusters_valid) {
    m["ari"] = adjusted_rand_index(res.clusters.labels, truth_clusters);
    m["ami"] = adjusted_mutual_information(res.clusters.labels, truth_clusters);
    int n = ds.n();
    Matrix mask(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) mask(i, j) = truth_clusters[i] == truth_clusters[j] ? 1.0 : 0.0;
    try {
      m["edge_auc"] = edge_auc(res.S.S, s_star, mask);
    } catch (const Error&) {
      m["edge_auc"] = std::nan("");
    }
  } else {
    m["ari"] = std::nan("");
    m["ami"] = std::nan("");
    m["edge_auc"] = std::nan("");
  }
  m["runtime_s"] = seconds;
  m["peak_mem_mb"] = peak_rss_mb();
  m["converged"] = res.converged ? 1.0 : 0.0;
  return m;
}

FitResult fit_variant(const MultiStateDataset& ds, const std::string& variant,
                      const Hyperparams& hp) {
  if (variant == "full") return fit(ds, hp);
  if (variant == "cox_only") return baseline_fit(ds, BaselineVariant::cox_only, hp);
  if (variant == "fixed_rbf_graph") return baseline_fit(ds, BaselineVariant::fixed_rbf_graph, hp);
  if (variant == "knn_graph") return baseline_fit(ds, BaselineVariant::knn_graph, hp);
  fail(errc::validation, "unknown variant '" + variant + "'");
}

void run_pool(std::vector<std::function<void()>>& jobs, int threads) {
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) break;
      jobs[i]();
    }
  };
  int actual = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < actual; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

struct Aggregate {
  double mean = std::nan("");
  double sd = std::nan("");
  int count = 0;
};

Aggregate aggregate(const std::vector<double>& values) {
  std::vector<double> v;
  for (double x : values)
    if (std::isfinite(x)) v.push_back(x);
  Aggregate a;
  a.count = static_cast<int>(v.size());
  if (v.empty()) return a;
  double m = 0.0;
  for (double x : v) m += x;
  m /= v.size();
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  a.mean = m;
  a.sd = v.size() > 1 ? std::sqrt(s2 / (v.size() - 1)) : 0.0;
  return a;
}

constexpr std::uint64_t kValueStride = 7919;  // seed spacing between sweep cells

}  // namespace

int cmd_benchmark(const std::string& plan_path, const std::string& out_dir, int threads) {
  try {
    ExperimentPlan plan = plan_from(parse_config_file(plan_path));
    ensure_dir(out_dir);

    const std::vector<std::string> metric_names = {"c_index", "td_auroc",  "ari",
                                                   "ami",     "sparsity_ratio", "edge_auc",
                                                   "runtime_s", "peak_mem_mb", "converged"};

    // --- sweep cells ---------------------------------------------------
    int n_values = static_cast<int>(plan.values.size());
    std::vector<CellResult> cells(n_values * plan.replicates);
    std::vector<std::function<void()>> jobs;
    for (int vi = 0; vi < n_values; ++vi) {
      for (int r = 0; r < plan.replicates; ++r) {
        jobs.emplace_back([&, vi, r]() {
          CellResult& cell = cells[vi * plan.replicates + r];
          try {
            SimulationConfig cfg = apply_dimension(plan.base, plan.sweep_dimension, plan.values[vi]);
            cfg.seed = plan.base.seed + kValueStride * vi + r;
            SimulatedCohort cohort = generate(cfg);
            auto [ds, notes] = preprocess(cohort.ds, FitOptions{});
            Hyperparams hp = plan.hp;
            hp.kappa = std::min(hp.kappa, ds.n() - 1);
            hp.c = std::min(hp.c, ds.n() - 1);
            for (auto& variant : plan.variants) {
              double t0 = wall_seconds();
              FitResult res = fit_variant(ds, variant, hp);
              cell.metrics_by_variant[variant] =
                  evaluate_variant(ds, res, cohort.true_clusters, cohort.s_star,
                                   wall_seconds() - t0);
            }
          } catch (const std::exception& e) {
            cell.failed = true;
            cell.error = e.what();
          }
        });
      }
    }
    run_pool(jobs, threads);

    int failed_cells = 0;
    {
      csv::Writer w(out_dir + "/summary.csv");
      w.row({"dimension", "value", "variant", "metric", "mean", "sd", "replicates"});
      for (int vi = 0; vi < n_values; ++vi) {
        for (auto& variant : plan.variants) {
          for (auto& metric : metric_names) {
            std::vector<double> vals;
            for (int r = 0; r < plan.replicates; ++r) {
              const CellResult& cell = cells[vi * plan.replicates + r];
              if (cell.failed) continue;
              auto it = cell.metrics_by_variant.find(variant);
              if (it == cell.metrics_by_variant.end()) continue;
              auto mt = it->second.find(metric);
              if (mt != it->second.end()) vals.push_back(mt->second);
            }
            Aggregate a = aggregate(vals);
            w.row({plan.sweep_dimension, fmt(plan.values[vi]), variant, metric, fmt(a.mean),
                   fmt(a.sd), std::to_string(a.count)});
          }
        }
      }
      w.close();
      for (auto& cell : cells)
        if (cell.failed) ++failed_cells;
    }
    {
      std::ofstream log(out_dir + "/failures.txt");
      for (int vi = 0; vi < n_values; ++vi)
        for (int r = 0; r < plan.replicates; ++r) {
          const CellResult& cell = cells[vi * plan.replicates + r];
          if (cell.failed)
            log << plan.sweep_dimension << "=" << plan.values[vi] << " replicate=" << r << ": "
                << cell.error << "\n";
        }
    }

    // --- ablation table (base config) ----------------------------------
    struct AblationConfig {
      std::string name;
      Hyperparams hp;
    };
    std::vector<AblationConfig> ablations;
    {
      Hyperparams full = plan.hp;
      Hyperparams g0 = full;
      g0.gamma = 0.0;
      Hyperparams l0 = full;
      l0.adaptive = false;
      l0.lambda = 1e-6;  // near-zero quadratic regularization; rows collapse
      Hyperparams e0 = full;
      e0.eta = 0.0;
      ablations = {{"gamma_0", g0}, {"lambda_0", l0}, {"eta_0", e0}, {"full", full}};
    }
    std::vector<CellResult> acells(ablations.size() * plan.ablation_replicates);
    std::vector<std::function<void()>> ajobs;
    for (std::size_t ai = 0; ai < ablations.size(); ++ai) {
      for (int r = 0; r < plan.ablation_replicates; ++r) {
        ajobs.emplace_back([&, ai, r]() {
          CellResult& cell = acells[ai * plan.ablation_replicates + r];
          try {
            SimulationConfig cfg = plan.base;
            cfg.seed = plan.base.seed + 31337 + r;
            SimulatedCohort cohort = generate(cfg);
            auto [ds, notes] = preprocess(cohort.ds, FitOptions{});
            Hyperparams hp = ablations[ai].hp;
            hp.kappa = std::min(hp.kappa, ds.n() - 1);
            double t0 = wall_seconds();
            FitResult res = fit(ds, hp);
            cell.metrics_by_variant["x"] = evaluate_variant(ds, res, cohort.true_clusters,
                                                            cohort.s_star, wall_seconds() - t0);
          } catch (const std::exception& e) {
            cell.failed = true;
            cell.error = e.what();
          }
        });
      }
    }
    run_pool(ajobs, threads);
    {
      csv::Writer w(out_dir + "/ablation.csv");
      w.row({"config", "metric", "mean", "sd", "replicates"});
      for (std::size_t ai = 0; ai < ablations.size(); ++ai) {
        for (auto& metric : metric_names) {
          std::vector<double> vals;
          for (int r = 0; r < plan.ablation_replicates; ++r) {
            const CellResult& cell = acells[ai * plan.ablation_replicates + r];
            if (cell.failed) continue;
            auto it = cell.metrics_by_variant.find("x");
            if (it != cell.metrics_by_variant.end() && it->second.count(metric))
              vals.push_back(it->second.at(metric));
          }
          Aggregate a = aggregate(vals);
          w.row({ablations[ai].name, metric, fmt(a.mean), fmt(a.sd), std::to_string(a.count)});
        }
      }
      w.close();
      for (auto& cell : acells)
        if (cell.failed) ++failed_cells;
    }

    // --- runtime scaling (sequential: timings must not contend) --------
    {
      csv::Writer w(out_dir + "/runtime_scaling.csv");
      w.row({"n", "replicate", "seconds", "peak_mem_mb"});
      std::vector<double> log_n, log_t;
      std::vector<std::pair<int, Aggregate>> per_n;
      for (std::size_t ni = 0; ni < plan.runtime_ns.size(); ++ni) {
        std::vector<double> secs;
        for (int r = 0; r < plan.runtime_replicates; ++r) {
          SimulationConfig cfg = plan.base;
          cfg.n = plan.runtime_ns[ni];
          cfg.seed = plan.base.seed + 77777 + kValueStride * ni + r;
          SimulatedCohort cohort = generate(cfg);
          auto [ds, notes] = preprocess(cohort.ds, FitOptions{});
          Hyperparams hp = plan.hp;
          hp.kappa = std::min(hp.kappa, ds.n() - 1);
          hp.c = std::min(hp.c, ds.n() - 1);
          double t0 = wall_seconds();
          FitResult res = fit(ds, hp);
          double dt = wall_seconds() - t0;
          (void)res;
          secs.push_back(dt);
          w.row({std::to_string(plan.runtime_ns[ni]), std::to_string(r), fmt(dt),
                 fmt(peak_rss_mb())});
          log_n.push_back(std::log(static_cast<double>(plan.runtime_ns[ni])));
          log_t.push_back(std::log(std::max(dt, 1e-9)));
        }
        per_n.emplace_back(plan.runtime_ns[ni], aggregate(secs));
      }
      w.close();
      // least squares slope on (log n, log seconds)
      double mx = 0.0, my = 0.0;
      for (std::size_t i = 0; i < log_n.size(); ++i) {
        mx += log_n[i];
        my += log_t[i];
      }
      mx /= log_n.size();
      my /= log_t.size();
      double sxy = 0.0, sxx = 0.0;
      for (std::size_t i = 0; i < log_n.size(); ++i) {
        sxy += (log_n[i] - mx) * (log_t[i] - my);
        sxx += (log_n[i] - mx) * (log_n[i] - mx);
      }
      double slope = sxx > 0.0 ? sxy / sxx : std::nan("");
      double intercept = my - slope * mx;
      std::vector<std::pair<std::string, std::string>> rows;
      rows.emplace_back("slope", fmt(slope));
      rows.emplace_back("intercept", fmt(intercept));
      for (auto& [nval, agg] : per_n)
        rows.emplace_back("mean_seconds_n" + std::to_string(nval), fmt(agg.mean));
      write_kv_file(out_dir + "/runtime_summary.txt", rows);
    }

    int total_cells = static_cast<int>(cells.size() + acells.size());
    if (failed_cells > 0)
      std::cerr << "benchmark: " << failed_cells << " of " << total_cells << " cells failed\n";
    return failed_cells == total_cells ? 1 : 0;
  } catch (const Error& e) {
    std::cerr << "benchmark: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "benchmark: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mscluster
