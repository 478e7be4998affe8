#pragma once

#include <map>
#include <string>
#include <vector>

#include "common.hpp"
#include "hyperparams.hpp"
#include "optimizer.hpp"
#include "simulation.hpp"

namespace mscluster {

// key=value config files ('#' starts a comment); unknown keys are an error.
std::map<std::string, std::string> parse_config_file(const std::string& path);

SimulationConfig simulation_config_from(const std::map<std::string, std::string>& kv);
Hyperparams hyperparams_from(const std::map<std::string, std::string>& kv,
                             const std::string& prefix = "");

struct FitOptions {
  bool emit_similarity = false;
  bool correlation_filter = true;
  double correlation_threshold = 0.9;
  std::string correlation_method = "pearson";
  std::int64_t seed_override = -1;  // reserved; fits are deterministic
};

struct ExperimentPlan {
  std::string sweep_dimension = "n";  // n | p | K | C | censoring | tau
  std::vector<double> values;
  int replicates = 30;
  std::vector<std::string> variants = {"full", "cox_only", "fixed_rbf_graph", "knn_graph"};
  SimulationConfig base;
  Hyperparams hp;
  std::vector<int> runtime_ns = {100, 200, 400, 800};
  int runtime_replicates = 3;
  int ablation_replicates = 3;
};

ExperimentPlan plan_from(const std::map<std::string, std::string>& kv);

// Command entry points; they write outputs under out_dir and return a process
// exit code (0 ok, 2 parse/validation, 1 other failures).
int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::int64_t seed_override = -1);
int cmd_fit(const std::string& data_dir, const std::string& hyperparams_path,
            const std::string& out_dir, const FitOptions& opts = {});
int cmd_evaluate(const std::string& data_dir, const std::string& fit_dir,
                 const std::string& out_dir);
int cmd_gridsearch(const std::string& data_dir, const std::string& grid_csv,
                   const std::string& out_dir, int threads = 1);
int cmd_benchmark(const std::string& plan_path, const std::string& out_dir, int threads = 1);

double wall_seconds();
double peak_rss_mb();

// Writes the cohort CSVs (dataset, spec, truth files, S*) plus the effective
// config with tuned bandwidths and the calibrated censoring horizon.
void write_cohort_files(const SimulatedCohort& cohort, const SimulationConfig& cfg,
                        const std::string& out_dir);

// Loads covariates.csv/transitions.csv (+ transition_spec.csv when present,
// chain inferred from the largest transition id otherwise).
MultiStateDataset load_dataset_dir(const std::string& data_dir,
                                   std::vector<std::string>* warnings = nullptr);

struct TruthFiles {
  bool present = false;
  std::vector<int> clusters;
  Matrix s_star;
};

TruthFiles load_truth(const std::string& data_dir, const std::vector<std::string>& patient_ids);

}  // namespace mscluster
