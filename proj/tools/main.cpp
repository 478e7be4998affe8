// Command-line front end; everything behind it goes through the C API.

#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>

#include "mscluster.h"

int main(int argc, char** argv) {
  CLI::App app{"mscluster: joint survival-graph patient subtyping"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(msc_version()));

  std::string config_path, data_dir, hp_path, grid_csv, fit_dir, plan_path, out_dir;
  std::int64_t seed = -1;
  int threads = 1;
  bool emit_similarity = false;

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic multi-state cohort");
  simulate->add_option("config", config_path, "key=value simulation config")->required();
  simulate->add_option("--out", out_dir, "output directory")->required();
  simulate->add_option("--seed", seed, "override the config seed");

  auto* fit = app.add_subcommand("fit", "Fit the joint model on a dataset directory");
  fit->add_option("data", data_dir, "dataset directory")->required();
  fit->add_option("hyperparams", hp_path, "key=value hyperparameter file")->required();
  fit->add_option("--out", out_dir, "output directory")->required();
  fit->add_flag("--emit-similarity", emit_similarity, "also write S.csv and L.csv");

  auto* evaluate = app.add_subcommand("evaluate", "Recompute metrics for an existing fit");
  evaluate->add_option("data", data_dir, "dataset directory")->required();
  evaluate->add_option("fit", fit_dir, "fit output directory")->required();
  evaluate->add_option("--out", out_dir, "output directory")->required();

  auto* gridsearch = app.add_subcommand("gridsearch", "Grid search over hyperparameters");
  gridsearch->add_option("data", data_dir, "dataset directory")->required();
  gridsearch->add_option("grid", grid_csv, "grid CSV (eta,gamma,mu,kappa_or_lambda,alpha,c)")
      ->required();
  gridsearch->add_option("--out", out_dir, "output directory")->required();
  gridsearch->add_option("--threads", threads, "worker threads");

  auto* benchmark = app.add_subcommand("benchmark", "Run an experiment plan with replicates");
  benchmark->add_option("plan", plan_path, "key=value experiment plan")->required();
  benchmark->add_option("--out", out_dir, "output directory")->required();
  benchmark->add_option("--threads", threads, "worker threads");

  CLI11_PARSE(app, argc, argv);

  if (simulate->parsed()) return msc_cmd_simulate(config_path.c_str(), out_dir.c_str(), seed);
  if (fit->parsed())
    return msc_cmd_fit(data_dir.c_str(), hp_path.c_str(), out_dir.c_str(), emit_similarity ? 1 : 0);
  if (evaluate->parsed())
    return msc_cmd_evaluate(data_dir.c_str(), fit_dir.c_str(), out_dir.c_str());
  if (gridsearch->parsed())
    return msc_cmd_gridsearch(data_dir.c_str(), grid_csv.c_str(), out_dir.c_str(), threads);
  if (benchmark->parsed())
    return msc_cmd_benchmark(plan_path.c_str(), out_dir.c_str(), threads);
  std::fprintf(stderr, "no subcommand\n");
  return 2;
}
